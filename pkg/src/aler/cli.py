"""Command-line entry points for the staged pipeline.

    aler synth      generate a planted-truth corpus plus a ready manifest
    aler ingest     normalize and persist embedding matrices
    aler index      build the similarity index over the target side
    aler partition  sample the query side and chunk it with K-Means
    aler train      run the active-learning loop (file or http oracle)
    aler resolve    run the two-stage cascade on held-out records
    aler eval       score the resolution output against ground truth

Exit codes: 0 success, 2 validation error, 3 budget exhausted, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import hnsw, ingest, loop, partition, report, resolve, synth
from .manifest import ManifestError, RunManifest, load_manifest
from .mlp import MlpModel, SingleClassError
from .oracle import BudgetExhaustedError, GroundTruthOracle, HumanOracle, LabelQueue, OracleBudget
from .service import LabelingService, RunStatus

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_BUDGET = 3


class _Paths:
    def __init__(self, output_dir: str | Path):
        self.root = Path(output_dir)
        self.embeddings_r = self.root / "embeddings_r.bin"
        self.embeddings_s = self.root / "embeddings_s.bin"
        self.index = self.root / "index.hnsw"
        self.chunks = self.root / "chunks.csv"
        self.model_r = self.root / "model_r.bin"
        self.model_p = self.root / "model_p.bin"
        self.thresholds = self.root / "thresholds.json"
        self.ledger = self.root / "ledger.csv"
        self.ledger_detail = self.root / "ledger_detail.csv"
        self.labels = self.root / "labels.csv"
        self.f1_history = self.root / "f1_history.csv"
        self.f1_figure = self.root / "f1_history.png"
        self.budget_figure = self.root / "budget.png"
        self.run_info = self.root / "run.json"
        self.candidates = self.root / "candidates.csv"
        self.matches = self.root / "matches.csv"
        self.metrics_txt = self.root / "metrics.txt"
        self.metrics_json = self.root / "metrics.json"
        self.metrics_figure = self.root / "metrics.png"


def _manifest_from(args) -> RunManifest:
    manifest = load_manifest(args.manifest, overrides=args.override)
    if not manifest.output_dir:
        manifest.output_dir = os.environ.get("ALER_ARTIFACT_DIR", "")
    return manifest


def _provenance(manifest: RunManifest) -> str:
    return f"aler config={manifest.config_hash()} seed={manifest.seed}"


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = synth.PerturbationSpec(
        typo_rate=args.typo_rate, token_drop=args.token_drop,
        abbreviation=args.abbreviation, distractor_rate=args.distractor_rate,
        seed=args.seed,
    )
    records_r, records_s, truth, emb_r, emb_s = synth.generate(args.n, spec, dim=args.dim)
    comment = f"aler synth n={args.n} seed={args.seed}"
    ingest.save_records(out / "records_r.csv", records_r, header_comment=comment)
    ingest.save_records(out / "records_s.csv", records_s, header_comment=comment)
    ingest.save_truth(out / "truth.csv", truth, header_comment=comment)
    ingest.save_embeddings(out / "embeddings_r.bin", emb_r, binary=True)
    ingest.save_embeddings(out / "embeddings_s.bin", emb_s, binary=True)
    manifest = RunManifest(
        records_r=str(out / "records_r.csv"), records_s=str(out / "records_s.csv"),
        embeddings_r=str(out / "embeddings_r.bin"), embeddings_s=str(out / "embeddings_s.bin"),
        truth=str(out / "truth.csv"), output_dir=str(out / "artifacts"),
        key_attrs=["title", "model"], seed=args.seed,
    )
    manifest.save(out / "manifest.txt")
    print(f"wrote corpus of {len(records_r)}x{len(records_s)} records, "
          f"{len(truth)} matches, manifest at {out / 'manifest.txt'}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    manifest = _manifest_from(args)
    paths = _Paths(manifest.output_dir)
    if manifest.encoder_endpoint:
        manifest.validate(require=("records_r", "records_s"))
    else:
        manifest.validate(require=("records_r", "records_s", "embeddings_r", "embeddings_s"))
    paths.root.mkdir(parents=True, exist_ok=True)
    records_r = ingest.load_records(manifest.records_r, manifest.id_column, manifest.delimiter)
    records_s = ingest.load_records(manifest.records_s, manifest.id_column, manifest.delimiter)
    if manifest.encoder_endpoint:
        emb_r = ingest.fetch_embeddings(manifest.encoder_endpoint, records_r, manifest.encoder_batch_size)
        emb_s = ingest.fetch_embeddings(manifest.encoder_endpoint, records_s, manifest.encoder_batch_size)
    else:
        emb_r = ingest.load_embeddings(manifest.embeddings_r)
        emb_s = ingest.load_embeddings(manifest.embeddings_s)
    ingest.check_coverage(emb_r, records_r)
    ingest.check_coverage(emb_s, records_s)
    ingest.save_embeddings(paths.embeddings_r, emb_r, binary=True)
    ingest.save_embeddings(paths.embeddings_s, emb_s, binary=True)
    print(f"ingested {len(emb_r)} + {len(emb_s)} embeddings (dim {emb_r.dim}) into {paths.root}")
    return EXIT_OK


def cmd_index(args) -> int:
    manifest = _manifest_from(args)
    paths = _Paths(manifest.output_dir)
    manifest.validate()
    if not paths.embeddings_s.exists():
        raise ManifestError(f"{paths.embeddings_s} missing; run 'aler ingest' first")
    emb_s = ingest.load_embeddings(paths.embeddings_s)
    index = hnsw.build_index(emb_s, manifest.index_params(), seed=manifest.seed)
    index.save(paths.index)
    print(f"indexed {len(emb_s)} vectors (M={manifest.index_m}, "
          f"ef_construction={manifest.index_ef_construction}) at {paths.index}")
    return EXIT_OK


def cmd_partition(args) -> int:
    manifest = _manifest_from(args)
    paths = _Paths(manifest.output_dir)
    manifest.validate()
    if not paths.embeddings_r.exists():
        raise ManifestError(f"{paths.embeddings_r} missing; run 'aler ingest' first")
    emb_r = ingest.load_embeddings(paths.embeddings_r)
    plan = partition.sample_records(emb_r.ids, manifest.g_s, manifest.seed)
    n = manifest.n_chunks or partition.chunk_count(len(plan.sampled_ids))
    chunk_set = partition.kmeans_partition(emb_r.subset(plan.sampled_ids), n, manifest.seed)
    partition.save_chunks(paths.chunks, chunk_set, header_comment=_provenance(manifest))
    sizes = [len(c) for c in chunk_set.chunks]
    print(f"sampled {len(plan.sampled_ids)} of {len(emb_r)} records into {n} chunks {sizes}")
    return EXIT_OK


def _load_stage(manifest: RunManifest, paths: _Paths):
    for p in (paths.embeddings_r, paths.embeddings_s, paths.index, paths.chunks):
        if not p.exists():
            raise ManifestError(f"{p} missing; run the staging commands first")
    emb_r = ingest.load_embeddings(paths.embeddings_r)
    emb_s = ingest.load_embeddings(paths.embeddings_s)
    index = hnsw.HnswIndex.load(paths.index)
    chunks = partition.load_chunks(paths.chunks)
    records_r = ingest.load_records(manifest.records_r, manifest.id_column, manifest.delimiter)
    records_s = ingest.load_records(manifest.records_s, manifest.id_column, manifest.delimiter)
    return emb_r, emb_s, index, chunks, records_r, records_s


def cmd_train(args) -> int:
    manifest = _manifest_from(args)
    paths = _Paths(manifest.output_dir)
    manifest.validate(require=("records_r", "records_s"))
    emb_r, emb_s, index, chunks, records_r, records_s = _load_stage(manifest, paths)
    pools = loop.build_pools(chunks, index, emb_r, manifest.k, manifest.ef_search)

    budget = OracleBudget(hard_cap=manifest.budget_cap)
    status = RunStatus()
    service = None
    if args.oracle == "file":
        manifest.validate(require=("truth",))
        oracle = GroundTruthOracle(ingest.load_truth(manifest.truth, manifest.delimiter), budget)
    else:
        queue = LabelQueue(records_r, records_s, budget)
        static_dir = manifest.console_dir or None
        service = LabelingService(queue, status, static_dir=static_dir, token=manifest.http_token)
        port = service.start(manifest.http_host, manifest.http_port)
        print(f"labeling console listening on http://{manifest.http_host}:{port}", flush=True)
        oracle = HumanOracle(queue, timeout=manifest.oracle_timeout)

    try:
        artifacts = loop.run(
            manifest.loop_config(), pools, emb_r, emb_s, records_r, records_s,
            manifest.key_attrs, oracle, strategy=args.strategy, status=status,
        )
    finally:
        if service is not None:
            service.stop()

    comment = _provenance(manifest)
    artifacts.m_r.save(paths.model_r)
    artifacts.m_p.save(paths.model_p)
    paths.thresholds.write_text(json.dumps(
        {"theta_r": artifacts.theta_r, "theta_p": artifacts.theta_p}, indent=2, sort_keys=True,
    ) + "\n", encoding="utf-8")
    loop.save_ledger(paths.ledger, artifacts.ledger, artifacts.n_chunks, header_comment=comment)
    loop.save_ledger_detail(paths.ledger_detail, artifacts.ledger, header_comment=comment)
    loop.save_labels(paths.labels, artifacts, header_comment=comment)
    loop.save_f1_history(paths.f1_history, artifacts.f1_history, header_comment=comment)
    report.render_f1_history(paths.f1_figure, artifacts.f1_history)
    report.render_budget(paths.budget_figure, artifacts.ledger)
    paths.run_info.write_text(json.dumps({
        "config_hash": manifest.config_hash(), "seed": manifest.seed,
        "strategy": args.strategy, "oracle": args.oracle,
        "n_chunks": artifacts.n_chunks, "key_attrs": artifacts.key_attrs,
        "truncated": artifacts.ledger.truncated,
        "ledger": {"seed": artifacts.ledger.seed_count,
                   "validation": artifacts.ledger.validation_count,
                   "loop": artifacts.ledger.loop_total,
                   "total": artifacts.ledger.total},
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"trained cascade: theta_r={artifacts.theta_r:.4f} theta_p={artifacts.theta_p:.4f} "
          f"labels used={artifacts.ledger.total}")
    if artifacts.ledger.truncated:
        print("budget exhausted during the loop; artifacts built from labels so far")
        return EXIT_BUDGET
    return EXIT_OK


def _exclusion_from_labels(paths: _Paths) -> set[str]:
    excluded: set[str] = set()
    import csv as _csv
    with open(paths.labels, encoding="utf-8", newline="") as fh:
        rows = list(_csv.reader(line for line in fh if not line.startswith("#") and line.strip()))
    for row in rows[1:]:
        excluded.add(row[0])
        excluded.add(row[1])
    return excluded


def cmd_resolve(args) -> int:
    manifest = _manifest_from(args)
    paths = _Paths(manifest.output_dir)
    manifest.validate(require=("records_r", "records_s"))
    for p in (paths.model_r, paths.model_p, paths.thresholds, paths.labels):
        if not p.exists():
            raise ManifestError(f"{p} missing; run 'aler train' first")
    emb_r, emb_s, index, _, records_r, records_s = _load_stage(manifest, paths)
    thresholds = json.loads(paths.thresholds.read_text(encoding="utf-8"))
    theta_r = args.theta_r if args.theta_r is not None else thresholds["theta_r"]
    theta_p = args.theta_p if args.theta_p is not None else thresholds["theta_p"]
    run_info = json.loads(paths.run_info.read_text(encoding="utf-8"))
    key_attrs = run_info["key_attrs"]
    exclusion = _exclusion_from_labels(paths)

    candidates = resolve.generate_candidates(index, emb_r, manifest.k, exclusion, manifest.ef_search)
    m_r = MlpModel.load(paths.model_r)
    m_p = MlpModel.load(paths.model_p)
    matches, stats = resolve.resolve(candidates, m_r, theta_r, m_p, theta_p,
                                     records_r, records_s, key_attrs, emb_r, emb_s)
    comment = _provenance(manifest)
    with open(paths.candidates, "w", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        fh.write("r_id,s_id\n")
        for r_id, s_id in candidates:
            fh.write(f"{r_id},{s_id}\n")
    resolve.save_matches(paths.matches, matches, header_comment=comment)
    print(f"cascade: {stats.candidate_count} candidates -> {stats.stage1_survivors} "
          f"stage-1 -> {stats.stage2_survivors} matches at {paths.matches}")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = _manifest_from(args)
    paths = _Paths(manifest.output_dir)
    manifest.validate(require=("truth",))
    for p in (paths.matches, paths.candidates, paths.labels):
        if not p.exists():
            raise ManifestError(f"{p} missing; run 'aler resolve' first")
    truth = ingest.load_truth(manifest.truth, manifest.delimiter)
    matches = resolve.load_matches(paths.matches)
    import csv as _csv
    with open(paths.candidates, encoding="utf-8", newline="") as fh:
        rows = list(_csv.reader(line for line in fh if not line.startswith("#") and line.strip()))
    candidates = [(r, s) for r, s in rows[1:]]
    exclusion = _exclusion_from_labels(paths)
    metrics = resolve.evaluate({(m.r_id, m.s_id) for m in matches}, truth, candidates, exclusion)
    comment = _provenance(manifest)
    resolve.save_metrics(paths.metrics_txt, paths.metrics_json, metrics, header_comment=comment)
    report.render_metrics(paths.metrics_figure, metrics)
    print(f"precision={metrics.precision:.4f} recall={metrics.recall:.4f} "
          f"f1={metrics.f1:.4f} blocking_recall={metrics.blocking_recall:.4f}")
    return EXIT_OK


def _add_manifest_args(sub):
    sub.add_argument("--manifest", required=True, help="path to the run manifest")
    sub.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="override a manifest value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aler", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic corpus with planted matches")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--typo-rate", type=float, default=synth.PerturbationSpec.typo_rate)
    p.add_argument("--token-drop", type=float, default=synth.PerturbationSpec.token_drop)
    p.add_argument("--abbreviation", type=float, default=synth.PerturbationSpec.abbreviation)
    p.add_argument("--distractor-rate", type=float, default=synth.PerturbationSpec.distractor_rate)
    p.set_defaults(fn=cmd_synth)

    for name, fn in (("ingest", cmd_ingest), ("index", cmd_index), ("partition", cmd_partition)):
        p = subs.add_parser(name, help=f"{name} stage")
        _add_manifest_args(p)
        p.set_defaults(fn=fn)

    p = subs.add_parser("train", help="run the active-learning training phase")
    _add_manifest_args(p)
    p.add_argument("--oracle", choices=["file", "http"], default="file")
    p.add_argument("--strategy", choices=list(loop.STRATEGIES), default="hybrid")
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("resolve", help="run the two-stage cascade")
    _add_manifest_args(p)
    p.add_argument("--theta-r", type=float, default=None, help="override the recall threshold")
    p.add_argument("--theta-p", type=float, default=None, help="override the precision threshold")
    p.set_defaults(fn=cmd_resolve)

    p = subs.add_parser("eval", help="evaluate the resolution output")
    _add_manifest_args(p)
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BudgetExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ManifestError, ingest.IngestError, SingleClassError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
