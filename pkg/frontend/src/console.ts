/** DOM console: poll pending pair tasks, render them side by side with
 * differing tokens highlighted, submit Match / No-Match, and show run status. */

import { ApiError, LabelingApi, type TaskPayload } from "./api.js";
import { diffSpans, rowFullyChanged } from "./diff.js";
import { SessionState } from "./state.js";

export interface ConsoleOptions {
  pollMs?: number;
  taskLimit?: number;
}

export class LabelingConsole {
  readonly state = new SessionState();
  private timer: ReturnType<typeof setInterval> | null = null;
  private rendered = new Set<number>();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: LabelingApi,
    private readonly options: ConsoleOptions = {},
  ) {
    this.root.innerHTML = `
      <header class="topbar">
        <h1>Pair labeling</h1>
        <div id="run-status">waiting for status…</div>
        <div id="budget">budget: –</div>
      </header>
      <div id="error-banner" class="hidden"></div>
      <main id="tasks"><p class="placeholder">waiting for queries…</p></main>`;
    this.root.addEventListener("keydown", (event) => this.onKey(event as KeyboardEvent));
  }

  start(): void {
    const poll = () => void this.refresh();
    poll();
    this.timer = setInterval(poll, this.options.pollMs ?? 2000);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    try {
      const [tasks, status] = await Promise.all([
        this.api.tasks(this.options.taskLimit ?? 20),
        this.api.status(),
      ]);
      this.state.applyStatus(status.budget);
      this.renderStatus(status.chunk, status.iteration, status.f1_history);
      this.renderBudget();
      this.renderTasks(tasks);
      this.banner(null);
    } catch (err) {
      this.banner(`connection problem, retrying: ${(err as Error).message}`);
    }
  }

  private banner(message: string | null): void {
    const el = this.root.querySelector<HTMLElement>("#error-banner")!;
    if (message === null) {
      el.classList.add("hidden");
      el.textContent = "";
    } else {
      el.classList.remove("hidden");
      el.textContent = message;
    }
  }

  private renderStatus(chunk: number, iteration: number, history: number[]): void {
    const latest = history.length ? ` · validation F1 ${history[history.length - 1].toFixed(3)}` : "";
    const series = history.length ? ` [${history.map((f) => f.toFixed(2)).join(" → ")}]` : "";
    this.root.querySelector<HTMLElement>("#run-status")!.textContent =
      `chunk ${chunk} · iteration ${iteration}${latest}${series}`;
  }

  private renderBudget(): void {
    const budget = this.state.budget;
    const el = this.root.querySelector<HTMLElement>("#budget")!;
    if (!budget) {
      el.textContent = "budget: –";
      return;
    }
    const remaining = budget.remaining === null ? "∞" : String(budget.remaining);
    el.textContent = `budget: ${budget.consumed} used · ${remaining} remaining`;
    if (this.state.exhausted) {
      el.classList.add("exhausted");
      this.root
        .querySelectorAll<HTMLButtonElement>("button.label")
        .forEach((b) => (b.disabled = true));
    }
  }

  private renderTasks(tasks: TaskPayload[]): void {
    const container = this.root.querySelector<HTMLElement>("#tasks")!;
    const pending = tasks.filter((t) => t.status === "pending");
    if (pending.length === 0 && this.rendered.size === 0) {
      container.innerHTML = `<p class="placeholder">waiting for queries…</p>`;
      return;
    }
    container.querySelector(".placeholder")?.remove();
    for (const task of pending.sort((a, b) => a.task_id - b.task_id)) {
      if (this.rendered.has(task.task_id)) continue;
      this.rendered.add(task.task_id);
      this.state.ensureCard(task.task_id);
      container.appendChild(this.buildCard(task));
    }
  }

  private buildCard(task: TaskPayload): HTMLElement {
    const card = document.createElement("section");
    card.className = "card";
    card.dataset.taskId = String(task.task_id);
    card.tabIndex = 0;

    const names = task.r_attributes.map(([name]) => name);
    const sValues = new Map(task.s_attributes);
    const rows = names
      .map((name) => {
        const a = task.r_attributes.find(([n]) => n === name)?.[1] ?? "";
        const b = sValues.get(name) ?? "";
        const full = rowFullyChanged(a, b) ? " row-changed" : "";
        return `<tr class="attr${full}"><th>${escapeHtml(name)}</th>` +
          `<td>${renderSpans(a, b)}</td><td>${renderSpans(b, a)}</td></tr>`;
      })
      .join("");

    card.innerHTML = `
      <div class="card-head">
        <span class="pair-id">#${task.task_id} · ${escapeHtml(task.pair.r_id)} ↔ ${escapeHtml(task.pair.s_id)}</span>
        <span class="provenance">${escapeHtml(task.provenance)}</span>
      </div>
      <table><thead><tr><th></th><th>left record</th><th>right record</th></tr></thead>
      <tbody>${rows}</tbody></table>
      <div class="actions">
        <button class="label match" data-label="1">Match (M)</button>
        <button class="label no-match" data-label="0">No match (N)</button>
        <span class="note"></span>
      </div>`;
    card.querySelectorAll<HTMLButtonElement>("button.label").forEach((button) => {
      button.addEventListener("click", () => {
        void this.submit(task.task_id, Number(button.dataset.label) as 0 | 1);
      });
    });
    return card;
  }

  async submit(taskId: number, label: 0 | 1): Promise<void> {
    if (!this.state.beginSubmit(taskId)) return;
    const card = this.card(taskId);
    card?.querySelectorAll<HTMLButtonElement>("button.label").forEach((b) => (b.disabled = true));
    try {
      const budget = await this.api.submit(taskId, label);
      this.state.completeSubmit(taskId, budget);
      this.markDone(taskId, label === 1 ? "labeled: match" : "labeled: no match");
      this.renderBudget();
    } catch (err) {
      const status = err instanceof ApiError ? err.status : 0;
      this.state.failSubmit(taskId, status);
      if (status === 409) {
        this.markDone(taskId, "already answered elsewhere");
      } else if (status === 403) {
        this.note(taskId, "budget exhausted");
        this.renderBudget();
      } else {
        this.note(taskId, `submit failed: ${(err as Error).message}`);
        card?.querySelectorAll<HTMLButtonElement>("button.label").forEach((b) => (b.disabled = false));
      }
    }
  }

  private onKey(event: KeyboardEvent): void {
    const key = event.key.toLowerCase();
    if (key !== "m" && key !== "n") return;
    const first = this.root.querySelector<HTMLElement>("section.card:not(.done)");
    if (!first) return;
    void this.submit(Number(first.dataset.taskId), key === "m" ? 1 : 0);
  }

  private card(taskId: number): HTMLElement | null {
    return this.root.querySelector(`section.card[data-task-id="${taskId}"]`);
  }

  private markDone(taskId: number, message: string): void {
    const card = this.card(taskId);
    if (!card) return;
    card.classList.add("done");
    this.note(taskId, message);
    card.querySelectorAll<HTMLButtonElement>("button.label").forEach((b) => (b.disabled = true));
  }

  private note(taskId: number, message: string): void {
    const el = this.card(taskId)?.querySelector<HTMLElement>(".note");
    if (el) el.textContent = message;
  }
}

function renderSpans(value: string, other: string): string {
  if (value.trim().length === 0) return `<span class="blank"></span>`;
  return diffSpans(value, other)
    .map((span) =>
      span.changed
        ? `<mark class="changed">${escapeHtml(span.text)}</mark>`
        : `<span>${escapeHtml(span.text)}</span>`,
    )
    .join(" ");
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
