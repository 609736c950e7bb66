/** Token-level diff spans for side-by-side attribute display.
 *
 * The hard pairs are near-duplicates where a single differing token decides
 * the label, so tokens missing from the other side are flagged.
 */

export interface DiffSpan {
  text: string;
  changed: boolean;
}

function tokenize(value: string): string[] {
  return value.split(/\s+/).filter((t) => t.length > 0);
}

function counted(tokens: string[]): Map<string, number> {
  const counts = new Map<string, number>();
  for (const token of tokens) {
    const key = token.toLowerCase();
    counts.set(key, (counts.get(key) ?? 0) + 1);
  }
  return counts;
}

/** Spans for `value`, marking tokens that do not appear on the other side. */
export function diffSpans(value: string, other: string): DiffSpan[] {
  const tokens = tokenize(value);
  const available = counted(tokenize(other));
  return tokens.map((token) => {
    const key = token.toLowerCase();
    const left = available.get(key) ?? 0;
    if (left > 0) {
      available.set(key, left - 1);
      return { text: token, changed: false };
    }
    return { text: token, changed: true };
  });
}

/** A row is fully highlighted when one side is empty and the other is not. */
export function rowFullyChanged(a: string, b: string): boolean {
  const aEmpty = tokenize(a).length === 0;
  const bEmpty = tokenize(b).length === 0;
  return aEmpty !== bEmpty;
}
