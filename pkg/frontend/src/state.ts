/** Client-side session state: submit-once guards and server-reported budget.
 *
 * The budget numbers shown are always the last values the server returned;
 * nothing is recomputed or optimistically adjusted on the client.
 */

import type { BudgetInfo } from "./api.js";

export type CardState = "pending" | "submitting" | "done" | "conflict";

export class SessionState {
  private cards = new Map<number, CardState>();
  budget: BudgetInfo | null = null;
  exhausted = false;

  ensureCard(taskId: number): CardState {
    if (!this.cards.has(taskId)) this.cards.set(taskId, "pending");
    return this.cards.get(taskId)!;
  }

  /** True when the submit may proceed; flips the card so a double click
   * cannot fire a second request. */
  beginSubmit(taskId: number): boolean {
    if (this.ensureCard(taskId) !== "pending" || this.exhausted) return false;
    this.cards.set(taskId, "submitting");
    return true;
  }

  completeSubmit(taskId: number, budget: BudgetInfo): void {
    this.cards.set(taskId, "done");
    this.budget = budget;
  }

  failSubmit(taskId: number, status: number): void {
    if (status === 409) {
      // someone else answered first; benign race
      this.cards.set(taskId, "conflict");
    } else if (status === 403) {
      this.cards.set(taskId, "pending");
      this.exhausted = true;
    } else {
      this.cards.set(taskId, "pending");
    }
  }

  applyStatus(budget: BudgetInfo): void {
    this.budget = budget;
    if (budget.remaining !== null && budget.remaining <= 0) this.exhausted = true;
  }

  state(taskId: number): CardState {
    return this.cards.get(taskId) ?? "pending";
  }
}
