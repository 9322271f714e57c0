import type { RecommendRequest, RecommendResponse, Scenario } from "./types.js";

export const MAX_SCENARIOS = 5;

const PALETTE = ["#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c"];

/** Mean of a sequence, recomputed client-side for the summary cards. */
export function mean(values: number[]): number {
  if (values.length === 0) return NaN;
  return values.reduce((acc, v) => acc + v, 0) / values.length;
}

/**
 * Holds up to MAX_SCENARIOS completed scenarios.  In-flight requests are
 * tracked by token so responses landing after a clear/removal are
 * discarded instead of resurrecting dead scenarios.
 */
export class ScenarioStore {
  private scenarios: Scenario[] = [];
  private nextId = 1;
  private pending = new Set<number>();

  list(): readonly Scenario[] {
    return this.scenarios;
  }

  get length(): number {
    return this.scenarios.length;
  }

  get isFull(): boolean {
    return this.scenarios.length >= MAX_SCENARIOS;
  }

  /** Reserve a slot for an in-flight request; returns its token. */
  begin(): number {
    const id = this.nextId++;
    this.pending.add(id);
    return id;
  }

  /** Resolve an in-flight token; returns the scenario or null if stale. */
  complete(id: number, request: RecommendRequest, response: RecommendResponse): Scenario | null {
    if (!this.pending.delete(id)) return null;
    if (this.isFull) return null;
    const scenario: Scenario = {
      id,
      color: PALETTE[this.scenarios.length % PALETTE.length],
      request,
      response,
    };
    this.scenarios.push(scenario);
    return scenario;
  }

  abort(id: number): void {
    this.pending.delete(id);
  }

  remove(id: number): void {
    this.pending.delete(id);
    this.scenarios = this.scenarios.filter((s) => s.id !== id);
  }

  clear(): void {
    this.pending.clear();
    this.scenarios = [];
  }
}
