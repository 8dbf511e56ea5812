/**
 * Annotation session state: which queried point is active, which classes the
 * user picked, and a draft that survives page reloads. Submission is only
 * possible when every pending query has a class, and never for a point
 * outside the pending query set.
 */

import { LabelSubmission, PendingQuery } from "./api";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export type ColorMode = "rgb" | "class-overlay" | "uncertainty-heatmap";

export interface MarkerInfo {
  scene: string;
  point: number;
  current: boolean;
}

interface DraftPayload {
  chosen: Record<string, number>;
}

function queryKey(q: { scene: string; point: number }): string {
  return `${q.scene}:${q.point}`;
}

export class AnnotationSession {
  readonly queries: PendingQuery[];
  private chosen = new Map<string, number>();
  private cursorIndex = 0;

  constructor(
    readonly experiment: string,
    readonly iteration: number,
    queries: PendingQuery[],
    private classCount: number,
    private store: KeyValueStore,
  ) {
    this.queries = [...queries];
    this.restoreDraft();
  }

  private get draftKey(): string {
    return `activest-draft:${this.experiment}:${this.iteration}`;
  }

  private restoreDraft(): void {
    const raw = this.store.getItem(this.draftKey);
    if (!raw) return;
    try {
      const draft = JSON.parse(raw) as DraftPayload;
      const valid = new Set(this.queries.map(queryKey));
      for (const [key, classId] of Object.entries(draft.chosen)) {
        // stale entries (or points never queried) are dropped silently
        if (valid.has(key) && classId >= 0 && classId < this.classCount) {
          this.chosen.set(key, classId);
        }
      }
    } catch {
      this.store.removeItem(this.draftKey);
    }
  }

  private persistDraft(): void {
    const chosen: Record<string, number> = {};
    for (const [key, classId] of this.chosen) chosen[key] = classId;
    this.store.setItem(this.draftKey, JSON.stringify({ chosen }));
  }

  get cursor(): PendingQuery | null {
    return this.queries[this.cursorIndex] ?? null;
  }

  moveCursor(delta: number): void {
    if (this.queries.length === 0) return;
    const n = this.queries.length;
    this.cursorIndex = ((this.cursorIndex + delta) % n + n) % n;
  }

  jumpTo(index: number): void {
    if (index >= 0 && index < this.queries.length) this.cursorIndex = index;
  }

  classOf(query: PendingQuery): number | null {
    return this.chosen.get(queryKey(query)) ?? null;
  }

  /** Assign a class to the active query; ignores invalid class ids. */
  assign(classId: number): boolean {
    const query = this.cursor;
    if (!query || classId < 0 || classId >= this.classCount) return false;
    this.chosen.set(queryKey(query), classId);
    this.persistDraft();
    return true;
  }

  /** Assignments for points outside the pending set are rejected. */
  assignTo(scene: string, point: number, classId: number): boolean {
    const match = this.queries.find((q) => q.scene === scene && q.point === point);
    if (!match || classId < 0 || classId >= this.classCount) return false;
    this.chosen.set(queryKey(match), classId);
    this.persistDraft();
    return true;
  }

  clearAssignment(): void {
    const query = this.cursor;
    if (!query) return;
    this.chosen.delete(queryKey(query));
    this.persistDraft();
  }

  get assignedCount(): number {
    return this.chosen.size;
  }

  get complete(): boolean {
    return this.queries.length > 0 &&
      this.queries.every((q) => this.chosen.has(queryKey(q)));
  }

  /** The submission body, or null while any query is still unlabeled. */
  buildSubmission(): LabelSubmission[] | null {
    if (!this.complete) return null;
    return this.queries.map((q) => ({
      scene: q.scene,
      point: q.point,
      class_id: this.chosen.get(queryKey(q))!,
    }));
  }

  /** Called after the server accepted the batch. */
  finish(): void {
    this.store.removeItem(this.draftKey);
    const history = this.loadHistory();
    for (const q of this.queries) {
      history.push({ scene: q.scene, point: q.point, iteration: this.iteration });
    }
    this.store.setItem(this.historyKey, JSON.stringify(history));
  }

  private get historyKey(): string {
    return `activest-history:${this.experiment}`;
  }

  private loadHistory(): Array<{ scene: string; point: number; iteration: number }> {
    const raw = this.store.getItem(this.historyKey);
    if (!raw) return [];
    try {
      return JSON.parse(raw);
    } catch {
      return [];
    }
  }

  /** Markers for the view: pending queries (big) plus past ones (small). */
  markersFor(scene: string): MarkerInfo[] {
    const markers: MarkerInfo[] = [];
    for (const past of this.loadHistory()) {
      if (past.scene === scene) {
        markers.push({ scene, point: past.point, current: false });
      }
    }
    for (const q of this.queries) {
      if (q.scene === scene) {
        markers.push({ scene, point: q.point, current: true });
      }
    }
    return markers;
  }
}
