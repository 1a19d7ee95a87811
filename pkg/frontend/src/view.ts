import { PendingQuery } from "./types.js";

/** Client-side state for one pending batch: draft labels, the class
 * palette, and the current selection. Submission is possible only when
 * every pending item has a draft label, so the server can never reject a
 * submission for coverage reasons. */
export class AnnotationView {
  pending: PendingQuery | null = null;
  drafts = new Map<number, string>();
  selection: number | null = null;
  /** Classes declared by the annotator that the service has not seen yet. */
  private declared: string[] = [];
  /** Ids the server rejected on the last submission attempt, for highlighting. */
  rejectedIds: number[] = [];

  /** Replace (or clear) the pending batch. Drafts reset when the batch
   * changes; declared classes persist so the palette stays stable. */
  setPending(pending: PendingQuery | null): void {
    const changed =
      (pending === null) !== (this.pending === null) ||
      (pending !== null && this.pending !== null && pending.t !== this.pending.t);
    this.pending = pending;
    if (changed) {
      this.drafts.clear();
      this.rejectedIds = [];
      this.selection = pending?.items[0]?.sample_id ?? null;
    }
  }

  get palette(): string[] {
    const known = this.pending?.known_classes ?? [];
    const extra = this.declared.filter((name) => !known.includes(name));
    return [...known, ...extra];
  }

  /** Register a new class name; returns false for empty or duplicate names. */
  declareClass(name: string): boolean {
    const trimmed = name.trim();
    if (!trimmed || this.palette.includes(trimmed)) return false;
    this.declared.push(trimmed);
    return true;
  }

  assign(sampleId: number, label: string): void {
    if (!this.pending?.items.some((item) => item.sample_id === sampleId)) return;
    if (!this.palette.includes(label)) return;
    this.drafts.set(sampleId, label);
  }

  /** Assign to the current selection and advance to the next unlabeled item. */
  assignSelected(label: string): void {
    if (this.selection === null) return;
    this.assign(this.selection, label);
    this.selection = this.nextUnlabeled() ?? this.selection;
  }

  nextUnlabeled(): number | null {
    for (const item of this.pending?.items ?? []) {
      if (!this.drafts.has(item.sample_id)) return item.sample_id;
    }
    return null;
  }

  get complete(): boolean {
    const items = this.pending?.items ?? [];
    return items.length > 0 && items.every((item) => this.drafts.has(item.sample_id));
  }

  /** Wire-format body; only callable once the draft is complete. */
  submission(): Record<string, string> {
    if (!this.complete) throw new Error("submission requires a complete draft");
    const labels: Record<string, string> = {};
    for (const [id, label] of this.drafts) labels[String(id)] = label;
    return labels;
  }

  clearAfterAck(): void {
    this.pending = null;
    this.drafts.clear();
    this.rejectedIds = [];
    this.selection = null;
  }
}
