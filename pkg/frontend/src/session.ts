// Annotator session state: the current ticket, the submit buffer, and the
// progress history used by the learning-curve panel. The buffer can only
// ever reference ids from the current ticket, and a batch submits atomically
// once every item is tagged.

import type {
  BatchTicket,
  Metrics,
  ProjectStatus,
  Role,
  SchemeTag,
  TicketSentence,
} from "./types.js";

export interface QueueItem {
  sentence: TicketSentence;
  selectedTag: string | null;
}

export interface CurvePoint {
  generation: number;
  labeled: number;
  metrics: Metrics;
}

export function applicableTags(scheme: SchemeTag[], role: Role): SchemeTag[] {
  return scheme.filter((t) => t.role === "both" || t.role === role);
}

export class AnnotationSession {
  ticket: BatchTicket | null = null;
  items: QueueItem[] = [];
  curve: CurvePoint[] = [];
  lastStatus: ProjectStatus | null = null;

  constructor(
    public projectId: string,
    public annotatorId: string,
    public scheme: SchemeTag[],
  ) {}

  loadTicket(ticket: BatchTicket): void {
    this.ticket = ticket;
    this.items = ticket.sentences.map((sentence) => ({ sentence, selectedTag: null }));
  }

  setTag(sentenceId: string, tag: string): void {
    const item = this.items.find((i) => i.sentence.id === sentenceId);
    if (!item) {
      throw new Error(`sentence ${sentenceId} is not on the current ticket`);
    }
    const allowed = applicableTags(this.scheme, item.sentence.role).some(
      (t) => t.name === tag,
    );
    if (!allowed) {
      throw new Error(`tag ${tag} does not apply to role ${item.sentence.role}`);
    }
    item.selectedTag = tag;
  }

  taggedCount(): number {
    return this.items.filter((i) => i.selectedTag !== null).length;
  }

  allTagged(): boolean {
    return this.items.length > 0 && this.taggedCount() === this.items.length;
  }

  buffer(): { sentence_id: string; tag: string }[] {
    if (!this.allTagged()) {
      throw new Error("submit blocked: every queued sentence needs a tag first");
    }
    return this.items.map((i) => ({
      sentence_id: i.sentence.id,
      tag: i.selectedTag as string,
    }));
  }

  clearTicket(): void {
    this.ticket = null;
    this.items = [];
  }

  // Progress history grows only when a retrain completes (generation bump),
  // so panels refresh exactly once per model generation.
  observeStatus(status: ProjectStatus): boolean {
    const previous = this.lastStatus;
    this.lastStatus = status;
    const isNewGeneration =
      status.metrics !== null &&
      (this.curve.length === 0 ||
        this.curve[this.curve.length - 1].generation < status.model_generation);
    if (isNewGeneration && status.metrics) {
      this.curve.push({
        generation: status.model_generation,
        labeled: status.labeled,
        metrics: status.metrics,
      });
    }
    return previous === null || previous.model_generation !== status.model_generation;
  }
}
