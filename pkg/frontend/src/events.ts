import type { PipelineEvent } from "./types.js";

export interface MessageLike {
  data: string;
}

export interface EventSourceLike {
  onmessage: ((event: MessageLike) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

const defaultFactory: EventSourceFactory = (url) =>
  new EventSource(url) as unknown as EventSourceLike;

/**
 * Subscription to a session's event stream with transparent resume.
 *
 * On a dropped connection the stream reopens at ?since=<last seq seen>,
 * so the server replays nothing we already folded; anything it does
 * replay (e.g. events raced between drop and reopen) is filtered here
 * by seq. Consumers therefore see each event exactly once, in order.
 */
export class EventStream {
  private lastSeq = 0;
  private source: EventSourceLike | null = null;
  private stopped = false;

  constructor(
    private readonly eventsUrl: string,
    private readonly onEvent: (event: PipelineEvent) => void,
    private readonly factory: EventSourceFactory = defaultFactory,
    private readonly retryMs = 500,
  ) {}

  start(sinceSeq = 0): void {
    this.lastSeq = sinceSeq;
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    this.source?.close();
    this.source = null;
  }

  get seq(): number {
    return this.lastSeq;
  }

  private open(): void {
    const separator = this.eventsUrl.includes("?") ? "&" : "?";
    const source = this.factory(
      `${this.eventsUrl}${separator}since=${this.lastSeq}`,
    );
    this.source = source;
    source.onmessage = (message) => {
      let event: PipelineEvent;
      try {
        event = JSON.parse(message.data) as PipelineEvent;
      } catch {
        return;
      }
      if (typeof event.seq !== "number" || event.seq <= this.lastSeq) {
        return;
      }
      this.lastSeq = event.seq;
      this.onEvent(event);
    };
    source.onerror = () => {
      source.close();
      // A stale source's error must not clobber a newer connection.
      if (this.stopped || this.source !== source) return;
      this.source = null;
      setTimeout(() => {
        if (!this.stopped && this.source === null) this.open();
      }, this.retryMs);
    };
  }
}
