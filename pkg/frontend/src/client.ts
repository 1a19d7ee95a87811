import {
  Ack,
  ackSchema,
  PendingQuery,
  queriesResponseSchema,
  serviceErrorSchema,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Raised when the service answers with an {code, message, detail} body. */
export class ServiceRejection extends Error {
  code: string;
  detail: string;
  constructor(code: string, message: string, detail: string) {
    super(message);
    this.code = code;
    this.detail = detail;
  }
}

/** Thin typed client for the label-service endpoints. One instance per
 * session; the caller is responsible for keeping a single request in
 * flight (see Poller). */
export class ServiceClient {
  constructor(
    private baseUrl: string,
    private sessionId: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}/sessions/${this.sessionId}${path}`;
  }

  private async parseError(response: Response): Promise<never> {
    let body: unknown;
    try {
      body = await response.json();
    } catch {
      throw new Error(`service error ${response.status}`);
    }
    const parsed = serviceErrorSchema.safeParse(body);
    if (parsed.success) {
      throw new ServiceRejection(parsed.data.code, parsed.data.message, parsed.data.detail);
    }
    throw new Error(`service error ${response.status}`);
  }

  async getQueries(): Promise<PendingQuery | null> {
    const response = await this.fetchImpl(this.url("/queries"));
    if (!response.ok) await this.parseError(response);
    return queriesResponseSchema.parse(await response.json()).pending;
  }

  async postLabels(labels: Record<string, string>): Promise<Ack> {
    const response = await this.fetchImpl(this.url("/labels"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ labels }),
    });
    if (!response.ok) await this.parseError(response);
    return ackSchema.parse(await response.json());
  }
}

export interface PollerOptions {
  /** Base polling interval in ms. Default 1000. */
  intervalMs?: number;
  /** Cap for the failure backoff in ms. Default 30000. */
  maxBackoffMs?: number;
  /** Injectable timer for tests. */
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
}

/** Polls get_queries on a fixed interval with exponential backoff on
 * network failure. Exactly one request is in flight at any time. */
export class Poller {
  private interval: number;
  private maxBackoff: number;
  private failures = 0;
  private stopped = false;
  private inFlight = false;
  private schedule: (fn: () => void, ms: number) => unknown;

  constructor(
    private client: ServiceClient,
    private onBatch: (pending: PendingQuery | null) => void,
    private onStatus: (text: string) => void,
    options: PollerOptions = {},
  ) {
    this.interval = options.intervalMs ?? 1000;
    this.maxBackoff = options.maxBackoffMs ?? 30000;
    this.schedule = options.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));
  }

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
  }

  /** One poll round; resolves after the response is handled. */
  async tick(): Promise<void> {
    if (this.stopped || this.inFlight) return;
    this.inFlight = true;
    try {
      const pending = await this.client.getQueries();
      this.failures = 0;
      this.onStatus(pending === null ? "waiting for next chunk" : `chunk ${pending.t}: ${pending.items.length} samples to label`);
      this.onBatch(pending);
    } catch (error) {
      this.failures += 1;
      const wait = this.backoffMs();
      this.onStatus(`connection failed (${String(error)}); retrying in ${Math.round(wait / 1000)}s`);
    } finally {
      this.inFlight = false;
    }
    if (!this.stopped) {
      this.schedule(() => void this.tick(), this.backoffMs());
    }
  }

  backoffMs(): number {
    if (this.failures === 0) return this.interval;
    return Math.min(this.interval * 2 ** this.failures, this.maxBackoff);
  }
}
