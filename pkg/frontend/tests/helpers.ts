import { labelSubmissionSchema, PendingQuery } from "../src/types.js";
import { FetchLike } from "../src/client.js";

export function makeBatch(t: number, n: number, knownClasses: string[] = ["a", "b"]): PendingQuery {
  const items = Array.from({ length: n }, (_, i) => ({
    sample_id: i,
    features: [i * 0.5, 1.0 - i * 0.1],
    projection: [Math.cos(i), Math.sin(i)] as [number, number],
    kind: (i % 3 === 0 ? "representative" : "informative") as "representative" | "informative",
    cluster: i % 2,
  }));
  return { session_id: "s1", t, items: items as PendingQuery["items"], known_classes: knownClasses };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** In-memory stand-in for the label service, validating every submission
 * body against the wire schema exactly like the real service would. */
export class MockService {
  pending: PendingQuery | null = null;
  received: Record<string, string>[] = [];
  knownClasses = new Set<string>(["a", "b"]);
  failNextRequests = 0;

  fetch: FetchLike = async (input, init) => {
    if (this.failNextRequests > 0) {
      this.failNextRequests -= 1;
      throw new TypeError("network down");
    }
    const url = new URL(input, "http://mock");
    if (url.pathname.endsWith("/queries") && (init?.method ?? "GET") === "GET") {
      return json(200, { pending: this.pending });
    }
    if (url.pathname.endsWith("/labels") && init?.method === "POST") {
      return this.handleLabels(String(init.body));
    }
    return json(404, { code: "unknown-route", message: url.pathname, detail: "" });
  };

  private handleLabels(rawBody: string): Response {
    const parsed = labelSubmissionSchema.safeParse(JSON.parse(rawBody));
    if (!parsed.success) {
      return json(422, { code: "bad-body", message: parsed.error.message, detail: "" });
    }
    if (this.pending === null) {
      return json(409, { code: "no-pending", message: "no query batch is pending", detail: "" });
    }
    const pendingIds = new Set(this.pending.items.map((item) => String(item.sample_id)));
    const unknown = Object.keys(parsed.data.labels).filter((id) => !pendingIds.has(id));
    if (unknown.length) {
      return json(422, {
        code: "unknown-id",
        message: "submission contains ids that are not pending",
        detail: `ids=[${unknown.join(", ")}]`,
      });
    }
    this.received.push(parsed.data.labels);
    for (const label of Object.values(parsed.data.labels)) this.knownClasses.add(label);
    const remaining = pendingIds.size - Object.keys(parsed.data.labels).length;
    if (remaining === 0) this.pending = null;
    return json(200, {
      accepted: Object.keys(parsed.data.labels).length,
      remaining,
      complete: remaining === 0,
    });
  }
}

/** Manually-driven timer so tests control the poll loop. */
export class ManualTimer {
  queue: Array<() => void> = [];
  schedule = (fn: () => void, _ms: number): unknown => {
    this.queue.push(fn);
    return this.queue.length;
  };
  async runNext(): Promise<void> {
    const fn = this.queue.shift();
    if (fn) fn();
    await flush();
  }
}

/** Let pending promise chains settle. */
export async function flush(): Promise<void> {
  for (let i = 0; i < 10; i += 1) await Promise.resolve();
}
