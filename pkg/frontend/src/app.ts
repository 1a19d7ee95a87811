import { Poller, PollerOptions, ServiceClient, ServiceRejection } from "./client.js";
import { handleKey, render, RenderHandlers } from "./render.js";
import { AnnotationView } from "./view.js";

/** Wires client, view state, and rendering into one annotator session.
 * One in-flight request at a time: the poller pauses while a submission
 * is running. */
export class AnnotatorApp {
  view = new AnnotationView();
  private poller: Poller;
  private status = "";
  private submitting = false;

  constructor(
    private client: ServiceClient,
    private root: HTMLElement,
    pollerOptions: PollerOptions = {},
  ) {
    this.poller = new Poller(
      client,
      (pending) => {
        if (this.submitting) return;
        this.view.setPending(pending);
        this.renderNow();
      },
      (status) => {
        this.status = status;
        this.renderNow();
      },
      pollerOptions,
    );
    root.ownerDocument.addEventListener("keydown", (event) => {
      if (handleKey(this.view, event.key, this.handlers)) {
        event.preventDefault();
        this.renderNow();
      }
    });
  }

  readonly handlers: RenderHandlers = {
    onSelect: (sampleId) => {
      this.view.selection = sampleId;
      this.renderNow();
    },
    onAssign: (sampleId, label) => {
      if (sampleId === this.view.selection) {
        this.view.assignSelected(label);
      } else {
        this.view.assign(sampleId, label);
      }
      this.renderNow();
    },
    onDeclareClass: (name) => {
      if (!this.view.declareClass(name)) {
        this.status = `class name ${JSON.stringify(name)} is empty or already exists`;
      }
      this.renderNow();
    },
    onSubmit: () => void this.submit(),
  };

  start(): void {
    this.poller.start();
  }

  stop(): void {
    this.poller.stop();
  }

  async submit(): Promise<void> {
    if (!this.view.complete || this.submitting) return;
    this.submitting = true;
    try {
      const ack = await this.client.postLabels(this.view.submission());
      this.status = ack.complete ? "labels submitted; waiting for next chunk" : `submitted, ${ack.remaining} remaining`;
      this.view.clearAfterAck();
    } catch (error) {
      if (error instanceof ServiceRejection) {
        this.status = `server rejected submission: ${error.message}`;
        this.view.rejectedIds = parseRejectedIds(error.detail);
      } else {
        this.status = `submission failed: ${String(error)}`;
      }
    } finally {
      this.submitting = false;
      this.renderNow();
    }
  }

  renderNow(): void {
    render(this.view, this.root, this.handlers, this.status);
  }
}

/** Service rejections carry `detail: "ids=[1, 2]"` for unknown ids. */
export function parseRejectedIds(detail: string): number[] {
  const match = /ids=\[([0-9,\s]*)\]/.exec(detail);
  if (!match || !match[1]) return [];
  return match[1]
    .split(",")
    .map((part) => Number(part.trim()))
    .filter((value) => Number.isFinite(value));
}
