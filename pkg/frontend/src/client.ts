import path from "path";
import { Worker } from "worker_threads";

/** Verifier answer in wire-protocol terms. */
export interface Verdict {
  allow: boolean;
  reason: string;
  scope: string | null;
  level: string | null;
  granted: string | null;
  /** True when the answer is a local fail-closed, not a policy decision. */
  infrastructure?: boolean;
}

const PAYLOAD_CAPACITY = 64 * 1024;

/**
 * Blocking verifier client.  The HTTP round trip happens in a worker
 * thread; the calling thread parks on Atomics.wait until the worker
 * writes the answer into shared memory, so even fully synchronous
 * callers see the gate.  Timeouts and transport failures fail closed.
 */
export class SyncVerifier {
  private worker: Worker;
  private readonly verifier: string;
  private readonly timeoutMs: number;

  constructor(verifier: string, timeoutMs: number) {
    this.verifier = verifier;
    this.timeoutMs = timeoutMs;
    // execArgv must be cleared: the default inherits the main thread's
    // --require preload, which would make every worker install its own
    // shim and spawn another worker in turn.
    this.worker = new Worker(path.join(__dirname, "worker.js"), {
      execArgv: [],
    });
    // The worker must not keep an otherwise-finished process alive.
    this.worker.unref();
  }

  verify(method: string, url: string, actionId: string): Verdict {
    const sab = new SharedArrayBuffer(8 + PAYLOAD_CAPACITY);
    const flags = new Int32Array(sab, 0, 2);
    this.worker.postMessage({
      sab,
      verifier: this.verifier,
      method,
      url,
      actionId,
      timeoutMs: this.timeoutMs,
    });
    const outcome = Atomics.wait(flags, 0, 0, this.timeoutMs);
    if (outcome === "timed-out" || Atomics.load(flags, 0) !== 1) {
      return failClosed("verifier-unavailable");
    }
    const bytes = new Uint8Array(sab, 8, flags[1]);
    let doc: Record<string, unknown>;
    try {
      doc = JSON.parse(new TextDecoder().decode(bytes));
    } catch {
      return failClosed("verifier-unavailable");
    }
    if (typeof doc.error === "string" || typeof doc.allow !== "boolean") {
      return failClosed("verifier-unavailable");
    }
    return {
      allow: doc.allow as boolean,
      reason: typeof doc.reason === "string" ? doc.reason : "unknown",
      scope: (doc.scope as string | null) ?? null,
      level: (doc.level as string | null) ?? null,
      granted: (doc.granted as string | null) ?? null,
    };
  }

  close(): void {
    void this.worker.terminate();
  }
}

function failClosed(reason: string): Verdict {
  return {
    allow: false,
    reason,
    scope: null,
    level: null,
    granted: null,
    infrastructure: true,
  };
}
