// Verifier round trips run here, off the main thread, so the shim can
// block synchronously on the result.  This worker has its own module
// registry: its http module is the real one, never the wrapped proxy.
import http from "http";
import { parentPort } from "worker_threads";

interface VerifyJob {
  sab: SharedArrayBuffer;
  verifier: string;
  method: string;
  url: string;
  actionId: string;
  timeoutMs: number;
}

const agent = new http.Agent({ keepAlive: true, maxSockets: 1 });

function finish(job: VerifyJob, payload: object): void {
  const flags = new Int32Array(job.sab, 0, 2);
  const bytes = new Uint8Array(job.sab, 8);
  const encoded = new TextEncoder().encode(JSON.stringify(payload));
  const length = Math.min(encoded.length, bytes.length);
  bytes.set(encoded.subarray(0, length));
  flags[1] = length;
  Atomics.store(flags, 0, 1);
  Atomics.notify(flags, 0);
}

parentPort!.on("message", (job: VerifyJob) => {
  const body = JSON.stringify({
    method: job.method,
    url: job.url,
    action_id: job.actionId,
  });
  let settled = false;
  const once = (payload: object) => {
    if (!settled) {
      settled = true;
      finish(job, payload);
    }
  };
  let req: http.ClientRequest;
  try {
    req = http.request(`${job.verifier}/v1/verify`, {
      method: "POST",
      agent,
      // Leave headroom so the worker answers before the main thread
      // gives up and fails closed on its own.
      timeout: Math.max(100, job.timeoutMs - 200),
      headers: {
        "content-type": "application/json",
        "content-length": Buffer.byteLength(body),
      },
    });
  } catch (err) {
    once({ error: String(err) });
    return;
  }
  req.on("response", (res) => {
    const chunks: Buffer[] = [];
    res.on("data", (chunk) => chunks.push(chunk));
    res.on("end", () => {
      const text = Buffer.concat(chunks).toString("utf8");
      if (res.statusCode !== 200) {
        once({ error: `verifier answered ${res.statusCode}: ${text}` });
        return;
      }
      try {
        once(JSON.parse(text));
      } catch (err) {
        once({ error: `verifier sent malformed JSON: ${String(err)}` });
      }
    });
    res.on("error", (err) => once({ error: String(err) }));
  });
  req.on("timeout", () => {
    req.destroy(new Error("verifier timed out"));
  });
  req.on("error", (err) => once({ error: String(err) }));
  req.end(body);
});
