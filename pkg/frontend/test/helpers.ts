import { spawn } from "child_process";
import http from "http";
import http2 from "http2";
import net from "net";
import path from "path";
import { AddressInfo } from "net";

export const DIST = path.resolve(__dirname, "..", "dist");
export const CHILDREN = path.resolve(__dirname, "children");

export interface VerifyCall {
  method: string;
  url: string;
  action_id: string;
}

export interface MockVerifier {
  url: string;
  calls: VerifyCall[];
  close(): Promise<void>;
}

/**
 * Scripted verifier speaking the wire protocol.  The decision rule gets
 * the posted descriptor and returns the response document.
 */
export function startMockVerifier(
  decide: (call: VerifyCall) => Record<string, unknown>,
): Promise<MockVerifier> {
  const calls: VerifyCall[] = [];
  const server = http.createServer((req, res) => {
    if (req.method === "GET" && req.url === "/v1/health") {
      res.writeHead(200, { "content-type": "application/json" });
      res.end(JSON.stringify({ status: "ok" }));
      return;
    }
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => {
      const call = JSON.parse(Buffer.concat(chunks).toString("utf8"));
      calls.push(call);
      const body = JSON.stringify(decide(call));
      res.writeHead(200, { "content-type": "application/json" });
      res.end(body);
    });
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({
        url: `http://127.0.0.1:${port}`,
        calls,
        close: () =>
          new Promise((done) => server.close(() => done())),
      });
    });
  });
}

export interface TargetServer {
  host: string;
  port: number;
  connections: number;
  requests: { method: string; url: string; body: string }[];
  close(): Promise<void>;
}

/** Plain HTTP target that counts raw TCP connections and requests. */
export function startHttpTarget(): Promise<TargetServer> {
  const target: TargetServer = {
    host: "127.0.0.1",
    port: 0,
    connections: 0,
    requests: [],
    close: async () => {},
  };
  const server = http.createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => {
      target.requests.push({
        method: req.method ?? "",
        url: req.url ?? "",
        body: Buffer.concat(chunks).toString("utf8"),
      });
      const body = JSON.stringify({
        ok: true,
        method: req.method,
        path: req.url,
      });
      res.writeHead(200, {
        "content-type": "application/json",
        "content-length": Buffer.byteLength(body),
      });
      res.end(body);
    });
  });
  server.on("connection", () => {
    target.connections += 1;
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      target.port = (server.address() as AddressInfo).port;
      target.close = () =>
        new Promise((done) => {
          server.closeAllConnections();
          server.close(() => done());
        });
      resolve(target);
    });
  });
}

/** Cleartext HTTP/2 target (h2c) counting sessions and streams. */
export function startH2Target(): Promise<TargetServer> {
  const target: TargetServer = {
    host: "127.0.0.1",
    port: 0,
    connections: 0,
    requests: [],
    close: async () => {},
  };
  const server = http2.createServer();
  server.on("session", () => {
    target.connections += 1;
  });
  server.on("stream", (stream, headers) => {
    target.requests.push({
      method: String(headers[":method"]),
      url: String(headers[":path"]),
      body: "",
    });
    const body = JSON.stringify({ ok: true, path: headers[":path"] });
    stream.respond({
      ":status": 200,
      "content-type": "application/json",
    });
    stream.end(body);
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      target.port = (server.address() as AddressInfo).port;
      target.close = () =>
        new Promise((done) => server.close(() => done()));
      resolve(target);
    });
  });
}

/** Raw TCP listener for socket-level zero-connection assertions. */
export function startTcpTarget(): Promise<TargetServer> {
  const target: TargetServer = {
    host: "127.0.0.1",
    port: 0,
    connections: 0,
    requests: [],
    close: async () => {},
  };
  const server = net.createServer((socket) => {
    target.connections += 1;
    socket.end();
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      target.port = (server.address() as AddressInfo).port;
      target.close = () =>
        new Promise((done) => server.close(() => done()));
      resolve(target);
    });
  });
}

export interface ChildResult {
  status: number | null;
  stdout: string;
  stderr: string;
  report: any;
}

/**
 * Run one child script under the preloaded shim and parse the JSON
 * report it prints as its last stdout line.  Must stay asynchronous:
 * the mock verifier lives in this process, so a blocking spawn would
 * deadlock every verification round trip.
 */
export function runChild(
  script: string,
  env: Record<string, string>,
): Promise<ChildResult> {
  return new Promise((resolve) => {
    const child = spawn(
      process.execPath,
      ["--require", path.join(DIST, "preload.js"), path.join(CHILDREN, script)],
      { env: { ...process.env, ...env }, stdio: ["ignore", "pipe", "pipe"] },
    );
    let stdout = "";
    let stderr = "";
    const timer = setTimeout(() => child.kill("SIGKILL"), 20_000);
    child.stdout.on("data", (chunk: Buffer) => {
      stdout += chunk.toString("utf8");
    });
    child.stderr.on("data", (chunk: Buffer) => {
      stderr += chunk.toString("utf8");
    });
    child.on("close", (status) => {
      clearTimeout(timer);
      const lines = stdout.trim().split("\n");
      let report: any = null;
      for (let i = lines.length - 1; i >= 0; i -= 1) {
        try {
          report = JSON.parse(lines[i]);
          break;
        } catch {
          // keep scanning upward past any stray prints
        }
      }
      resolve({ status, stdout, stderr, report });
    });
  });
}

export function shimEnv(
  verifier: string,
  target: { host: string; port: number },
  actionId = "octo/step@v1",
): Record<string, string> {
  return {
    STEPGUARD_VERIFIER: verifier,
    STEPGUARD_ACTION_ID: actionId,
    STEPGUARD_API_HOST: `${target.host}:${target.port}`,
  };
}
