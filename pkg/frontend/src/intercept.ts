import { EventEmitter } from "events";
import Module from "module";

import { SyncVerifier, Verdict } from "./client";
import { matchesApi, ShimConfig } from "./config";
import { deniedRequest, deniedSocket, deniedStream } from "./deny";
import { PolicyDeniedError } from "./errors";

interface ShimState {
  config: ShimConfig;
  client: SyncVerifier;
  cache: Map<string, unknown>;
}

let state: ShimState | null = null;

/**
 * Install the gate.  Must run before any action code loads: module
 * loading is wrapped from this point on, so earlier requires would have
 * handed out unwrapped modules.
 */
export function installShim(config: ShimConfig): void {
  if (state !== null) {
    return;
  }
  state = {
    config,
    client: new SyncVerifier(config.verifier, config.timeoutMs),
    cache: new Map(),
  };
  hookModuleLoad(state);
  wrapGlobalFetch(state);
  warnOnEsmEntry();
}

export function shimInstalled(): boolean {
  return state !== null;
}

// -- decision plumbing ---------------------------------------------------

function denial(
  st: ShimState,
  verdict: Verdict,
  method: string,
  url: string,
): PolicyDeniedError {
  const error = new PolicyDeniedError(
    verdict.reason,
    verdict.scope,
    verdict.level,
    verdict.granted,
  );
  process.stderr.write(
    JSON.stringify({
      stepguard: "deny",
      action: st.config.actionId,
      method,
      url,
      reason: verdict.reason,
      scope: verdict.scope,
      required: verdict.level,
      granted: verdict.granted,
    }) + "\n",
  );
  return error;
}

// -- module wrapping -----------------------------------------------------

const CORE_PREFIX = "node:";

function coreName(request: string): string | null {
  const bare = request.startsWith(CORE_PREFIX)
    ? request.slice(CORE_PREFIX.length)
    : request;
  switch (bare) {
    case "http":
    case "https":
    case "http2":
    case "net":
    case "tls":
      return bare;
    default:
      return null;
  }
}

function hookModuleLoad(st: ShimState): void {
  const moduleAny = Module as any;
  const realLoad = moduleAny._load as (...args: unknown[]) => unknown;
  moduleAny._load = function (
    request: string,
    parent: unknown,
    isMain: boolean,
  ) {
    const name = coreName(request);
    if (name !== null && st.config.intercept.includes(name)) {
      const hit = st.cache.get(name);
      if (hit !== undefined) {
        return hit;
      }
      const real = realLoad.call(this, request, parent, isMain);
      const wrapped = buildWrapper(name, real, st);
      st.cache.set(name, wrapped);
      return wrapped;
    }
    return realLoad.call(this, request, parent, isMain);
  };
}

function buildWrapper(name: string, real: any, st: ShimState): unknown {
  switch (name) {
    case "http":
      return wrapHttpLike("http:", real, st);
    case "https":
      return wrapHttpLike("https:", real, st);
    case "http2":
      return wrapHttp2(real, st);
    case "net":
      return wrapNet(real, st);
    case "tls":
      return wrapTls(real, st);
    default:
      return real;
  }
}

/**
 * Proxy a module's exports so a fixed set of properties answer with the
 * gated versions and cannot be reassigned, redefined, or deleted.  The
 * descriptor trap matters as much as get: without it the original
 * function leaks through Object.getOwnPropertyDescriptor.
 */
function overrideProxy(
  real: object,
  overrides: Map<string | symbol, unknown>,
): any {
  return new Proxy(real, {
    get(target, prop, receiver) {
      if (overrides.has(prop)) {
        return overrides.get(prop);
      }
      return Reflect.get(target, prop, receiver);
    },
    set(target, prop, value, receiver) {
      if (overrides.has(prop)) {
        return true; // assignment quietly does not stick
      }
      return Reflect.set(target, prop, value, receiver);
    },
    defineProperty(target, prop, descriptor) {
      if (overrides.has(prop)) {
        return true;
      }
      return Reflect.defineProperty(target, prop, descriptor);
    },
    deleteProperty(target, prop) {
      if (overrides.has(prop)) {
        return true;
      }
      return Reflect.deleteProperty(target, prop);
    },
    getOwnPropertyDescriptor(target, prop) {
      const descriptor = Reflect.getOwnPropertyDescriptor(target, prop);
      if (overrides.has(prop)) {
        return {
          value: overrides.get(prop),
          writable: false,
          enumerable: descriptor?.enumerable ?? true,
          configurable: true,
        };
      }
      return descriptor;
    },
  });
}

// -- http / https --------------------------------------------------------

interface HttpTarget {
  hostname: string;
  port: number;
  method: string;
  url: string;
}

function splitHost(value: string): { host: string; port: number | null } {
  const idx = value.lastIndexOf(":");
  if (idx > 0 && value.indexOf(":") === idx) {
    const port = Number(value.slice(idx + 1));
    if (Number.isInteger(port)) {
      return { host: value.slice(0, idx), port };
    }
  }
  return { host: value, port: null };
}

function resolveHttpTarget(
  defaultProtocol: string,
  args: unknown[],
): HttpTarget | null {
  let url: URL | null = null;
  let options: Record<string, any> | null = null;
  const [first, second] = args;
  if (typeof first === "string") {
    try {
      url = new URL(first);
    } catch {
      return null;
    }
  } else if (first instanceof URL) {
    url = first;
  } else if (first !== null && typeof first === "object") {
    options = first as Record<string, any>;
  } else {
    return null;
  }
  if (
    url !== null &&
    second !== null &&
    typeof second === "object"
  ) {
    options = second as Record<string, any>;
  }

  let protocol = defaultProtocol;
  let hostname = "localhost";
  let port: number | null = null;
  let path = "/";
  let method = "GET";
  if (url !== null) {
    protocol = url.protocol || defaultProtocol;
    hostname = url.hostname;
    port = url.port ? Number(url.port) : null;
    path = url.pathname + url.search;
  }
  if (options !== null) {
    if (options.socketPath) {
      return null; // unix socket, not network traffic
    }
    if (options.protocol) {
      protocol = String(options.protocol);
    }
    if (options.hostname) {
      hostname = String(options.hostname);
    } else if (options.host) {
      const split = splitHost(String(options.host));
      hostname = split.host;
      if (split.port !== null && options.port == null) {
        port = split.port;
      }
    }
    if (options.port != null) {
      port = Number(options.port);
    }
    if (options.path) {
      path = String(options.path);
    }
    if (options.method) {
      method = String(options.method);
    }
  }
  const finalPort = port ?? (protocol === "https:" ? 443 : 80);
  return {
    hostname,
    port: finalPort,
    method: method.toUpperCase(),
    url: `${protocol}//${hostname}:${finalPort}${path}`,
  };
}

function wrapHttpLike(protocol: string, real: any, st: ShimState): unknown {
  function gatedRequest(this: unknown, ...args: unknown[]): unknown {
    const target = resolveHttpTarget(protocol, args);
    if (
      target === null ||
      !matchesApi(st.config, target.hostname, target.port)
    ) {
      return real.request.apply(real, args);
    }
    const verdict = st.client.verify(
      target.method,
      target.url,
      st.config.actionId,
    );
    if (verdict.allow) {
      return real.request.apply(real, args);
    }
    return deniedRequest(denial(st, verdict, target.method, target.url));
  }
  // get() must route through the gated request: the real get would call
  // the real request internally and slip past the wrap.
  function gatedGet(this: unknown, ...args: unknown[]): unknown {
    const req = gatedRequest.apply(this, args) as any;
    req.end();
    return req;
  }
  return overrideProxy(
    real,
    new Map<string | symbol, unknown>([
      ["request", gatedRequest],
      ["get", gatedGet],
    ]),
  );
}

// -- http2 ---------------------------------------------------------------

function wrapHttp2(real: any, st: ShimState): unknown {
  function gatedConnect(this: unknown, ...args: unknown[]): unknown {
    let url: URL;
    try {
      url = args[0] instanceof URL ? args[0] : new URL(String(args[0]));
    } catch {
      return real.connect.apply(real, args);
    }
    const port = url.port
      ? Number(url.port)
      : url.protocol === "http:"
        ? 80
        : 443;
    if (!matchesApi(st.config, url.hostname, port)) {
      return real.connect.apply(real, args);
    }
    return sessionFacade(real, url.origin, args, st);
  }
  return overrideProxy(
    real,
    new Map<string | symbol, unknown>([["connect", gatedConnect]]),
  );
}

/**
 * Stands in for a client session without opening it.  The real session
 * (and its socket) only comes into being once a stream is allowed, so a
 * session whose every request is denied never touches the network.
 */
function sessionFacade(
  real: any,
  origin: string,
  connectArgs: unknown[],
  st: ShimState,
): unknown {
  const facade = new EventEmitter() as any;
  let session: any = null;
  let markedClosed = false;
  const ensure = () => {
    if (session === null) {
      session = real.connect.apply(real, connectArgs);
      for (const event of ["connect", "close", "error", "goaway"]) {
        session.on(event, (...eventArgs: unknown[]) =>
          facade.emit(event, ...eventArgs),
        );
      }
    }
    return session;
  };
  facade.request = (headers: Record<string, unknown> = {}, opts?: unknown) => {
    const method = String(headers[":method"] ?? "GET").toUpperCase();
    const reqPath = String(headers[":path"] ?? "/");
    const target = origin + reqPath;
    const verdict = st.client.verify(method, target, st.config.actionId);
    if (!verdict.allow) {
      return deniedStream(denial(st, verdict, method, target));
    }
    return ensure().request(headers, opts);
  };
  facade.close = (cb?: () => void) => {
    markedClosed = true;
    if (session !== null) {
      session.close(cb);
    } else if (cb) {
      setImmediate(cb);
    }
  };
  facade.destroy = (...args: unknown[]) => {
    markedClosed = true;
    if (session !== null) {
      session.destroy(...args);
    }
  };
  facade.setTimeout = (...args: unknown[]) => session?.setTimeout(...args);
  facade.ping = (...args: unknown[]) =>
    session !== null ? session.ping(...args) : false;
  facade.ref = () => session?.ref();
  facade.unref = () => session?.unref();
  Object.defineProperty(facade, "closed", {
    get: () => (session !== null ? session.closed : markedClosed),
  });
  Object.defineProperty(facade, "destroyed", {
    get: () => (session !== null ? session.destroyed : markedClosed),
  });
  return facade;
}

// -- net / tls -----------------------------------------------------------

interface NetTarget {
  host: string;
  port: number;
}

function resolveNetTarget(args: unknown[]): NetTarget | null {
  const [first, second] = args;
  if (typeof first === "number") {
    return {
      host: typeof second === "string" ? second : "localhost",
      port: first,
    };
  }
  if (typeof first === "string") {
    return null; // pipe / unix socket path
  }
  if (first !== null && typeof first === "object") {
    const options = first as Record<string, any>;
    if (options.path || options.socket) {
      return null; // unix socket, or upgrading an existing socket
    }
    if (options.port == null) {
      return null;
    }
    return {
      host: String(options.host ?? options.hostname ?? "localhost"),
      port: Number(options.port),
    };
  }
  return null;
}

/**
 * Raw connections cannot be classified per-request, so a connect to the
 * gated host is checked as method CONNECT on the root path; the verifier
 * treats it like any other unroutable request (denied under enforcement
 * unless unknown traffic is explicitly allowed).
 */
function gateConnect(st: ShimState, target: NetTarget): Verdict {
  return st.client.verify(
    "CONNECT",
    `https://${target.host}:${target.port}/`,
    st.config.actionId,
  );
}

function wrapNet(real: any, st: ShimState): unknown {
  function gatedConnect(this: unknown, ...args: unknown[]): unknown {
    const target = resolveNetTarget(args);
    if (target === null || !matchesApi(st.config, target.host, target.port)) {
      return real.connect.apply(real, args);
    }
    const verdict = gateConnect(st, target);
    if (verdict.allow) {
      return real.connect.apply(real, args);
    }
    const url = `https://${target.host}:${target.port}/`;
    return deniedSocket(denial(st, verdict, "CONNECT", url));
  }
  // new net.Socket().connect(...) dials without going through the
  // module-level factory, so the class needs the same gate.
  class GatedSocket extends real.Socket {
    connect(...args: unknown[]): any {
      const target = resolveNetTarget(args);
      if (
        target !== null &&
        matchesApi(st.config, target.host, target.port)
      ) {
        const verdict = gateConnect(st, target);
        if (!verdict.allow) {
          const url = `https://${target.host}:${target.port}/`;
          this.destroy(denial(st, verdict, "CONNECT", url));
          return this;
        }
      }
      return super.connect(...(args as [any]));
    }
  }
  return overrideProxy(
    real,
    new Map<string | symbol, unknown>([
      ["connect", gatedConnect],
      ["createConnection", gatedConnect],
      ["Socket", GatedSocket],
    ]),
  );
}

function wrapTls(real: any, st: ShimState): unknown {
  function gatedConnect(this: unknown, ...args: unknown[]): unknown {
    const target = resolveNetTarget(args);
    if (target === null || !matchesApi(st.config, target.host, target.port)) {
      return real.connect.apply(real, args);
    }
    const verdict = gateConnect(st, target);
    if (verdict.allow) {
      return real.connect.apply(real, args);
    }
    const url = `https://${target.host}:${target.port}/`;
    return deniedSocket(denial(st, verdict, "CONNECT", url));
  }
  class GatedTLSSocket extends real.TLSSocket {
    connect(...args: unknown[]): any {
      const target = resolveNetTarget(args);
      if (
        target !== null &&
        matchesApi(st.config, target.host, target.port)
      ) {
        const verdict = gateConnect(st, target);
        if (!verdict.allow) {
          const url = `https://${target.host}:${target.port}/`;
          this.destroy(denial(st, verdict, "CONNECT", url));
          return this;
        }
      }
      return super.connect(...(args as [any]));
    }
  }
  return overrideProxy(
    real,
    new Map<string | symbol, unknown>([
      ["connect", gatedConnect],
      ["TLSSocket", GatedTLSSocket],
    ]),
  );
}

// -- global fetch --------------------------------------------------------

function wrapGlobalFetch(st: ShimState): void {
  const real = globalThis.fetch;
  if (typeof real !== "function") {
    return;
  }
  const gated = function fetch(input: any, init?: any): Promise<Response> {
    let url: URL;
    try {
      url =
        input instanceof URL
          ? input
          : new URL(typeof input === "string" ? input : input.url);
    } catch {
      return real(input, init);
    }
    const port = url.port
      ? Number(url.port)
      : url.protocol === "http:"
        ? 80
        : 443;
    if (!matchesApi(st.config, url.hostname, port)) {
      return real(input, init);
    }
    const method = String(
      init?.method ??
        (typeof input === "object" && input !== null && "method" in input
          ? input.method
          : "GET"),
    ).toUpperCase();
    const verdict = st.client.verify(method, url.href, st.config.actionId);
    if (verdict.allow) {
      return real(input, init);
    }
    return Promise.reject(denial(st, verdict, method, url.href));
  };
  Object.defineProperty(globalThis, "fetch", {
    value: gated,
    writable: false,
    configurable: false,
    enumerable: true,
  });
}

// -- ESM entry detection -------------------------------------------------

function warnOnEsmEntry(): void {
  const entry = process.argv[1];
  if (entry && entry.endsWith(".mjs")) {
    process.emitWarning(
      "entry point is an ES module: its direct core-module imports load " +
        "outside the CommonJS hook and are not intercepted (requires made " +
        "by CommonJS dependencies, and global fetch, still are)",
      "StepguardShim",
    );
  }
}
