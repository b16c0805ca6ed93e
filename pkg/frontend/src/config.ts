import { ShimConfigError } from "./errors";

/** Core modules whose request surfaces get wrapped at load time. */
export const INTERCEPTED_MODULES = ["http", "https", "http2", "net", "tls"];

export interface ShimConfig {
  /** Verifier base URL, plain http. */
  verifier: string;
  /** Identity sent with every verification, e.g. "octo/linter@v2". */
  actionId: string;
  /** Hostname whose traffic is policy-gated. */
  apiHost: string;
  /** Specific port to gate; null gates every port on apiHost. */
  apiPort: number | null;
  /** Hard ceiling on one blocking verifier round trip. */
  timeoutMs: number;
  intercept: string[];
}

export function makeConfig(options: {
  verifier: string;
  actionId: string;
  apiHost?: string;
  timeoutMs?: number;
  intercept?: string[];
}): ShimConfig {
  const actionId = (options.actionId ?? "").trim();
  if (!actionId) {
    throw new ShimConfigError("action id must be nonempty");
  }
  let parsed: URL;
  try {
    parsed = new URL(options.verifier);
  } catch {
    throw new ShimConfigError(`verifier url is not a url: ${options.verifier}`);
  }
  if (parsed.protocol !== "http:") {
    throw new ShimConfigError(
      `verifier url must be plain http, got ${parsed.protocol}//`,
    );
  }
  const { host, port } = splitHostPort(options.apiHost ?? "api.github.com");
  const timeoutMs = options.timeoutMs ?? 2000;
  if (!Number.isFinite(timeoutMs) || timeoutMs <= 0) {
    throw new ShimConfigError(`timeout must be positive, got ${timeoutMs}`);
  }
  return {
    verifier: parsed.origin,
    actionId,
    apiHost: host,
    apiPort: port,
    timeoutMs,
    intercept: options.intercept ?? [...INTERCEPTED_MODULES],
  };
}

/** Build config from STEPGUARD_* environment variables. */
export function configFromEnv(
  env: NodeJS.ProcessEnv = process.env,
): ShimConfig {
  const verifier = env.STEPGUARD_VERIFIER;
  if (!verifier) {
    throw new ShimConfigError("STEPGUARD_VERIFIER is not set");
  }
  const actionId = env.STEPGUARD_ACTION_ID;
  if (!actionId) {
    throw new ShimConfigError("STEPGUARD_ACTION_ID is not set");
  }
  return makeConfig({
    verifier,
    actionId,
    apiHost: env.STEPGUARD_API_HOST || undefined,
    timeoutMs: env.STEPGUARD_TIMEOUT_MS
      ? Number(env.STEPGUARD_TIMEOUT_MS)
      : undefined,
  });
}

function splitHostPort(value: string): { host: string; port: number | null } {
  const text = value.trim().toLowerCase();
  if (!text) {
    throw new ShimConfigError("api host must be nonempty");
  }
  // Bracketed IPv6 form [::1]:443; otherwise a single trailing :port.
  const bracket = text.match(/^\[([^\]]+)\](?::(\d+))?$/);
  if (bracket) {
    return { host: bracket[1], port: bracket[2] ? Number(bracket[2]) : null };
  }
  const idx = text.lastIndexOf(":");
  if (idx !== -1 && text.indexOf(":") === idx) {
    const port = Number(text.slice(idx + 1));
    if (!Number.isInteger(port) || port <= 0 || port > 65535) {
      throw new ShimConfigError(`bad api host port in ${value}`);
    }
    return { host: text.slice(0, idx), port };
  }
  return { host: text, port: null };
}

/** True when a request aimed at host:port falls under the policy gate. */
export function matchesApi(
  config: ShimConfig,
  hostname: string,
  port: number,
): boolean {
  if (hostname.trim().toLowerCase() !== config.apiHost) {
    return false;
  }
  return config.apiPort === null || config.apiPort === port;
}
