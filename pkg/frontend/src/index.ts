export { SyncVerifier, Verdict } from "./client";
export {
  configFromEnv,
  INTERCEPTED_MODULES,
  makeConfig,
  matchesApi,
  ShimConfig,
} from "./config";
export { PolicyDeniedError, ShimConfigError } from "./errors";
export { installShim, shimInstalled } from "./intercept";
