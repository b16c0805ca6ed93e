// Entry for node --require: install the gate before the action loads.
import { configFromEnv } from "./config";
import { installShim } from "./intercept";

try {
  installShim(configFromEnv());
} catch (err) {
  // Fail closed: better to not run the action at all than to run it
  // unprotected.
  process.stderr.write(`stepguard shim failed to install: ${String(err)}\n`);
  process.exit(1);
}
