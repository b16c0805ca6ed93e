/** Denial surfaced to action code as a network-style error. */
export class PolicyDeniedError extends Error {
  readonly code = "EPOLICYDENIED";
  readonly reason: string;
  readonly scope: string | null;
  readonly required: string | null;
  readonly granted: string | null;

  constructor(
    reason: string,
    scope: string | null,
    required: string | null,
    granted: string | null,
  ) {
    const detail =
      scope !== null
        ? `${scope} requires ${required}, granted ${granted ?? "none"}`
        : reason;
    // The code is spelled out in the message too: wrappers that rebuild
    // errors usually keep only the message text.
    super(`EPOLICYDENIED: request blocked by step-level permission policy (${detail})`);
    this.name = "PolicyDeniedError";
    this.reason = reason;
    this.scope = scope;
    this.required = required;
    this.granted = granted;
  }
}

export class ShimConfigError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShimConfigError";
  }
}
