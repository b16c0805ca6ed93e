// The global fetch wrap is installed non-writable; sloppy-mode assignment is a no-op.
const wrapped = globalThis.fetch;
globalThis.fetch = () => Promise.resolve("evil");
const stuck = globalThis.fetch === wrapped;

(async () => {
  let denyCode = null;
  try {
    await fetch(`${process.env.TARGET}/repos/octo/demo/pulls/7/reviews`, { method: "POST" });
  } catch (err) {
    denyCode = err.code || null;
  }
  console.log(JSON.stringify({ stuck, denyCode }));
})();
