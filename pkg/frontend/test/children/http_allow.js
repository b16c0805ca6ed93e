// One allowed GET through the core http module.
const http = require("http");

const url = new URL("/repos/octo/demo/pulls", process.env.TARGET);
const req = http.request(url, { method: "GET" }, (res) => {
  const chunks = [];
  res.on("data", (c) => chunks.push(c));
  res.on("end", () => {
    console.log(
      JSON.stringify({
        status: res.statusCode,
        body: Buffer.concat(chunks).toString("utf8"),
      }),
    );
  });
});
req.on("error", (err) => {
  console.log(JSON.stringify({ error: err.code || String(err) }));
});
req.end();
