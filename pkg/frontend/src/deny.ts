import { EventEmitter } from "events";

import { PolicyDeniedError } from "./errors";

// Denied calls hand back an inert object shaped like the real one that
// errors on the next loop turn.  setImmediate (not nextTick) leaves the
// whole current tick for the caller to attach its error listener.

function noop(): void {}

function arm(emitter: EventEmitter, error: PolicyDeniedError): void {
  setImmediate(() => {
    emitter.emit("error", error);
    emitter.emit("close");
  });
}

/** Stand-in for http.ClientRequest / https counterpart. */
export function deniedRequest(error: PolicyDeniedError): EventEmitter {
  const req = new EventEmitter() as any;
  req.aborted = false;
  req.destroyed = true;
  req.writableEnded = false;
  req.write = (_c?: unknown, _e?: unknown, cb?: unknown) => {
    if (typeof cb === "function") setImmediate(cb as () => void);
    return false;
  };
  req.end = (_c?: unknown, _e?: unknown, cb?: unknown) => {
    if (typeof cb === "function") setImmediate(cb as () => void);
    req.writableEnded = true;
    return req;
  };
  req.abort = () => {
    req.aborted = true;
  };
  req.destroy = () => req;
  req.setHeader = noop;
  req.getHeader = () => undefined;
  req.getHeaders = () => ({});
  req.removeHeader = noop;
  req.setTimeout = () => req;
  req.setNoDelay = noop;
  req.setSocketKeepAlive = noop;
  req.flushHeaders = noop;
  arm(req, error);
  return req;
}

/** Stand-in for a ClientHttp2Stream. */
export function deniedStream(error: PolicyDeniedError): EventEmitter {
  const stream = new EventEmitter() as any;
  stream.destroyed = true;
  stream.closed = true;
  stream.pending = false;
  stream.write = () => false;
  stream.end = () => stream;
  stream.close = (_code?: unknown, cb?: unknown) => {
    if (typeof cb === "function") setImmediate(cb as () => void);
  };
  stream.destroy = () => stream;
  stream.setEncoding = () => stream;
  stream.setTimeout = () => stream;
  stream.pause = () => stream;
  stream.resume = () => stream;
  arm(stream, error);
  return stream;
}

/** Stand-in for a net.Socket / tls.TLSSocket that never connected. */
export function deniedSocket(error: PolicyDeniedError): EventEmitter {
  const socket = new EventEmitter() as any;
  socket.connecting = false;
  socket.destroyed = true;
  socket.pending = true;
  socket.readable = false;
  socket.writable = false;
  socket.write = () => false;
  socket.end = () => socket;
  socket.destroy = () => socket;
  socket.connect = () => socket;
  socket.setTimeout = () => socket;
  socket.setNoDelay = () => socket;
  socket.setKeepAlive = () => socket;
  socket.setEncoding = () => socket;
  socket.pause = () => socket;
  socket.resume = () => socket;
  socket.ref = () => socket;
  socket.unref = () => socket;
  socket.address = () => ({});
  arm(socket, error);
  return socket;
}
