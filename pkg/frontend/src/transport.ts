/**
 * Message transport: "<decimal length>\n<payload>" framing over any
 * ordered reliable byte stream. A Node TCP adapter connects directly to
 * the bundled server; browser deployments bridge through a
 * WebSocket-to-TCP proxy carrying the same frames.
 */

import { stableStringify } from "./canonical.js";

export interface Transport {
  send(message: Record<string, unknown>): void;
  onMessage(handler: (message: any) => void): void;
  close(): void;
}

export function encodeFrame(message: Record<string, unknown>): Uint8Array {
  const payload = new TextEncoder().encode(stableStringify(message));
  const header = new TextEncoder().encode(`${payload.length}\n`);
  const out = new Uint8Array(header.length + payload.length);
  out.set(header, 0);
  out.set(payload, header.length);
  return out;
}

/** Incremental frame parser; push() returns every complete message. */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): any[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;

    const messages: any[] = [];
    for (;;) {
      const newline = this.buffer.indexOf(0x0a);
      if (newline < 0) break;
      const header = new TextDecoder().decode(this.buffer.slice(0, newline));
      const length = Number.parseInt(header, 10);
      if (!Number.isInteger(length) || length < 0) {
        throw new Error(`bad frame header ${JSON.stringify(header)}`);
      }
      if (this.buffer.length < newline + 1 + length) break;
      const payload = this.buffer.slice(newline + 1, newline + 1 + length);
      this.buffer = this.buffer.slice(newline + 1 + length);
      messages.push(JSON.parse(new TextDecoder().decode(payload)));
    }
    return messages;
  }
}

/** Loopback transport for tests: wire two endpoints back to back. */
export class LoopbackTransport implements Transport {
  private handler: ((message: any) => void) | null = null;
  peer: LoopbackTransport | null = null;

  send(message: Record<string, unknown>): void {
    // round-trip through the frame codec so tests cover the wire path
    const decoder = new FrameDecoder();
    for (const decoded of decoder.push(encodeFrame(message))) {
      this.peer?.handler?.(decoded);
    }
  }

  onMessage(handler: (message: any) => void): void {
    this.handler = handler;
  }

  close(): void {
    this.handler = null;
  }

  static pair(): [LoopbackTransport, LoopbackTransport] {
    const a = new LoopbackTransport();
    const b = new LoopbackTransport();
    a.peer = b;
    b.peer = a;
    return [a, b];
  }
}

/** TCP adapter for Node environments (ingest tools, tests, bridges). */
export async function connectTcp(host: string, port: number): Promise<Transport> {
  const net = await import("node:net");
  const socket = net.createConnection({ host, port });
  await new Promise<void>((resolve, reject) => {
    socket.once("connect", () => resolve());
    socket.once("error", reject);
  });
  const decoder = new FrameDecoder();
  let handler: ((message: any) => void) | null = null;
  socket.on("data", (chunk: Buffer) => {
    for (const msg of decoder.push(new Uint8Array(chunk))) {
      handler?.(msg);
    }
  });
  return {
    send(message) {
      socket.write(encodeFrame(message));
    },
    onMessage(h) {
      handler = h;
    },
    close() {
      socket.end();
    },
  };
}
