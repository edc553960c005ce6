import { spawn } from 'node:child_process';
import { once } from 'node:events';
import { createInterface } from 'node:readline';
import { fileURLToPath } from 'node:url';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { PROTOCOL_VERSION, handleRequest } from '../src/responder.js';
import { encodeF32, encodeU8 } from '../src/tensor.js';

const image = encodeF32(
  Float32Array.from({ length: 3 * 4 * 4 }, (_, i) => (i * 37) % 256),
  [3, 4, 4],
);
const target = encodeU8(new Uint8Array(16).fill(2), [4, 4]);

describe('responder', () => {
  it('answers meta with protocol version and ranges', () => {
    const resp = handleRequest(JSON.stringify({ op: 'meta', id: 7 }));
    expect(resp).toEqual({
      id: 7,
      ok: true,
      version: PROTOCOL_VERSION,
      classes: 5,
      input_range: [0, 255],
    });
  });

  it('answers malformed JSON with id null', () => {
    const resp = handleRequest('{not json');
    expect(resp.id).toBeNull();
    expect(resp.ok).toBe(false);
    expect((resp.error as { code: string }).code).toBe('bad_json');
  });

  it('survives a battery of bad requests and keeps working', () => {
    const badLines = [
      JSON.stringify({ op: 'warp', id: 1 }),
      JSON.stringify({ op: 'grad', id: 2, image }), // missing target
      JSON.stringify({ op: 'predict', id: 3 }), // missing image
      JSON.stringify([1, 2, 3]),
      JSON.stringify({
        op: 'predict',
        id: 4,
        image: { dtype: 'f32', shape: [3, 4, 4], data: 'short' },
      }),
      JSON.stringify({
        op: 'grad',
        id: 5,
        image,
        target: encodeU8(new Uint8Array(16).fill(9), [4, 4]),
      }),
      'null',
      '"just a string"',
    ];
    for (const line of badLines) {
      const resp = handleRequest(line);
      expect(resp.ok, line).toBe(false);
    }
    const resp = handleRequest(
      JSON.stringify({ op: 'predict', id: 9, image }),
    );
    expect(resp.ok).toBe(true);
    expect(resp.id).toBe(9);
  });

  it('echoes ids on grad responses and returns an f32 tensor', () => {
    const resp = handleRequest(
      JSON.stringify({ op: 'grad', id: 'abc', image, target }),
    );
    expect(resp.id).toBe('abc');
    expect(resp.ok).toBe(true);
    expect(typeof resp.loss).toBe('number');
    expect((resp.grad as { shape: number[] }).shape).toEqual([3, 4, 4]);
  });
});

describe('stdio server process', () => {
  const serverPath = fileURLToPath(
    new URL('../dist/server.js', import.meta.url),
  );
  const server = spawn('node', [serverPath], {
    stdio: ['pipe', 'pipe', 'inherit'],
  });
  const lines: string[] = [];
  const waiters: ((line: string) => void)[] = [];
  createInterface({ input: server.stdout! }).on('line', (line) => {
    const waiter = waiters.shift();
    if (waiter) waiter(line);
    else lines.push(line);
  });

  function request(raw: string): Promise<Record<string, unknown>> {
    const pending = lines.shift();
    const promise = pending
      ? Promise.resolve(pending)
      : new Promise<string>((resolve) => waiters.push(resolve));
    server.stdin!.write(raw + '\n');
    return promise.then((line) => JSON.parse(line));
  }

  beforeAll(async () => {
    if (server.pid === undefined) await once(server, 'spawn');
  });

  afterAll(() => {
    server.kill();
  });

  it('serves meta and grad over stdio', async () => {
    const meta = await request(JSON.stringify({ op: 'meta', id: 1 }));
    expect(meta.version).toBe(PROTOCOL_VERSION);
    const grad = await request(
      JSON.stringify({ op: 'grad', id: 2, image, target }),
    );
    expect(grad.ok).toBe(true);
  });

  it('does not exit on malformed input', async () => {
    const bad = await request('}{');
    expect(bad.ok).toBe(false);
    const alsoBad = await request(JSON.stringify({ op: 'nope', id: 3 }));
    expect(alsoBad.ok).toBe(false);
    expect(server.exitCode).toBeNull();
    const good = await request(JSON.stringify({ op: 'meta', id: 4 }));
    expect(good.ok).toBe(true);
    expect(good.id).toBe(4);
  });
});
