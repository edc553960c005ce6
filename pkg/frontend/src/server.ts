/**
 * Stdio entry point: NDJSON sgv-oracle/1 responder over stdin/stdout.
 *
 *     node dist/server.js
 *
 * Blank lines are ignored; every other line gets exactly one response
 * line. The process only exits when stdin closes.
 */

import { createInterface } from 'node:readline';

import { handleLine } from './responder.js';

const rl = createInterface({ input: process.stdin, terminal: false });

rl.on('line', (line: string) => {
  const trimmed = line.trim();
  if (trimmed.length === 0) return;
  process.stdout.write(handleLine(trimmed) + '\n');
});
