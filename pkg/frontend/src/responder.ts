/**
 * sgv-oracle/1 request handling: one JSON object in, one JSON object out.
 *
 * Never throws on bad input — every failure becomes an error response
 * (malformed JSON answered with id null), so a serving loop survives
 * arbitrary traffic.
 */

import {
  INPUT_RANGE,
  NUM_CLASSES,
  lossAndInputGrad,
  predict,
} from './model.js';
import { ProtocolError, decodeTensor, encodeF32, encodeU8 } from './tensor.js';

export const PROTOCOL_VERSION = 'sgv-oracle/1';

type Json = Record<string, unknown>;

function errorResponse(id: unknown, code: string, message: string): Json {
  return { id: id ?? null, ok: false, error: { code, message } };
}

export function handleRequest(line: string): Json {
  let req: unknown;
  try {
    req = JSON.parse(line);
  } catch (exc) {
    return errorResponse(null, 'bad_json', String(exc));
  }
  const id =
    typeof req === 'object' && req !== null && !Array.isArray(req)
      ? ((req as Json).id ?? null)
      : null;
  try {
    if (typeof req !== 'object' || req === null || Array.isArray(req)) {
      throw new ProtocolError('request must be a JSON object');
    }
    const op = (req as Json).op;
    if (op === 'meta') {
      return {
        id,
        ok: true,
        version: PROTOCOL_VERSION,
        classes: NUM_CLASSES,
        input_range: [...INPUT_RANGE],
      };
    }
    if (op === 'predict') {
      const image = decodeTensor((req as Json).image);
      const labels = predict(image.values, image.shape);
      return {
        id,
        ok: true,
        labels: encodeU8(labels, [image.shape[1], image.shape[2]]),
      };
    }
    if (op === 'grad') {
      const image = decodeTensor((req as Json).image);
      const target = decodeTensor((req as Json).target);
      const { loss, grad } = lossAndInputGrad(
        image.values,
        image.shape,
        target.values,
        target.shape,
      );
      return { id, ok: true, loss, grad: encodeF32(grad, image.shape) };
    }
    throw new ProtocolError(`unknown op ${JSON.stringify(op)}`);
  } catch (exc) {
    if (exc instanceof ProtocolError) {
      return errorResponse(id, exc.code, exc.message);
    }
    return errorResponse(id, 'internal', String(exc));
  }
}

export function handleLine(line: string): string {
  return JSON.stringify(handleRequest(line));
}
