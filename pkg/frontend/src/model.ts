/**
 * Reference per-pixel linear classifier with a closed-form gradient.
 *
 * logits[k] = sum_ch W[k][ch] * (pixel[ch] / 255) + b[k]
 *
 * Every responder implementation hard-codes the same constants so
 * clients can validate a bridge end to end. All internal math is f64;
 * the returned gradient is rounded to f32 to match the wire encoding.
 */

import { ProtocolError } from './tensor.js';

export const LINEAR_WEIGHTS: readonly (readonly number[])[] = [
  [0.9, -0.2, 0.1],
  [-0.4, 0.8, -0.3],
  [0.2, 0.5, 0.7],
  [-0.6, -0.1, 0.4],
  [0.3, -0.7, -0.5],
];

export const LINEAR_BIAS: readonly number[] = [0.05, -0.1, 0.0, 0.15, -0.05];

export const NUM_CLASSES = 5;
export const INPUT_RANGE: readonly [number, number] = [0.0, 255.0];

function checkImageShape(shape: number[]): [number, number] {
  if (shape.length !== 3 || shape[0] !== 3) {
    throw new ProtocolError(
      `image must be (3,H,W), got ${JSON.stringify(shape)}`,
      'ShapeError',
    );
  }
  return [shape[1], shape[2]];
}

/** Per-pixel softmax probabilities, flat (k * n + pixel) layout. */
function probabilities(image: Float64Array, n: number): Float64Array {
  const k = NUM_CLASSES;
  const logits = new Float64Array(k * n);
  for (let p = 0; p < n; p += 1) {
    const x0 = image[p] / 255.0;
    const x1 = image[n + p] / 255.0;
    const x2 = image[2 * n + p] / 255.0;
    for (let c = 0; c < k; c += 1) {
      const w = LINEAR_WEIGHTS[c];
      logits[c * n + p] = w[0] * x0 + w[1] * x1 + w[2] * x2 + LINEAR_BIAS[c];
    }
  }
  for (let p = 0; p < n; p += 1) {
    let max = -Infinity;
    for (let c = 0; c < k; c += 1) {
      if (logits[c * n + p] > max) max = logits[c * n + p];
    }
    let sum = 0;
    for (let c = 0; c < k; c += 1) {
      const e = Math.exp(logits[c * n + p] - max);
      logits[c * n + p] = e;
      sum += e;
    }
    for (let c = 0; c < k; c += 1) {
      logits[c * n + p] /= sum;
    }
  }
  return logits;
}

export function predict(image: Float64Array, shape: number[]): Uint8Array {
  const [h, w] = checkImageShape(shape);
  const n = h * w;
  const probs = probabilities(image, n);
  const labels = new Uint8Array(n);
  for (let p = 0; p < n; p += 1) {
    let best = 0;
    for (let c = 1; c < NUM_CLASSES; c += 1) {
      if (probs[c * n + p] > probs[best * n + p]) best = c;
    }
    labels[p] = best;
  }
  return labels;
}

export interface LossAndGrad {
  loss: number;
  grad: Float32Array; // (3,H,W) row-major
}

export function lossAndInputGrad(
  image: Float64Array,
  shape: number[],
  target: Float64Array,
  targetShape: number[],
): LossAndGrad {
  const [h, w] = checkImageShape(shape);
  if (targetShape.length !== 2 || targetShape[0] !== h || targetShape[1] !== w) {
    throw new ProtocolError(
      `target shape ${JSON.stringify(targetShape)}, expected [${h},${w}]`,
      'ShapeError',
    );
  }
  const n = h * w;
  for (let p = 0; p < n; p += 1) {
    if (target[p] < 0 || target[p] >= NUM_CLASSES) {
      throw new ProtocolError(
        `target labels outside [0,${NUM_CLASSES})`,
        'LabelRangeError',
      );
    }
  }
  const probs = probabilities(image, n);
  let loss = 0;
  for (let p = 0; p < n; p += 1) {
    loss -= Math.log(probs[target[p] * n + p]);
  }
  loss /= n;
  // delta = softmax - onehot; grad = W^T delta / (n * 255)
  const grad = new Float32Array(3 * n);
  const scale = 1.0 / (n * 255.0);
  for (let p = 0; p < n; p += 1) {
    probs[target[p] * n + p] -= 1.0;
    for (let ch = 0; ch < 3; ch += 1) {
      let acc = 0;
      for (let c = 0; c < NUM_CLASSES; c += 1) {
        acc += LINEAR_WEIGHTS[c][ch] * probs[c * n + p];
      }
      grad[ch * n + p] = Math.fround(acc * scale);
    }
  }
  return { loss, grad };
}
