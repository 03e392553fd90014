/**
 * Channel-major float32 tensors and the handful of ops the network needs.
 *
 * Layout matches the MFT1 interchange format: `data[(c * h + y) * w + x]`,
 * each channel row-major. Everything here is plain typed-array arithmetic,
 * so results are bit-reproducible across runs.
 */

export interface Tensor {
  c: number;
  h: number;
  w: number;
  data: Float32Array;
}

export function makeTensor(c: number, h: number, w: number): Tensor {
  return { c, h, w, data: new Float32Array(c * h * w) };
}

export function channelView(t: Tensor, c: number): Float32Array {
  const plane = t.h * t.w;
  return t.data.subarray(c * plane, (c + 1) * plane);
}

/** 3x3 convolution with zero padding, fused bias add and optional ReLU.
 *
 * `kernels` is laid out `[oc][ic][ky*3+kx]`. Input channels are copied once
 * into zero-padded planes so the hot loop is a branch-free unrolled 9-tap
 * accumulation per pixel.
 */
export function conv3x3Relu(
  inp: Tensor,
  kernels: Float32Array,
  bias: Float32Array,
  cOut: number,
  relu = true,
): Tensor {
  const { c: cIn, h, w } = inp;
  if (kernels.length !== cOut * cIn * 9 || bias.length !== cOut) {
    throw new Error(
      `weight shape mismatch: got ${kernels.length} kernel values for ${cOut}x${cIn}x3x3`,
    );
  }
  const pw = w + 2;
  const padded = new Float32Array(cIn * pw * (h + 2));
  for (let ic = 0; ic < cIn; ic++) {
    const src = channelView(inp, ic);
    const base = ic * pw * (h + 2);
    for (let y = 0; y < h; y++) {
      padded.set(src.subarray(y * w, (y + 1) * w), base + (y + 1) * pw + 1);
    }
  }
  const out = makeTensor(cOut, h, w);
  const acc = new Float64Array(h * w);
  for (let oc = 0; oc < cOut; oc++) {
    acc.fill(bias[oc]);
    for (let ic = 0; ic < cIn; ic++) {
      const base = ic * pw * (h + 2);
      const kb = (oc * cIn + ic) * 9;
      const k0 = kernels[kb];
      const k1 = kernels[kb + 1];
      const k2 = kernels[kb + 2];
      const k3 = kernels[kb + 3];
      const k4 = kernels[kb + 4];
      const k5 = kernels[kb + 5];
      const k6 = kernels[kb + 6];
      const k7 = kernels[kb + 7];
      const k8 = kernels[kb + 8];
      for (let y = 0; y < h; y++) {
        let r0 = base + y * pw;
        let r1 = r0 + pw;
        let r2 = r1 + pw;
        let o = y * w;
        for (let x = 0; x < w; x++, r0++, r1++, r2++, o++) {
          acc[o] +=
            k0 * padded[r0] + k1 * padded[r0 + 1] + k2 * padded[r0 + 2] +
            k3 * padded[r1] + k4 * padded[r1 + 1] + k5 * padded[r1 + 2] +
            k6 * padded[r2] + k7 * padded[r2 + 1] + k8 * padded[r2 + 2];
        }
      }
    }
    const dst = channelView(out, oc);
    if (relu) {
      for (let i = 0; i < acc.length; i++) {
        const v = acc[i];
        dst[i] = v > 0 ? Math.fround(v) : 0;
      }
    } else {
      for (let i = 0; i < acc.length; i++) dst[i] = Math.fround(acc[i]);
    }
  }
  return out;
}

/** 2x2 max pooling with stride 2 (dims must be even). */
export function maxPool2(inp: Tensor): Tensor {
  const { c, h, w } = inp;
  if (h % 2 !== 0 || w % 2 !== 0) {
    throw new Error(`max pooling needs even dims, got ${w}x${h}`);
  }
  const oh = h / 2;
  const ow = w / 2;
  const out = makeTensor(c, oh, ow);
  for (let ch = 0; ch < c; ch++) {
    const src = channelView(inp, ch);
    const dst = channelView(out, ch);
    for (let y = 0; y < oh; y++) {
      const r0 = 2 * y * w;
      const r1 = r0 + w;
      for (let x = 0; x < ow; x++) {
        const i = 2 * x;
        const m0 = Math.max(src[r0 + i], src[r0 + i + 1]);
        const m1 = Math.max(src[r1 + i], src[r1 + i + 1]);
        dst[y * ow + x] = Math.max(m0, m1);
      }
    }
  }
  return out;
}

/** Bilinear resize with the image corners held fixed. */
export function resizeBilinear(inp: Tensor, newH: number, newW: number): Tensor {
  const { c, h, w } = inp;
  if (h === newH && w === newW) {
    return { c, h, w, data: inp.data.slice() };
  }
  const out = makeTensor(c, newH, newW);
  const xs = new Float64Array(newW);
  const ys = new Float64Array(newH);
  for (let x = 0; x < newW; x++) xs[x] = newW === 1 ? 0 : (x * (w - 1)) / (newW - 1);
  for (let y = 0; y < newH; y++) ys[y] = newH === 1 ? 0 : (y * (h - 1)) / (newH - 1);
  for (let ch = 0; ch < c; ch++) {
    const src = channelView(inp, ch);
    const dst = channelView(out, ch);
    for (let y = 0; y < newH; y++) {
      const sy = ys[y];
      const y0 = Math.min(Math.floor(sy), h - 2);
      const ty = sy - y0;
      for (let x = 0; x < newW; x++) {
        const sx = xs[x];
        const x0 = Math.min(Math.floor(sx), w - 2);
        const tx = sx - x0;
        const a = src[y0 * w + x0];
        const b = src[y0 * w + x0 + 1];
        const d = src[(y0 + 1) * w + x0];
        const e = src[(y0 + 1) * w + x0 + 1];
        dst[y * newW + x] = Math.fround(
          a * (1 - tx) * (1 - ty) + b * tx * (1 - ty) + d * (1 - tx) * ty + e * tx * ty,
        );
      }
    }
  }
  return out;
}

/** Root mean square over every value of the tensor. */
export function tensorRms(t: Tensor): number {
  let sum = 0;
  for (let i = 0; i < t.data.length; i++) sum += t.data[i] * t.data[i];
  return Math.sqrt(sum / t.data.length);
}

/** Divide all channels by the global RMS (no-op for almost-zero tensors). */
export function rmsNormalize(t: Tensor): Tensor {
  const rms = tensorRms(t);
  if (rms < 1e-12) return t;
  const inv = 1 / rms;
  const data = new Float32Array(t.data.length);
  for (let i = 0; i < data.length; i++) data[i] = Math.fround(t.data[i] * inv);
  return { c: t.c, h: t.h, w: t.w, data };
}

export function assertFinite(t: Tensor, label: string): void {
  for (let i = 0; i < t.data.length; i++) {
    if (!Number.isFinite(t.data[i])) {
      throw new Error(`${label}: non-finite value at flat index ${i}`);
    }
  }
}
