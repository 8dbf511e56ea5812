/** Class colors (palette order = server class_names order) and the heatmap ramp. */

export type Rgb = [number, number, number];

// distinct hues, repeated with a shade drop past twelve classes
const BASE_PALETTE: Rgb[] = [
  [0.36, 0.65, 0.96], [0.98, 0.55, 0.18], [0.38, 0.80, 0.36], [0.90, 0.25, 0.28],
  [0.64, 0.46, 0.86], [0.95, 0.85, 0.25], [0.25, 0.82, 0.78], [0.92, 0.45, 0.75],
  [0.58, 0.44, 0.26], [0.55, 0.71, 0.20], [0.33, 0.38, 0.85], [0.75, 0.75, 0.75],
];

export function classColor(classId: number): Rgb {
  const base = BASE_PALETTE[classId % BASE_PALETTE.length];
  const shade = classId < BASE_PALETTE.length ? 1.0 : 0.55;
  return [base[0] * shade, base[1] * shade, base[2] * shade];
}

/**
 * Perceptually-ordered cold-to-hot ramp for uncertainty, normalized per scene
 * by the maximum observed value (an all-zero map renders uniformly cold).
 */
export function uncertaintyRamp(values: Float32Array): Float32Array {
  let max = 0;
  for (let i = 0; i < values.length; i++) {
    if (values[i] > max) max = values[i];
  }
  const out = new Float32Array(values.length * 3);
  for (let i = 0; i < values.length; i++) {
    const t = max > 0 ? values[i] / max : 0;
    // dark blue -> cyan -> yellow -> red
    out[3 * i] = Math.min(1, Math.max(0, 2.4 * t - 0.6));
    out[3 * i + 1] = t < 0.5 ? 1.6 * t : 1.4 - 0.9 * t;
    out[3 * i + 2] = Math.max(0, 0.9 - 1.8 * t);
  }
  return out;
}
