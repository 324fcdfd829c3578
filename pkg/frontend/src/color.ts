import type { RGB } from "./types.js";

/** Convert a unit-range RGB triplet to a #rrggbb hex string. */
export function rgbToHex(color: RGB): string {
  const channel = (v: number) => {
    const byte = Math.round(Math.min(1, Math.max(0, v)) * 255);
    return byte.toString(16).padStart(2, "0");
  };
  return `#${channel(color[0])}${channel(color[1])}${channel(color[2])}`;
}

/** Parse a #rrggbb (or #rgb) hex string into unit-range RGB. */
export function hexToRgb(hex: string): RGB {
  let h = hex.trim().replace(/^#/, "");
  if (h.length === 3) {
    h = h.split("").map((c) => c + c).join("");
  }
  if (!/^[0-9a-fA-F]{6}$/.test(h)) {
    throw new Error(`not a hex color: ${hex}`);
  }
  return [
    parseInt(h.slice(0, 2), 16) / 255,
    parseInt(h.slice(2, 4), 16) / 255,
    parseInt(h.slice(4, 6), 16) / 255,
  ];
}

export function sameColor(a: RGB, b: RGB, tol = 1e-9): boolean {
  return Math.abs(a[0] - b[0]) <= tol && Math.abs(a[1] - b[1]) <= tol
    && Math.abs(a[2] - b[2]) <= tol;
}
