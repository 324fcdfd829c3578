import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { StudioSession } from "../src/session.js";
import type { LayerMeta, RGB } from "../src/types.js";

const META: LayerMeta = {
  layer_id: "layer-1",
  width: 32,
  height: 16,
  frames: 1,
  num_layers: 2,
  palette: [[1, 0, 0], [0, 0, 1]],
};

function makeRecolor() {
  const calls: RGB[][] = [];
  let fail = false;
  const fn = async (colors: RGB[]) => {
    calls.push(colors.map((c) => [...c] as RGB));
    if (fail) throw new Error("server unreachable");
    return new Blob([JSON.stringify(colors)]);
  };
  return { fn, calls, setFail: (v: boolean) => { fail = v; } };
}

describe("StudioSession swatch editing", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("debounces rapid edits into few requests, latest edit wins", async () => {
    const { fn, calls } = makeRecolor();
    const session = new StudioSession(META, fn, {}, 100);
    for (let i = 0; i < 10; i++) {
      expect(session.editSwatch(0, [i / 10, 0, 0])).toBe(true);
      vi.advanceTimersByTime(20); // faster than the debounce window
    }
    await vi.runAllTimersAsync();
    expect(calls.length).toBeLessThanOrEqual(10);
    expect(calls.length).toBeGreaterThanOrEqual(1);
    expect(calls[calls.length - 1][0]).toEqual([0.9, 0, 0]);
    expect(session.requestCount).toBe(calls.length);
  });

  it("keeps at most one request in flight", async () => {
    let active = 0;
    let maxActive = 0;
    const resolvers: Array<() => void> = [];
    const session = new StudioSession(META, async () => {
      active += 1;
      maxActive = Math.max(maxActive, active);
      await new Promise<void>((resolve) => resolvers.push(resolve));
      active -= 1;
      return new Blob(["x"]);
    }, {}, 10);

    session.editSwatch(0, [0.1, 0, 0]);
    await vi.advanceTimersByTimeAsync(15);
    session.editSwatch(0, [0.2, 0, 0]);
    await vi.advanceTimersByTimeAsync(15);
    session.editSwatch(0, [0.3, 0, 0]);
    await vi.advanceTimersByTimeAsync(15);
    while (resolvers.length) {
      resolvers.shift()!();
      await vi.runAllTimersAsync();
    }
    expect(maxActive).toBe(1);
  });

  it("acknowledged response becomes the preview", async () => {
    const { fn } = makeRecolor();
    const previews: Blob[] = [];
    const session = new StudioSession(META, fn,
      { onPreview: (b) => previews.push(b) }, 50);
    session.editSwatch(1, [0, 1, 0]);
    await vi.runAllTimersAsync();
    expect(previews.length).toBe(1);
    expect(session.preview).toBe(previews[0]);
  });

  it("reports a banner and keeps editing locally when the server fails", async () => {
    const { fn, calls, setFail } = makeRecolor();
    const banners: Array<string | null> = [];
    const session = new StudioSession(META, fn,
      { onBanner: (m) => banners.push(m) }, 50);
    setFail(true);
    session.editSwatch(0, [0.5, 0, 0]);
    await vi.runAllTimersAsync();
    expect(banners).toContain("server unreachable");
    expect(session.palette[0]).toEqual([0.5, 0, 0]);
    setFail(false);
    session.editSwatch(0, [0.6, 0, 0]);
    await vi.runAllTimersAsync();
    expect(calls[calls.length - 1][0]).toEqual([0.6, 0, 0]);
    expect(banners[banners.length - 1]).toBeNull();
  });

  it("restores the original color on reset", async () => {
    const { fn } = makeRecolor();
    const session = new StudioSession(META, fn, {}, 10);
    session.editSwatch(0, [0.2, 0.2, 0.2]);
    session.resetSwatch(0);
    await vi.runAllTimersAsync();
    expect(session.palette[0]).toEqual([1, 0, 0]);
    expect(session.originalPalette).toEqual(META.palette);
  });

  it("rejects edits while a decomposition job runs", () => {
    const { fn, calls } = makeRecolor();
    const session = new StudioSession(META, fn, {}, 10);
    session.beginRedecompose();
    expect(session.canEdit).toBe(false);
    expect(session.editSwatch(0, [0, 1, 0])).toBe(false);
    expect(calls.length).toBe(0);
  });
});

describe("StudioSession constraints", () => {
  it("paint then undo leaves no strokes", () => {
    const { fn } = makeRecolor();
    const session = new StudioSession(META, fn);
    session.paintConstraint([{ x: 1, y: 2 }, { x: 3, y: 4 }], 0, 1.0);
    expect(session.strokes.length).toBe(2);
    expect(session.undoStroke()).toBe(true);
    expect(session.strokes).toEqual([]);
    expect(session.undoStroke()).toBe(false);
  });

  it("exports the constraints JSON schema the solver accepts", () => {
    const { fn } = makeRecolor();
    const session = new StudioSession(META, fn);
    session.paintConstraint([{ x: 4.4, y: 7.6 }], 1, 1.0);
    const doc = JSON.parse(session.exportConstraints());
    expect(doc).toEqual({
      strokes: [{ x: 4, y: 8, t: 0, layer: 1, value: 1.0 }],
    });
    for (const stroke of doc.strokes) {
      expect(Number.isInteger(stroke.x)).toBe(true);
      expect(Number.isInteger(stroke.y)).toBe(true);
      expect(Number.isInteger(stroke.t)).toBe(true);
      expect(Number.isInteger(stroke.layer)).toBe(true);
      expect(stroke.value).toBeGreaterThanOrEqual(0);
      expect(stroke.value).toBeLessThanOrEqual(1);
    }
  });

  it("rejects invalid layers and values", () => {
    const { fn } = makeRecolor();
    const session = new StudioSession(META, fn);
    expect(session.paintConstraint([{ x: 0, y: 0 }], 5, 1.0)).toBe(false);
    expect(session.paintConstraint([{ x: 0, y: 0 }], 0, 1.5)).toBe(false);
    expect(session.paintConstraint([], 0, 1.0)).toBe(false);
    expect(session.strokes).toEqual([]);
  });

  it("re-decompose lifecycle adopts the new layer set", () => {
    const { fn } = makeRecolor();
    const states: boolean[] = [];
    const session = new StudioSession(META, fn,
      { onJobState: (s) => states.push(s) });
    session.paintConstraint([{ x: 1, y: 1 }], 0, 1.0);
    session.beginRedecompose();
    expect(session.jobRunning).toBe(true);
    const newMeta: LayerMeta = {
      ...META, layer_id: "layer-2", palette: [[0.9, 0.1, 0], [0, 0.1, 0.9]],
    };
    session.adoptLayers(newMeta);
    expect(session.layerId).toBe("layer-2");
    expect(session.palette).toEqual(newMeta.palette);
    expect(session.originalPalette).toEqual(newMeta.palette);
    expect(session.strokes).toEqual([]);
    expect(session.jobRunning).toBe(false);
    expect(states).toEqual([true, false]);
  });
});
