import { describe, expect, it } from "vitest";

import { fitTransform, toScreen, trackBounds } from "../src/render";

describe("world to screen fit", () => {
  it("centers the bounds and preserves aspect with a 10% margin", () => {
    const bounds = { minX: -10, maxX: 30, minY: 0, maxY: 10 };
    const view = { width: 400, height: 300 };
    const t = fitTransform(bounds, view);
    expect(t.scale).toBeCloseTo(0.9 * Math.min(400 / 40, 300 / 10), 12);
    const [cx, cy] = toScreen(t, 10, 5); // world midpoint lands on the center
    expect(cx).toBeCloseTo(200, 9);
    expect(cy).toBeCloseTo(150, 9);
  });

  it("flips the y axis so world-up is screen-up", () => {
    const t = fitTransform({ minX: -1, maxX: 1, minY: -1, maxY: 1 },
      { width: 100, height: 100 });
    const [, yLow] = toScreen(t, 0, -1);
    const [, yHigh] = toScreen(t, 0, 1);
    expect(yHigh).toBeLessThan(yLow);
  });

  it("survives degenerate bounds without dividing by zero", () => {
    const t = fitTransform({ minX: 2, maxX: 2, minY: 3, maxY: 3 },
      { width: 100, height: 100 });
    expect(Number.isFinite(t.scale)).toBe(true);
    const [sx, sy] = toScreen(t, 2, 3);
    expect(sx).toBeCloseTo(50, 6);
    expect(sy).toBeCloseTo(50, 6);
  });

  it("collects track bounds", () => {
    expect(trackBounds([[0, 1], [-2, 5], [4, -3]]))
      .toEqual({ minX: -2, maxX: 4, minY: -3, maxY: 5 });
  });
});
