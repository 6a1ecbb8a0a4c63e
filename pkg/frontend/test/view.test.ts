import { describe, expect, it } from "vitest";
import type { SessionInfo } from "../src/api.js";
import {
  clampIndex,
  initView,
  pushHistory,
  sequenceComplete,
  sliceShape,
  sliceToVoxel,
  withAxis,
  withSlice,
} from "../src/view.js";

const INFO: SessionInfo = {
  id: "abc",
  dims: [6, 10, 14],
  spacing: [1, 1, 1],
  iteration: 0,
  T: 4,
  has_gt: true,
};

describe("initView", () => {
  it("starts on the middle z slice in object mode", () => {
    const v = initView(INFO);
    expect(v.axis).toBe("z");
    expect(v.index).toBe(3);
    expect(v.clickMode).toBe("object");
    expect(v.layers.probability.visible).toBe(true);
    expect(v.history).toEqual([]);
  });
});

describe("slice navigation", () => {
  it("clamps the slider to the axis extent", () => {
    const v = initView(INFO);
    expect(clampIndex(v, -5)).toBe(0);
    expect(clampIndex(v, 99)).toBe(5);
    expect(withSlice(v, 2).index).toBe(2);
  });

  it("recenters when the axis changes", () => {
    const v = withAxis(initView(INFO), "x");
    expect(v.axis).toBe("x");
    expect(v.index).toBe(7);
  });

  it("reports the displayed slice shape per axis", () => {
    const v = initView(INFO);
    expect(sliceShape(v)).toEqual([10, 14]);
    expect(sliceShape(withAxis(v, "y"))).toEqual([6, 14]);
    expect(sliceShape(withAxis(v, "x"))).toEqual([6, 10]);
  });
});

describe("sliceToVoxel", () => {
  it("maps pixel positions to voxel coordinates on each axis", () => {
    const v = withSlice(initView(INFO), 2);
    expect(sliceToVoxel(v, 4, 9)).toEqual([2, 4, 9]);
    expect(sliceToVoxel(withSlice(withAxis(v, "y"), 7), 3, 11)).toEqual([3, 7, 11]);
    expect(sliceToVoxel(withSlice(withAxis(v, "x"), 12), 5, 8)).toEqual([5, 8, 12]);
  });

  it("returns null outside the slice", () => {
    const v = initView(INFO);
    expect(sliceToVoxel(v, -1, 0)).toBeNull();
    expect(sliceToVoxel(v, 0, 14)).toBeNull();
  });

  it("floors fractional canvas coordinates", () => {
    const v = withSlice(initView(INFO), 1);
    expect(sliceToVoxel(v, 2.9, 6.1)).toEqual([1, 2, 6]);
  });
});

describe("history", () => {
  it("tracks iterations and flags a complete sequence", () => {
    let v = initView(INFO);
    expect(sequenceComplete(v)).toBe(false);
    for (let i = 1; i <= 4; i++) {
      v = pushHistory(v, { iteration: i, changedVoxels: 10 * i, dsc: 0.5 + 0.1 * i });
    }
    expect(v.history.length).toBe(4);
    expect(v.iteration).toBe(4);
    expect(sequenceComplete(v)).toBe(true);
  });
});
