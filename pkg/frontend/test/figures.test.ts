import { describe, expect, it } from "vitest";

import type { TraceRow } from "../src/csv.js";
import {
  FigureDataError,
  LOG_FLOOR,
  epochLossFigure,
  flooredLog,
  kSweepFigure,
  metricGridFigure,
  type GridCell,
} from "../src/figures.js";

function row(t: number, overrides: Partial<TraceRow> = {}): TraceRow {
  return {
    t,
    epoch: t,
    loss: 1 / (t + 1),
    gradNormSq: 1,
    drift: 0,
    vVariance: 0.5,
    deltaResidual: 0,
    distToOpt: 2 / (t + 1),
    ...overrides,
  };
}

function trace(n: number, overrides: Partial<TraceRow> = {}): TraceRow[] {
  return Array.from({ length: n }, (_, t) => row(t, overrides));
}

describe("epochLossFigure", () => {
  it("builds one panel with one series per run", () => {
    const fig = epochLossFigure([
      { label: "ssgd", trace: trace(5) },
      { label: "vrlsgd", trace: trace(5) },
    ]);
    expect(fig.panels).toHaveLength(1);
    expect(fig.panels[0]?.series.map((s) => s.label)).toEqual(["ssgd", "vrlsgd"]);
    expect(fig.panels[0]?.series[0]?.x).toEqual([0, 1, 2, 3, 4]);
  });

  it("rejects an empty trace by name", () => {
    expect(() => epochLossFigure([{ label: "easgd", trace: [] }])).toThrow(/empty trace for easgd/);
  });

  it("rejects an empty run list", () => {
    expect(() => epochLossFigure([])).toThrow(FigureDataError);
  });
});

describe("flooredLog", () => {
  it("clamps zeros and tiny values to the floor", () => {
    expect(flooredLog([0, 1e-20, 1e-3])).toEqual([LOG_FLOOR, LOG_FLOOR, 1e-3]);
  });
});

describe("metricGridFigure", () => {
  function cell(b: number, k: number): GridCell {
    return { b, k, runs: [{ label: "localsgd", trace: trace(4) }] };
  }

  it("lays panels out row-major over sorted (b, k)", () => {
    const fig = metricGridFigure("v_variance", [cell(2, 20), cell(1, 10), cell(1, 20), cell(2, 10)]);
    expect(fig.columns).toBe(2);
    expect(fig.panels.map((p) => p.title)).toEqual([
      "b=1, k=10",
      "b=1, k=20",
      "b=2, k=10",
      "b=2, k=20",
    ]);
    expect(fig.panels.every((p) => p.logY)).toBe(true);
  });

  it("floors v_variance zeros before the log axis", () => {
    const cells = [{ b: 1, k: 10, runs: [{ label: "vrl", trace: trace(3, { vVariance: 0 }) }] }];
    const fig = metricGridFigure("v_variance", cells);
    expect(fig.panels[0]?.series[0]?.y).toEqual([LOG_FLOOR, LOG_FLOOR, LOG_FLOOR]);
  });

  it("names the missing cell of an incomplete grid", () => {
    const cells = [cell(1, 10), cell(1, 40), cell(2, 10)];
    expect(() => metricGridFigure("v_variance", cells)).toThrow(/missing grid cell \(b=2, k=40\)/);
  });

  it("rejects duplicate cells", () => {
    expect(() => metricGridFigure("v_variance", [cell(1, 10), cell(1, 10)])).toThrow(
      /duplicate grid cell \(b=1, k=10\)/
    );
  });

  it("rejects dist_to_opt panels when the optimum is unknown", () => {
    const cells = [{ b: 1, k: 10, runs: [{ label: "run", trace: trace(3, { distToOpt: null }) }] }];
    expect(() => metricGridFigure("dist_to_opt", cells)).toThrow(/dist_to_opt is empty/);
    expect(() => metricGridFigure("v_variance", cells)).not.toThrow();
  });
});

describe("kSweepFigure", () => {
  it("makes one panel per value in numeric order", () => {
    const rows = [
      ...trace(3).map((r) => ({ value: "20", row: r })),
      ...trace(3).map((r) => ({ value: "5", row: r })),
      ...trace(3).map((r) => ({ value: "10", row: r })),
    ];
    const fig = kSweepFigure({ axis: "k", rows });
    expect(fig.panels.map((p) => p.title)).toEqual(["k=5", "k=10", "k=20"]);
  });

  it("rejects an empty sweep", () => {
    expect(() => kSweepFigure({ axis: "k", rows: [] })).toThrow(FigureDataError);
  });
});
