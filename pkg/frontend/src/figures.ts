import { CsvSchemaError, type SweepTable, type TraceRow } from "./csv.js";
import type { FigureSpec, PanelSpec, Series } from "./svg.js";

/** Zeros are clamped here before going on a log axis. */
export const LOG_FLOOR = 1e-16;

export class FigureDataError extends Error {}

export interface LabeledTrace {
  label: string;
  trace: TraceRow[];
}

export interface GridCell {
  b: number;
  k: number;
  runs: LabeledTrace[];
}

export type GridMetric = "dist_to_opt" | "v_variance";

function requireNonEmpty(run: LabeledTrace): void {
  if (run.trace.length === 0) {
    throw new FigureDataError(`empty trace for ${run.label}: nothing to plot`);
  }
}

/** One panel, one loss-vs-epoch curve per labeled run. */
export function epochLossFigure(runs: LabeledTrace[]): FigureSpec {
  if (runs.length === 0) throw new FigureDataError("no runs given");
  runs.forEach(requireNonEmpty);
  const panel: PanelSpec = {
    xLabel: "epoch",
    yLabel: "loss",
    series: runs.map((run) => ({
      label: run.label,
      x: run.trace.map((r) => r.epoch),
      y: run.trace.map((r) => r.loss),
    })),
  };
  return { panels: [panel], panelWidth: 480, panelHeight: 360 };
}

export function flooredLog(values: number[]): number[] {
  return values.map((v) => Math.max(v, LOG_FLOOR));
}

function metricValues(metric: GridMetric, run: LabeledTrace): number[] {
  if (metric === "v_variance") return run.trace.map((r) => r.vVariance);
  return run.trace.map((r, i) => {
    if (r.distToOpt === null) {
      throw new FigureDataError(
        `dist_to_opt is empty in row ${i} of ${run.label}; the problem has no known optimum`
      );
    }
    return r.distToOpt;
  });
}

/**
 * Panel grid over (b, k): rows are b values, columns are k values, log y.
 * The cell list must cover the full cartesian product exactly once.
 */
export function metricGridFigure(metric: GridMetric, cells: GridCell[]): FigureSpec {
  if (cells.length === 0) throw new FigureDataError("no grid cells given");
  const bs = [...new Set(cells.map((c) => c.b))].sort((a, b) => a - b);
  const ks = [...new Set(cells.map((c) => c.k))].sort((a, b) => a - b);
  const byKey = new Map<string, GridCell>();
  for (const cell of cells) {
    const key = `${cell.b}|${cell.k}`;
    if (byKey.has(key)) {
      throw new FigureDataError(`duplicate grid cell (b=${cell.b}, k=${cell.k})`);
    }
    byKey.set(key, cell);
  }
  const panels: PanelSpec[] = [];
  for (const b of bs) {
    for (const k of ks) {
      const cell = byKey.get(`${b}|${k}`);
      if (cell === undefined) {
        throw new FigureDataError(`missing grid cell (b=${b}, k=${k})`);
      }
      cell.runs.forEach(requireNonEmpty);
      const series: Series[] = cell.runs.map((run) => ({
        label: run.label,
        x: run.trace.map((r) => r.t),
        y: flooredLog(metricValues(metric, run)),
      }));
      panels.push({
        title: `b=${b}, k=${k}`,
        xLabel: "t",
        yLabel: metric === "v_variance" ? "v variance" : "distance to optimum",
        logY: true,
        series,
      });
    }
  }
  return { panels, columns: ks.length };
}

/** One loss-vs-epoch panel per swept value, in ascending value order. */
export function kSweepFigure(table: SweepTable): FigureSpec {
  if (table.rows.length === 0) {
    throw new FigureDataError(`sweep over ${table.axis || "?"} has no rows`);
  }
  const order: string[] = [];
  const grouped = new Map<string, TraceRow[]>();
  for (const { value, row } of table.rows) {
    let bucket = grouped.get(value);
    if (bucket === undefined) {
      bucket = [];
      grouped.set(value, bucket);
      order.push(value);
    }
    bucket.push(row);
  }
  if (order.every((v) => Number.isFinite(Number(v)))) {
    order.sort((a, b) => Number(a) - Number(b));
  }
  const panels = order.map((value): PanelSpec => {
    const rows = grouped.get(value) as TraceRow[];
    return {
      title: `${table.axis}=${value}`,
      xLabel: "epoch",
      yLabel: "loss",
      series: [
        {
          label: `${table.axis}=${value}`,
          x: rows.map((r) => r.epoch),
          y: rows.map((r) => r.loss),
        },
      ],
    };
  });
  return { panels, columns: Math.min(3, panels.length) };
}
