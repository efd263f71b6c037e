#!/usr/bin/env node
import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { parseArgs } from "node:util";

import { CsvSchemaError, readSweep, readTrace } from "./csv.js";
import {
  FigureDataError,
  epochLossFigure,
  kSweepFigure,
  metricGridFigure,
  type GridCell,
  type GridMetric,
  type LabeledTrace,
} from "./figures.js";
import { svgToPng } from "./png.js";
import { renderFigure } from "./svg.js";

const USAGE = `usage: localsgd-figures <command> [options]

commands:
  epoch-loss  --out STEM --run LABEL=DIR [--run LABEL=DIR ...]
  grid        --metric dist_to_opt|v_variance --out STEM
              --cell b=B,k=K,label=LABEL,dir=DIR [--cell ...]
  k-sweep     --out STEM --sweep SWEEP_CSV

Every command writes STEM.svg and STEM.png next to each other.
Run directories are read for their trace.csv only.`;

class UsageError extends Error {}

function parseRunSpec(spec: string): LabeledTrace {
  const eq = spec.indexOf("=");
  if (eq <= 0) throw new UsageError(`--run wants LABEL=DIR, got ${JSON.stringify(spec)}`);
  const label = spec.slice(0, eq);
  const dir = spec.slice(eq + 1);
  return { label, trace: readTrace(join(dir, "trace.csv")) };
}

function parseCellSpec(spec: string): { b: number; k: number; label: string; dir: string } {
  const fields = new Map<string, string>();
  for (const part of spec.split(",")) {
    const eq = part.indexOf("=");
    if (eq <= 0) throw new UsageError(`--cell wants b=B,k=K,label=L,dir=D, got ${JSON.stringify(spec)}`);
    fields.set(part.slice(0, eq), part.slice(eq + 1));
  }
  for (const key of ["b", "k", "label", "dir"]) {
    if (!fields.has(key)) throw new UsageError(`--cell ${JSON.stringify(spec)} is missing ${key}=`);
  }
  const b = Number(fields.get("b"));
  const k = Number(fields.get("k"));
  if (!Number.isFinite(b) || !Number.isFinite(k)) {
    throw new UsageError(`--cell ${JSON.stringify(spec)} has non-numeric b or k`);
  }
  return { b, k, label: fields.get("label") as string, dir: fields.get("dir") as string };
}

function writeFigurePair(stem: string, svg: string): void {
  mkdirSync(dirname(stem) || ".", { recursive: true });
  writeFileSync(`${stem}.svg`, svg);
  writeFileSync(`${stem}.png`, svgToPng(svg));
  console.log(`wrote ${stem}.svg`);
  console.log(`wrote ${stem}.png`);
}

function requireOut(out: string | undefined): string {
  if (out === undefined || out === "") throw new UsageError("--out STEM is required");
  return out;
}

function cmdEpochLoss(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: { out: { type: "string" }, run: { type: "string", multiple: true } },
  });
  const runs = (values.run ?? []).map(parseRunSpec);
  if (runs.length === 0) throw new UsageError("epoch-loss needs at least one --run LABEL=DIR");
  const svg = renderFigure(epochLossFigure(runs));
  writeFigurePair(requireOut(values.out), svg);
  return 0;
}

function cmdGrid(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      out: { type: "string" },
      metric: { type: "string" },
      cell: { type: "string", multiple: true },
    },
  });
  const metric = values.metric;
  if (metric !== "dist_to_opt" && metric !== "v_variance") {
    throw new UsageError("--metric must be dist_to_opt or v_variance");
  }
  const specs = (values.cell ?? []).map(parseCellSpec);
  if (specs.length === 0) throw new UsageError("grid needs at least one --cell b=B,k=K,label=L,dir=D");
  // several runs may share one (b, k) panel, so merge before validating the grid
  const cells: GridCell[] = [];
  for (const spec of specs) {
    const run = { label: spec.label, trace: readTrace(join(spec.dir, "trace.csv")) };
    const existing = cells.find((c) => c.b === spec.b && c.k === spec.k);
    if (existing) existing.runs.push(run);
    else cells.push({ b: spec.b, k: spec.k, runs: [run] });
  }
  const svg = renderFigure(metricGridFigure(metric as GridMetric, cells));
  writeFigurePair(requireOut(values.out), svg);
  return 0;
}

function cmdKSweep(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: { out: { type: "string" }, sweep: { type: "string" } },
  });
  if (values.sweep === undefined) throw new UsageError("k-sweep needs --sweep SWEEP_CSV");
  const svg = renderFigure(kSweepFigure(readSweep(values.sweep)));
  writeFigurePair(requireOut(values.out), svg);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "epoch-loss":
        return cmdEpochLoss(rest);
      case "grid":
        return cmdGrid(rest);
      case "k-sweep":
        return cmdKSweep(rest);
      case undefined:
      case "--help":
      case "-h":
        console.log(USAGE);
        return command === undefined ? 1 : 0;
      default:
        throw new UsageError(`unknown command ${JSON.stringify(command)}`);
    }
  } catch (err) {
    if (
      err instanceof UsageError ||
      err instanceof CsvSchemaError ||
      err instanceof FigureDataError ||
      err instanceof TypeError // parseArgs rejects unknown flags with TypeError
    ) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  (import.meta.url.endsWith("/cli.js") || import.meta.url.endsWith("/cli.ts")) &&
  (process.argv[1].endsWith("/cli.js") ||
    process.argv[1].endsWith("/cli.ts") ||
    process.argv[1].endsWith("localsgd-figures"));
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
