import { readFileSync } from "node:fs";

/** Column order the simulator writes; parsing is strict about it. */
export const TRACE_COLUMNS = [
  "t",
  "epoch",
  "loss",
  "grad_norm_sq",
  "drift",
  "v_variance",
  "delta_residual",
  "dist_to_opt",
] as const;

export type TraceColumn = (typeof TRACE_COLUMNS)[number];

export interface TraceRow {
  t: number;
  epoch: number;
  loss: number;
  gradNormSq: number;
  drift: number;
  vVariance: number;
  deltaResidual: number;
  /** null when the optimum is unknown and the field was left empty. */
  distToOpt: number | null;
}

export interface SweepTable {
  axis: string;
  /** Axis value per row, as written (k and workers are integers, b_param a float). */
  rows: Array<{ value: string; row: TraceRow }>;
}

export class CsvSchemaError extends Error {}

function splitLines(text: string): string[] {
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
  return lines;
}

function parseNumber(field: string, column: string, source: string, lineNo: number): number {
  const value = Number(field);
  if (field.trim() === "" || !Number.isFinite(value)) {
    throw new CsvSchemaError(
      `${source}:${lineNo}: column ${column} is not a finite number: ${JSON.stringify(field)}`
    );
  }
  return value;
}

function rowFromFields(fields: string[], source: string, lineNo: number): TraceRow {
  if (fields.length !== TRACE_COLUMNS.length) {
    throw new CsvSchemaError(
      `${source}:${lineNo}: expected ${TRACE_COLUMNS.length} fields, got ${fields.length}`
    );
  }
  const at = (i: number) => fields[i] as string;
  const num = (i: number) => parseNumber(at(i), TRACE_COLUMNS[i] as string, source, lineNo);
  return {
    t: num(0),
    epoch: num(1),
    loss: num(2),
    gradNormSq: num(3),
    drift: num(4),
    vVariance: num(5),
    deltaResidual: num(6),
    distToOpt: at(7) === "" ? null : num(7),
  };
}

/** Parse a single-run trace.csv. Returns [] for a header-only file. */
export function parseTraceCsv(text: string, source: string): TraceRow[] {
  const lines = splitLines(text);
  const expected = TRACE_COLUMNS.join(",");
  if (lines.length === 0 || lines[0] !== expected) {
    throw new CsvSchemaError(
      `${source}: header mismatch: expected ${JSON.stringify(expected)}, got ${JSON.stringify(lines[0] ?? "")}`
    );
  }
  return lines.slice(1).map((line, i) => rowFromFields(line.split(","), source, i + 2));
}

/** Parse a combined sweep.csv: one leading axis column, then the trace columns. */
export function parseSweepCsv(text: string, source: string): SweepTable {
  const lines = splitLines(text);
  const header = (lines[0] ?? "").split(",");
  const axis = header[0] ?? "";
  if (axis === "" || header.slice(1).join(",") !== TRACE_COLUMNS.join(",")) {
    throw new CsvSchemaError(
      `${source}: header mismatch: expected an axis column followed by ${TRACE_COLUMNS.join(",")}`
    );
  }
  const rows = lines.slice(1).map((line, i) => {
    const fields = line.split(",");
    const value = fields[0];
    if (value === undefined || value === "") {
      throw new CsvSchemaError(`${source}:${i + 2}: empty ${axis} value`);
    }
    return { value, row: rowFromFields(fields.slice(1), source, i + 2) };
  });
  return { axis, rows };
}

export function readTrace(path: string): TraceRow[] {
  return parseTraceCsv(readText(path), path);
}

export function readSweep(path: string): SweepTable {
  return parseSweepCsv(readText(path), path);
}

function readText(path: string): string {
  try {
    return readFileSync(path, "utf8");
  } catch (err) {
    throw new CsvSchemaError(`cannot read ${path}: ${(err as Error).message}`);
  }
}
