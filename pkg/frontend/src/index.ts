export {
  CsvSchemaError,
  TRACE_COLUMNS,
  parseSweepCsv,
  parseTraceCsv,
  readSweep,
  readTrace,
  type SweepTable,
  type TraceRow,
} from "./csv.js";
export {
  FigureDataError,
  LOG_FLOOR,
  epochLossFigure,
  flooredLog,
  kSweepFigure,
  metricGridFigure,
  type GridCell,
  type GridMetric,
  type LabeledTrace,
} from "./figures.js";
export { svgToPng } from "./png.js";
export { PALETTE, escapeXml, renderFigure, type FigureSpec, type PanelSpec, type Series } from "./svg.js";
export { main } from "./cli.js";
