import { extent } from "d3-array";
import { scaleLinear, scaleLog, type ScaleContinuousNumeric } from "d3-scale";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color?: string;
}

export interface PanelSpec {
  title?: string;
  xLabel: string;
  yLabel: string;
  /** Base-10 log y axis; every y must already be positive. */
  logY?: boolean;
  series: Series[];
}

export interface FigureSpec {
  panels: PanelSpec[];
  /** Panels per row; defaults to all panels in one row. */
  columns?: number;
  panelWidth?: number;
  panelHeight?: number;
}

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

const MARGIN = { top: 30, right: 14, bottom: 42, left: 64 };

export function escapeXml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function seriesColor(s: Series, index: number): string {
  return s.color ?? (PALETTE[index % PALETTE.length] as string);
}

type Scale = ScaleContinuousNumeric<number, number>;

function makeScales(panel: PanelSpec, innerW: number, innerH: number): { x: Scale; y: Scale } {
  const xs = panel.series.flatMap((s) => s.x);
  const ys = panel.series.flatMap((s) => s.y);
  let [x0, x1] = extent(xs) as [number, number];
  let [y0, y1] = extent(ys) as [number, number];
  if (x0 === x1) [x0, x1] = [x0 - 1, x1 + 1];
  if (panel.logY) {
    if (y0 === y1) [y0, y1] = [y0 / 10, y1 * 10];
    const y = scaleLog().domain([y0, y1]).range([innerH, 0]).nice();
    return { x: scaleLinear().domain([x0, x1]).range([0, innerW]).nice(), y };
  }
  if (y0 === y1) [y0, y1] = [y0 - 1, y1 + 1];
  return {
    x: scaleLinear().domain([x0, x1]).range([0, innerW]).nice(),
    y: scaleLinear().domain([y0, y1]).range([innerH, 0]).nice(),
  };
}

function tickValues(scale: Scale, log: boolean): number[] {
  if (!log) return scale.ticks(5);
  // prefer whole decades so the 1e-16 floor keeps its tick
  const raw = scale.ticks();
  const powers = raw.filter((v) => {
    const e = Math.log10(v);
    return Math.abs(e - Math.round(e)) < 1e-9;
  });
  const chosen = powers.length >= 2 ? powers : raw;
  const stride = Math.ceil(chosen.length / 6);
  return chosen.filter((_, i) => i % stride === 0);
}

function formatTick(value: number, log: boolean): string {
  if (log) {
    const e = Math.round(Math.log10(value));
    if (Math.abs(value - 10 ** e) <= Math.abs(value) * 1e-9) {
      return e === 0 ? "1" : `1e${e}`;
    }
    return value.toExponential(0);
  }
  if (value !== 0 && (Math.abs(value) >= 1e4 || Math.abs(value) < 1e-3)) {
    return value.toExponential(1);
  }
  return String(parseFloat(value.toPrecision(6)));
}

function renderPanel(panel: PanelSpec, ox: number, oy: number, w: number, h: number): string {
  const innerW = w - MARGIN.left - MARGIN.right;
  const innerH = h - MARGIN.top - MARGIN.bottom;
  const { x, y } = makeScales(panel, innerW, innerH);
  const left = ox + MARGIN.left;
  const top = oy + MARGIN.top;
  const parts: string[] = [];

  parts.push(`<g font-family="Helvetica, Arial, sans-serif" font-size="11">`);
  if (panel.title) {
    parts.push(
      `<text x="${left + innerW / 2}" y="${oy + 18}" text-anchor="middle" font-size="13">` +
        `${escapeXml(panel.title)}</text>`
    );
  }
  for (const ty of tickValues(y, panel.logY === true)) {
    const py = top + y(ty);
    parts.push(
      `<line x1="${left}" y1="${py}" x2="${left + innerW}" y2="${py}" stroke="#ddd" stroke-width="0.5"/>`,
      `<text x="${left - 6}" y="${py + 3.5}" text-anchor="end">${escapeXml(formatTick(ty, panel.logY === true))}</text>`
    );
  }
  for (const tx of tickValues(x, false)) {
    const px = left + x(tx);
    parts.push(
      `<line x1="${px}" y1="${top + innerH}" x2="${px}" y2="${top + innerH + 4}" stroke="#000" stroke-width="0.75"/>`,
      `<text x="${px}" y="${top + innerH + 16}" text-anchor="middle">${escapeXml(formatTick(tx, false))}</text>`
    );
  }
  parts.push(
    `<rect x="${left}" y="${top}" width="${innerW}" height="${innerH}" fill="none" stroke="#000" stroke-width="1"/>`,
    `<text x="${left + innerW / 2}" y="${oy + h - 8}" text-anchor="middle" font-size="12">${escapeXml(panel.xLabel)}</text>`,
    `<text x="${ox + 14}" y="${top + innerH / 2}" text-anchor="middle" font-size="12" ` +
      `transform="rotate(-90 ${ox + 14} ${top + innerH / 2})">${escapeXml(panel.yLabel)}</text>`
  );
  panel.series.forEach((s, i) => {
    const pts = s.x
      .map((vx, j) => `${(left + x(vx)).toFixed(2)},${(top + y(s.y[j] as number)).toFixed(2)}`)
      .join(" ");
    parts.push(
      `<polyline points="${pts}" fill="none" stroke="${seriesColor(s, i)}" stroke-width="1.5"/>`
    );
  });
  parts.push(`</g>`);
  return parts.join("\n");
}

function renderLegend(labels: Array<{ label: string; color: string }>, width: number): string {
  const itemW = Math.max(...labels.map((l) => l.label.length)) * 7 + 34;
  const totalW = itemW * labels.length;
  let lx = Math.max(8, (width - totalW) / 2);
  const parts = [`<g font-family="Helvetica, Arial, sans-serif" font-size="12">`];
  for (const { label, color } of labels) {
    parts.push(
      `<line x1="${lx}" y1="14" x2="${lx + 20}" y2="14" stroke="${color}" stroke-width="2"/>`,
      `<text x="${lx + 25}" y="18">${escapeXml(label)}</text>`
    );
    lx += itemW;
  }
  parts.push(`</g>`);
  return parts.join("\n");
}

/** Lay panels out on a grid and return the complete SVG document. */
export function renderFigure(spec: FigureSpec): string {
  if (spec.panels.length === 0) throw new Error("figure needs at least one panel");
  const cols = spec.columns ?? spec.panels.length;
  const rows = Math.ceil(spec.panels.length / cols);
  const pw = spec.panelWidth ?? 340;
  const ph = spec.panelHeight ?? 260;
  const width = cols * pw;

  const labels: Array<{ label: string; color: string }> = [];
  for (const panel of spec.panels) {
    panel.series.forEach((s, i) => {
      const color = seriesColor(s, i);
      if (!labels.some((l) => l.label === s.label)) labels.push({ label: s.label, color });
    });
  }
  const legendH = labels.length > 1 ? 26 : 0;
  const height = rows * ph + legendH;

  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}">`,
    `<rect width="${width}" height="${height}" fill="#fff"/>`,
  ];
  if (legendH > 0) parts.push(renderLegend(labels, width));
  spec.panels.forEach((panel, i) => {
    const ox = (i % cols) * pw;
    const oy = Math.floor(i / cols) * ph + legendH;
    parts.push(renderPanel(panel, ox, oy, pw, ph));
  });
  parts.push(`</svg>`);
  return parts.join("\n") + "\n";
}
