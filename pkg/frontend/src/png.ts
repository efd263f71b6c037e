import { Resvg } from "@resvg/resvg-js";

/** Rasterize an SVG document at 2x for a crisp companion PNG. */
export function svgToPng(svg: string): Buffer {
  const renderer = new Resvg(svg, {
    fitTo: { mode: "zoom", value: 2 },
    font: { loadSystemFonts: true },
  });
  return Buffer.from(renderer.render().asPng());
}
