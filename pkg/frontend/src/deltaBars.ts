/**
 * Predicted-change bars: the numeric analogue of a predicted-impact map.
 * Input rows carry `label` (unit, region or model) and `delta`; bars are
 * drawn in input order, colored by sign.
 */

import { Table, asRecords, columnIndex } from "./csv.js";
import { FONT, escapeXml, px, svgDocument } from "./svg.js";

const BAR_H = 16;
const GAP = 6;
const MARGIN = { top: 28, right: 30, bottom: 20, left: 110 };
const PLOT_W = 360;

export function renderDeltaBars(table: Table): string {
  columnIndex(table, ["label", "delta"]);
  const records = asRecords(table);
  const deltas = records.map((r) => Number(r.delta));
  if (deltas.some((d) => !Number.isFinite(d))) {
    throw new Error("non-numeric delta value");
  }
  const hi = Math.max(0, ...deltas);
  const lo = Math.min(0, ...deltas);
  const span = hi - lo || 1;
  const toX = (v: number) => MARGIN.left + ((v - lo) / span) * PLOT_W;

  const height = MARGIN.top + records.length * (BAR_H + GAP) - GAP + MARGIN.bottom;
  const width = MARGIN.left + PLOT_W + MARGIN.right;
  const parts: string[] = [];
  parts.push(
    `<line x1="${px(toX(0))}" y1="${px(MARGIN.top - 6)}" x2="${px(toX(0))}" ` +
      `y2="${px(height - MARGIN.bottom + 6)}" stroke="#999999"/>`,
  );
  records.forEach((r, i) => {
    const d = deltas[i];
    const y = MARGIN.top + i * (BAR_H + GAP);
    const x = Math.min(toX(0), toX(d));
    const w = Math.abs(toX(d) - toX(0));
    const fill = d >= 0 ? "#d65f5f" : "#4878cf";
    parts.push(
      `<rect class="delta" data-label="${escapeXml(r.label)}" data-delta="${r.delta}" ` +
        `x="${px(x)}" y="${px(y)}" width="${px(w)}" height="${BAR_H}" fill="${fill}"/>`,
      `<text x="${px(MARGIN.left - 6)}" y="${px(y + BAR_H - 4)}" font-size="11" ` +
        `${FONT} text-anchor="end">${escapeXml(r.label)}</text>`,
    );
  });
  return svgDocument(width, height, parts.join("\n"));
}
