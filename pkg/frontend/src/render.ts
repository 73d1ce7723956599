import { parseCsv } from "./csv.js";
import { renderCoefBars } from "./coefBars.js";
import { renderDeltaBars } from "./deltaBars.js";
import { renderSelectionGrid } from "./selectionGrid.js";

export const FIGURE_KINDS = ["selection_grid", "coef_hist", "delta_bar"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

/** Render CSV text to SVG text; a pure function of its inputs. */
export function render(csvText: string, kind: FigureKind): string {
  const table = parseCsv(csvText);
  switch (kind) {
    case "selection_grid":
      return renderSelectionGrid(table);
    case "coef_hist":
      return renderCoefBars(table);
    case "delta_bar":
      return renderDeltaBars(table);
    default:
      throw new Error(`unknown figure kind: ${kind as string}`);
  }
}
