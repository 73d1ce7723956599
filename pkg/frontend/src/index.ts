export { parseCsv, columnIndex, asRecords } from "./csv.js";
export { renderSelectionGrid, PANEL_H } from "./selectionGrid.js";
export { renderCoefBars } from "./coefBars.js";
export { renderDeltaBars } from "./deltaBars.js";
export { render, FIGURE_KINDS, type FigureKind } from "./render.js";
