/** Shared SVG helpers: deterministic output, no timestamps, no randomness. */

export const FONT = "font-family=\"Helvetica, Arial, sans-serif\"";

// Fixed palette; models are assigned colors by sorted name so the same
// model gets the same color in every panel and every rerun.
export const PALETTE = [
  "#4878cf",
  "#ee854a",
  "#6acc65",
  "#d65f5f",
  "#956cb4",
  "#8c613c",
  "#dc7ec0",
  "#797979",
];

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Two-decimal fixed formatting keeps coordinates byte-stable. */
export function px(v: number): string {
  return v.toFixed(2);
}

export function svgDocument(width: number, height: number, body: string): string {
  return (
    `<?xml version="1.0" encoding="UTF-8"?>\n` +
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">\n` +
    `<rect x="0" y="0" width="${width}" height="${height}" fill="#ffffff"/>\n` +
    body +
    `\n</svg>\n`
  );
}

export function colorFor(names: string[]): Map<string, string> {
  const sorted = [...new Set(names)].sort();
  const map = new Map<string, string>();
  sorted.forEach((name, i) => map.set(name, PALETTE[i % PALETTE.length]));
  return map;
}
