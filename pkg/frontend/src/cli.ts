#!/usr/bin/env node
/**
 * render_figs <csv> --kind selection_grid|coef_hist|delta_bar --out fig.svg
 *
 * Renders a tidy experiment CSV as a deterministic SVG.  Only SVG output
 * is supported (diffable in CI); pass --format svg or omit it.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { FIGURE_KINDS, FigureKind, render } from "./render.js";

interface Args {
  input: string;
  kind: FigureKind;
  out: string;
  format: string;
}

export function parseArgs(argv: string[]): Args {
  let input = "";
  let kind = "";
  let out = "";
  let format = "svg";
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--kind") kind = argv[++i] ?? "";
    else if (arg === "--out") out = argv[++i] ?? "";
    else if (arg === "--format") format = argv[++i] ?? "";
    else if (arg.startsWith("--")) throw new Error(`unknown flag ${arg}`);
    else if (!input) input = arg;
    else throw new Error(`unexpected argument ${arg}`);
  }
  if (!input) throw new Error("usage: render_figs <csv> --kind <kind> --out <fig.svg>");
  if (!(FIGURE_KINDS as readonly string[]).includes(kind)) {
    throw new Error(`--kind must be one of ${FIGURE_KINDS.join(", ")}, got '${kind}'`);
  }
  if (!out) throw new Error("--out is required");
  if (format !== "svg") {
    throw new Error(`only svg output is supported, got format '${format}'`);
  }
  return { input, kind: kind as FigureKind, out, format };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`render_figs: ${(err as Error).message}`);
    return 2;
  }
  try {
    const csvText = readFileSync(args.input, "utf-8");
    const svg = render(csvText, args.kind);
    writeFileSync(args.out, svg, "utf-8");
    return 0;
  } catch (err) {
    console.error(`render_figs: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && /cli\.(js|ts)$/.test(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
