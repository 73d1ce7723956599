/** Minimal CSV reader for the tidy experiment files. */

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) throw new Error("empty CSV");
  const parsed = lines.map(parseLine);
  return { header: parsed[0], rows: parsed.slice(1) };
}

function parseLine(line: string): string[] {
  const out: string[] = [];
  let field = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      out.push(field);
      field = "";
    } else {
      field += ch;
    }
  }
  out.push(field);
  return out;
}

/** Index columns by name, throwing with the missing names spelled out. */
export function columnIndex(table: Table, required: string[]): Map<string, number> {
  const index = new Map<string, number>();
  table.header.forEach((name, i) => index.set(name, i));
  const missing = required.filter((name) => !index.has(name));
  if (missing.length > 0) {
    throw new Error(
      `CSV is missing required columns: ${missing.join(", ")} ` +
        `(found: ${table.header.join(", ")})`,
    );
  }
  return index;
}

export function asRecords(table: Table): Record<string, string>[] {
  return table.rows.map((row) => {
    const rec: Record<string, string> = {};
    table.header.forEach((name, i) => {
      rec[name] = row[i] ?? "";
    });
    return rec;
  });
}
