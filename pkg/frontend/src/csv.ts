/** Study-table parsing for the solver's convergence CSV schema. */

export const HEADER =
  "domain,p,r,strategy,k,h,ndof,npoints,relL2,relH1,relH2,rateL2,rateH1,rateH2";

export interface StudyRow {
  domain: string;
  p: number;
  r: number;
  strategy: string;
  k: number;
  h: number;
  ndof: number;
  npoints: number;
  relL2: number;
  relH1: number;
  relH2: number;
  line: number; // 1-based line number in the source file
}

export class CsvError extends Error {
  constructor(message: string, public readonly line: number) {
    super(`line ${line}: ${message}`);
  }
}

const COLUMNS = HEADER.split(",");

function num(field: string, value: string, line: number): number {
  const v = Number(value);
  if (value.trim() === "" || !Number.isFinite(v)) {
    throw new CsvError(`field '${field}' is not a finite number: '${value}'`, line);
  }
  return v;
}

/** Parse the study CSV; the header must match the documented schema exactly. */
export function parseStudyCsv(text: string): StudyRow[] {
  const lines = text.split(/\r?\n/);
  if (lines.length === 0 || lines[0].trim() !== HEADER) {
    throw new CsvError(`header must be exactly '${HEADER}'`, 1);
  }
  const rows: StudyRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const raw = lines[i];
    if (raw.trim() === "") continue;
    const parts = raw.split(",");
    if (parts.length !== COLUMNS.length) {
      throw new CsvError(
        `expected ${COLUMNS.length} fields, found ${parts.length}`,
        i + 1
      );
    }
    const line = i + 1;
    rows.push({
      domain: parts[0],
      p: num("p", parts[1], line),
      r: num("r", parts[2], line),
      strategy: parts[3],
      k: num("k", parts[4], line),
      h: num("h", parts[5], line),
      ndof: num("ndof", parts[6], line),
      npoints: num("npoints", parts[7], line),
      relL2: num("relL2", parts[8], line),
      relH1: num("relH1", parts[9], line),
      relH2: num("relH2", parts[10], line),
      line,
    });
    const row = rows[rows.length - 1];
    if (row.h <= 0 || row.relL2 <= 0 || row.relH1 <= 0 || row.relH2 <= 0) {
      throw new CsvError("mesh size and errors must be positive", line);
    }
  }
  return rows;
}

export const GROUP_KEYS = ["domain", "p", "r", "strategy"] as const;
export type GroupKey = (typeof GROUP_KEYS)[number];

export function groupRows(
  rows: StudyRow[],
  keys: GroupKey[]
): Map<string, StudyRow[]> {
  const groups = new Map<string, StudyRow[]>();
  for (const row of rows) {
    const label = keys.map((k) => String(row[k])).join(",");
    const bucket = groups.get(label);
    if (bucket) bucket.push(row);
    else groups.set(label, [row]);
  }
  for (const bucket of groups.values()) {
    bucket.sort((a, b) => b.h - a.h); // coarse to fine
  }
  return new Map([...groups.entries()].sort((a, b) => (a[0] < b[0] ? -1 : 1)));
}
