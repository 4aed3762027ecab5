#!/usr/bin/env node
/** CLI: render log-log convergence figures from a study CSV.
 *
 * Usage: mpcolloc-plots render --csv <path> --out <dir> [--group domain,p,r,strategy]
 * Outputs one PNG per norm per group plus slopes.txt. Groups with fewer than
 * two levels are skipped with a warning. Exit codes: 0 ok, 2 malformed
 * CSV/arguments (with the offending line), 3 I/O error.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { CsvError, GROUP_KEYS, GroupKey, groupRows, parseStudyCsv } from "./csv.js";
import { NORMS, renderFigure } from "./plot.js";

interface Args {
  csv: string;
  out: string;
  group: GroupKey[];
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== "render") {
    throw new UsageError("expected subcommand 'render'");
  }
  let csv: string | undefined;
  let out: string | undefined;
  let group: GroupKey[] = [...GROUP_KEYS];
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`missing value for ${flag}`);
    if (flag === "--csv") csv = value;
    else if (flag === "--out") out = value;
    else if (flag === "--group") {
      group = value.split(",").map((g) => {
        if (!(GROUP_KEYS as readonly string[]).includes(g)) {
          throw new UsageError(`unknown group key '${g}'; one of ${GROUP_KEYS.join(",")}`);
        }
        return g as GroupKey;
      });
    } else throw new UsageError(`unknown flag ${flag}`);
  }
  if (!csv || !out) throw new UsageError("both --csv and --out are required");
  return { csv, out, group };
}

class UsageError extends Error {}

export function run(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`argument error: ${(err as Error).message}`);
    return 2;
  }
  let text: string;
  try {
    text = readFileSync(args.csv, "utf8");
  } catch (err) {
    console.error(`io error: cannot read ${args.csv}: ${(err as Error).message}`);
    return 3;
  }
  let groups;
  try {
    groups = groupRows(parseStudyCsv(text), args.group);
  } catch (err) {
    if (err instanceof CsvError) {
      console.error(`malformed CSV: ${err.message}`);
      return 2;
    }
    throw err;
  }
  try {
    mkdirSync(args.out, { recursive: true });
  } catch (err) {
    console.error(`io error: cannot create ${args.out}: ${(err as Error).message}`);
    return 3;
  }
  const summary: string[] = [];
  for (const [label, rows] of groups) {
    if (rows.length < 2) {
      console.error(`warning: group '${label}' has ${rows.length} level(s); skipped`);
      continue;
    }
    const slug = label.replace(/[^A-Za-z0-9.-]+/g, "_");
    for (const norm of NORMS) {
      const fig = renderFigure(label, norm, rows);
      const file = `${slug}-${norm}.png`;
      writeFileSync(join(args.out, file), fig.png);
      summary.push(
        `${label} ${norm} slope=${fig.slope.toFixed(3)} last-step=${fig.lastStep.toFixed(3)}`
      );
      console.log(
        `${file}: ${norm} slope ${fig.slope.toFixed(3)} (last step ${fig.lastStep.toFixed(3)})`
      );
    }
  }
  writeFileSync(join(args.out, "slopes.txt"), summary.join("\n") + "\n");
  return 0;
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
