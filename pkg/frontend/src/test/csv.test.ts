import assert from "node:assert/strict";
import { test } from "node:test";

import { CsvError, groupRows, HEADER, parseStudyCsv } from "../csv.js";

const GOOD = `${HEADER}
unit-square,5,2,greville,4,0.2,324,324,1.577e-4,1.07e-4,1.175e-4,,,
unit-square,5,2,greville,9,0.1,1089,1089,1.003e-5,6.793e-6,7.458e-6,3.98,3.98,3.98
`;

test("parses the documented schema", () => {
  const rows = parseStudyCsv(GOOD);
  assert.equal(rows.length, 2);
  assert.equal(rows[0].domain, "unit-square");
  assert.equal(rows[1].k, 9);
  assert.ok(Math.abs(rows[1].relL2 - 1.003e-5) < 1e-20);
});

test("rejects a wrong header with line 1", () => {
  assert.throws(
    () => parseStudyCsv("domain,p,r\n"),
    (err: unknown) => err instanceof CsvError && err.line === 1
  );
});

test("rejects a short row with its line number", () => {
  const text = `${HEADER}\nunit-square,5,2,greville,4,0.2,324,324,1e-4,2e-4,3e-4,,,\nbad,row\n`;
  assert.throws(
    () => parseStudyCsv(text),
    (err: unknown) => err instanceof CsvError && err.line === 3
  );
});

test("rejects non-numeric error fields", () => {
  const text = `${HEADER}\nunit-square,5,2,greville,4,0.2,324,324,oops,2e-4,3e-4,,,\n`;
  assert.throws(
    () => parseStudyCsv(text),
    (err: unknown) =>
      err instanceof CsvError && err.line === 2 && /relL2/.test(err.message)
  );
});

test("groups by keys and sorts coarse to fine", () => {
  const text = `${HEADER}
a,5,2,greville,9,0.1,1,1,1e-5,1e-5,1e-5,,,
a,5,2,greville,4,0.2,1,1,1e-4,1e-4,1e-4,,,
b,5,2,greville,4,0.2,1,1,1e-4,1e-4,1e-4,,,
`;
  const groups = groupRows(parseStudyCsv(text), ["domain", "p", "r", "strategy"]);
  assert.deepEqual([...groups.keys()], ["a,5,2,greville", "b,5,2,greville"]);
  const a = groups.get("a,5,2,greville")!;
  assert.equal(a[0].h, 0.2);
  assert.equal(a[1].h, 0.1);
});
