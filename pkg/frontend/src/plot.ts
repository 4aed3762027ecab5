/** Two-panel log-log convergence figure: error vs h and error vs NDOF. */

import { StudyRow } from "./csv.js";
import { fitSlope } from "./fit.js";
import { encodePng } from "./png.js";
import { BLACK, BLUE, Canvas, CHAR_W, GREY, RED } from "./raster.js";

export const NORMS = ["L2", "H1", "H2"] as const;
export type Norm = (typeof NORMS)[number];

const WIDTH = 920;
const HEIGHT = 400;
const PANEL_W = 400;
const PANEL_H = 300;
const MARGIN_L = 62;
const MARGIN_T = 50;
const GAP = 56;

interface Panel {
  x0: number;
  y0: number;
  logx: (v: number) => number;
  logy: (v: number) => number;
}

function decadeTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(lo); e <= Math.floor(hi) + 1e-12; e++) ticks.push(e);
  if (ticks.length < 2) ticks.push(Math.floor(lo), Math.ceil(hi));
  return ticks;
}

function makePanel(
  canvas: Canvas,
  originX: number,
  xs: number[],
  ys: number[],
  xlabel: string
): Panel {
  const lx = xs.map(Math.log10);
  const ly = ys.map(Math.log10);
  const padX = 0.25;
  const padY = 0.5;
  const xlo = Math.min(...lx) - padX;
  const xhi = Math.max(...lx) + padX;
  const ylo = Math.min(...ly) - padY;
  const yhi = Math.max(...ly) + padY;
  const x0 = originX;
  const y0 = MARGIN_T;
  const toX = (v: number) => x0 + ((v - xlo) / (xhi - xlo)) * PANEL_W;
  const toY = (v: number) => y0 + PANEL_H - ((v - ylo) / (yhi - ylo)) * PANEL_H;

  canvas.line(x0, y0, x0, y0 + PANEL_H, BLACK);
  canvas.line(x0, y0 + PANEL_H, x0 + PANEL_W, y0 + PANEL_H, BLACK);
  for (const e of decadeTicks(ylo, yhi)) {
    const py = toY(e);
    if (py < y0 - 1 || py > y0 + PANEL_H + 1) continue;
    canvas.line(x0, py, x0 + PANEL_W, py, GREY);
    canvas.line(x0 - 3, py, x0, py, BLACK);
    canvas.text(x0 - 6 - 5 * CHAR_W, py - 3, `1e${e >= 0 ? "+" : ""}${e}`, BLACK);
  }
  for (const e of decadeTicks(xlo, xhi)) {
    const px = toX(e);
    if (px < x0 - 1 || px > x0 + PANEL_W + 1) continue;
    canvas.line(px, y0, px, y0 + PANEL_H, GREY);
    canvas.line(px, y0 + PANEL_H, px, y0 + PANEL_H + 3, BLACK);
    const label = `1e${e >= 0 ? "+" : ""}${e}`;
    canvas.text(px - (label.length * CHAR_W) / 2, y0 + PANEL_H + 6, label, BLACK);
  }
  canvas.text(
    x0 + PANEL_W / 2 - (xlabel.length * CHAR_W) / 2,
    y0 + PANEL_H + 20,
    xlabel,
    BLACK
  );
  return { x0, y0, logx: (v) => toX(Math.log10(v)), logy: (v) => toY(Math.log10(v)) };
}

function drawSeries(canvas: Canvas, panel: Panel, xs: number[], ys: number[]): void {
  for (let i = 1; i < xs.length; i++) {
    canvas.line(
      panel.logx(xs[i - 1]),
      panel.logy(ys[i - 1]),
      panel.logx(xs[i]),
      panel.logy(ys[i]),
      BLUE
    );
  }
  for (let i = 0; i < xs.length; i++) {
    canvas.marker(panel.logx(xs[i]), panel.logy(ys[i]), BLUE);
  }
}

/** Right triangle showing the nearest integer reference order in h. */
function referenceTriangle(
  canvas: Canvas,
  panel: Panel,
  hs: number[],
  errs: number[],
  slope: number
): void {
  const order = Math.max(1, Math.round(slope));
  const n = hs.length;
  const h1 = hs[n - 2];
  const h2 = hs[n - 1]; // finer
  const base = errs[n - 2] * 0.25;
  const ax = panel.logx(h2);
  const bx = panel.logx(h1);
  const ay = panel.logy(base * Math.pow(h2 / h1, order));
  const by = panel.logy(base);
  canvas.line(ax, ay, bx, by, RED); // hypotenuse with the reference slope
  canvas.line(bx, by, bx, ay, RED);
  canvas.line(ax, ay, bx, ay, RED);
  canvas.text(bx + 4, (ay + by) / 2 - 3, String(order), RED);
}

export interface Figure {
  png: Buffer;
  slope: number;     // least-squares fit over the last three levels
  lastStep: number;  // observed order over the final refinement step
}

export function renderFigure(group: string, norm: Norm, rows: StudyRow[]): Figure {
  const hs = rows.map((r) => r.h);
  const ndof = rows.map((r) => r.ndof);
  const errKey = (norm === "L2" ? "relL2" : norm === "H1" ? "relH1" : "relH2") as
    | "relL2"
    | "relH1"
    | "relH2";
  const errs = rows.map((r) => r[errKey]);
  const slope = fitSlope(hs, errs);
  const lastStep = fitSlope(hs, errs, 2);

  const canvas = new Canvas(WIDTH, HEIGHT);
  canvas.text(8, 8, `${group}  rel ${norm} error`, BLACK);
  const legend = `slope = ${slope.toFixed(2)} (fit in h, last ${Math.min(3, hs.length)} levels)`;
  canvas.text(8, 22, legend, BLUE);

  const p1 = makePanel(canvas, MARGIN_L, hs, errs, "h");
  drawSeries(canvas, p1, hs, errs);
  referenceTriangle(canvas, p1, hs, errs, slope);

  const p2 = makePanel(canvas, MARGIN_L + PANEL_W + GAP, ndof, errs, "NDOF");
  drawSeries(canvas, p2, ndof, errs);
  canvas.text(
    MARGIN_L + PANEL_W + GAP + 8,
    MARGIN_T + 8,
    `h-slope ${slope.toFixed(2)} (NDOF = h^-2)`,
    BLUE
  );

  return { png: encodePng(WIDTH, HEIGHT, canvas.pixels), slope, lastStep };
}
