/** Least-squares slope of log(error) against log(h) over the finest levels. */

export function fitSlope(hs: number[], errs: number[], levels = 3): number {
  const n = Math.min(levels, hs.length);
  const xs = hs.slice(-n).map(Math.log);
  const ys = errs.slice(-n).map(Math.log);
  const mx = xs.reduce((a, b) => a + b, 0) / n;
  const my = ys.reduce((a, b) => a + b, 0) / n;
  let sxy = 0;
  let sxx = 0;
  for (let i = 0; i < n; i++) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}
