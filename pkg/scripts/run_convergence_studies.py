#!/usr/bin/env python3
"""Reproduce the convergence studies and write one CSV per configuration.

Covers the one-patch studies for (p, r) in {(5,2), (6,2), (6,3)} with
Greville and clustered superconvergent points, the multi-patch fan domains
(three and five quads around an inner vertex), and the bicubic three-patch
spline geometry. Output lands in results/ (override with --out-dir); feed
the CSVs to the plotting frontend for log-log figures with fitted slopes.

Usage: python scripts/run_convergence_studies.py [--out-dir results] [--fast]
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from mpcolloc.analysis import catalog, convergence_study  # noqa: E402
from mpcolloc.collocation import CLUSTERED, GREVILLE  # noqa: E402
from mpcolloc.multipatch import appendix_three_patch, pinwheel, unit_square  # noqa: E402

STUDIES = [
    # (tag, domain factory, p, r, k-list, solution)
    ("onepatch-p5r2", unit_square, 5, 2, [4, 9, 19, 39], "onepatch"),
    ("onepatch-p6r2", unit_square, 6, 2, [3, 7, 15, 31], "onepatch"),
    ("onepatch-p6r3", unit_square, 6, 3, [3, 7, 15, 31], "onepatch"),
    ("pinwheel3-p5r2", lambda: pinwheel(3), 5, 2, [4, 9, 19], "ua"),
    ("pinwheel5-p5r2", lambda: pinwheel(5), 5, 2, [4, 9, 19], "ub"),
    ("appendix-p5r2", appendix_three_patch, 5, 2, [3, 7, 15], "ua"),
    ("appendix-p6r2", appendix_three_patch, 6, 2, [3, 7, 15], "ua"),
]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--fast", action="store_true", help="drop the finest level of each study")
    args = ap.parse_args(argv)
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tag, factory, p, r, ks, sol in STUDIES:
        dom = factory()
        exact = catalog(sol)
        if args.fast:
            ks = ks[:-1]
        for strategy in (GREVILLE, CLUSTERED):
            t0 = time.time()
            rep = convergence_study(dom, p, r, strategy, ks, exact)
            path = out / f"{tag}-{'greville' if strategy == GREVILLE else 'clustered'}.csv"
            path.write_text(rep.to_csv())
            last = rep.rows[-1]
            print(
                f"{path.name}: {time.time() - t0:6.1f}s  "
                f"final rates ({last.rate_l2:.2f}, {last.rate_h1:.2f}, {last.rate_h2:.2f})"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
