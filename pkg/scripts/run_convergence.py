"""Convergence tables for the smooth and low-regularity studies, written to results/."""
import argparse
import logging
from pathlib import Path

from netdg.analysis import reports_to_csv
from netdg.study import StudySpec, run_convergence

STUDIES = {
    "edge": [dict(case="edge-mms", variant="sipg", p=p, levels=5) for p in (1, 2, 3)]
    + [dict(case="edge-mms", variant=v, p=p, levels=4, solver="direct")
       for v in ("iipg", "nipg") for p in (1, 2, 3)],
    "plane": [dict(case="plane-mms", variant="sipg", p=p, levels=4) for p in (1, 2)],
    "low-reg": [dict(case=f"low-reg:s={s}", variant="sipg", p=1, levels=6) for s in (0.25, 0.5, 0.75)],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("groups", nargs="*", default=list(STUDIES), choices=list(STUDIES))
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for group in args.groups:
        for kw in STUDIES[group]:
            spec = StudySpec(**kw)
            reports, ok = run_convergence(spec)
            name = f"{spec.case.replace(':', '_').replace('=', '')}_{spec.variant}_p{spec.p}.csv"
            (out / name).write_text(reports_to_csv(reports, spec.meta()))
            last = reports[-1]
            print(f"{name}: rate_dg {last.rate_dg:.3f} rate_l2 {last.rate_l2:.3f}"
                  + ("" if ok else "  (solver did not converge)"))


if __name__ == "__main__":
    main()
