"""Empirical stability constants (enriching map, Poincare, projection) and SIPG coercivity probe."""
import argparse

from netdg.study import StudySpec, run_theory_check, theory_ok, theory_rows_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="edge-mms")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--eta-gamma", type=float)
    args = ap.parse_args()
    spec = StudySpec(case=args.case, levels=args.levels, eta_gamma=args.eta_gamma)
    rows = run_theory_check(spec, samples=args.samples)
    print(theory_rows_to_csv(rows, spec.meta()), end="")
    print(f"# coercive and finite: {theory_ok(rows)}")


if __name__ == "__main__":
    main()
