"""Low-regularity study with the flux-imbalance load weighted by 1/card (mean) or 1 (sum).

Only the mean weighting is consistent with the scheme; the sum variant shows
what happens when the interface source is over-counted.
"""
import argparse

from netdg.study import StudySpec, run_convergence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--levels", type=int, default=5)
    args = ap.parse_args()
    print("weight,level,dofs,dg_error,rate_dg")
    for weight in ("mean", "sum"):
        spec = StudySpec(case=f"low-reg:s={args.s}", levels=args.levels, g_gamma_weight=weight)
        reports, _ = run_convergence(spec)
        for r in reports:
            rate = "" if r.rate_dg is None else f"{r.rate_dg:.3f}"
            print(f"{weight},{r.level},{r.dofs},{r.dg_error:.4e},{rate}")


if __name__ == "__main__":
    main()
