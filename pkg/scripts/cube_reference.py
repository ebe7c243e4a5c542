"""Relative L2 differences to a fine-level reference on the 27-subcube surface network.

The default (levels 0-6 against level 7, 5.3M unknowns) needs about 3 GB of
memory and tens of minutes.
"""
import argparse
import logging

from netdg.study import StudySpec, reference_rows_to_csv, run_reference_compare


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=7, help="compared levels 0..levels-1")
    ap.add_argument("--reference-level", type=int, default=7)
    ap.add_argument("--out", default="results/cube_net_reference.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    spec = StudySpec(case="cube-net", levels=args.levels)
    rows, ok = run_reference_compare(spec, args.reference_level)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(reference_rows_to_csv(rows, dict(spec.meta(), reference_level=args.reference_level)))
    diffs = [r.rel_l2_diff for r in rows]
    for r in rows:
        print(f"level {r.level}: {r.dofs} dofs, rel diff {r.rel_l2_diff:.3e}")
    print(f"monotone: {all(b < a for a, b in zip(diffs, diffs[1:]))}, "
          f"final/coarsest: {diffs[-1] / diffs[0]:.2e}, "
          f"final/level-1: {diffs[-1] / diffs[1]:.2e}" + ("" if ok else ", solver failures"))


if __name__ == "__main__":
    main()
