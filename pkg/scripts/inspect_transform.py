#!/usr/bin/env python3
"""Print the polynomial coefficients and factorial-scaled spectrum of a signal.

Examples:
    python scripts/inspect_transform.py --function "np.sin(2*np.pi*t)" --n 64
    python scripts/inspect_transform.py --csv my_signal.csv --degree 12
"""
import argparse

import numpy as np

from sno.polycore import Grid, fit_operator, fit_poly, horner_eval, sumudu_forward


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--function", default="np.exp(t)",
                    help="expression in t, evaluated on [0, 1]")
    ap.add_argument("--csv", default=None, help="1-column CSV instead of --function")
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--degree", type=int, default=10)
    args = ap.parse_args()

    if args.csv:
        values = np.loadtxt(args.csv, delimiter=",")
        grid = Grid(np.linspace(0.0, 1.0, values.shape[0]))
    else:
        grid = Grid(np.linspace(0.0, 1.0, args.n))
        t = grid.points
        values = eval(args.function, {"np": np, "t": t})

    op = fit_operator(grid, args.degree)
    coeffs = fit_poly(values, op)
    spectrum = sumudu_forward(coeffs)
    recon = horner_eval(coeffs, grid)
    print(f"{'mode':>4} {'coefficient':>14} {'spectrum':>14}")
    for m in range(args.degree + 1):
        print(f"{m:>4} {coeffs.coeffs[m]:>14.6e} {spectrum.scaled_coeffs[m]:>14.6e}")
    resid = np.max(np.abs(recon.values - values))
    print(f"reconstruction max error on grid: {resid:.3e}")


if __name__ == "__main__":
    main()
