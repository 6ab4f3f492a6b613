"""Sup-norm gap between the scaled one-step operator and the generator.

Prints one table per test function and the fitted log-log slope.

    python scripts/generator_convergence.py --model erlang
"""
import argparse

import numpy as np

from hawkes_dt import core, operators as op

MODELS = {
    "exp": core.fig4_params(),
    "erlang": core.erlang_params(2.0, 5.0, 3.0, 4.0, core.Constant(1.0)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", choices=sorted(MODELS), default="exp")
    ap.add_argument("--N", type=int, nargs="+", default=[100, 1000, 10_000])
    ap.add_argument("--T", type=float, default=1.0)
    args = ap.parse_args()
    params = MODELS[args.model]
    for f in op.test_family(params):
        rows = op.convergence_table(f, params, args.N, args.T)
        print(f.name)
        for r in rows:
            print(f"  N={r.N:>7d} h={r.h:.1e} sup|err|={r.sup_norm_error:.3e} at y={np.round(r.argmax_y, 4)}")
        if all(r.sup_norm_error > 0 for r in rows):
            print(f"  slope {op.loglog_slope(rows):.3f}")


if __name__ == "__main__":
    main()
