"""Half-space bubble, its Jacobi fields and the discrete near-null census.

Run: python demos/bubble_and_kernel.py [kappa]
"""
import sys

import numpy as np

from bdyamabe.linear import kernel_grid, kernel_spectrum
from bdyamabe.models import BubbleParams, jacobi_field, linearized_residual, residual_system


def main(kappa=0.5):
    rng = np.random.default_rng(0)
    y = rng.normal(size=(1000, 3)) * 2
    y[:, 2] = np.abs(y[:, 2])
    y[500:, 2] = 0.0
    p = BubbleParams(kappa, 1.0, (), 3)
    print(f"bubble residual (relative): {residual_system(p, y).max_rel:.2e}")
    for a in (1, 2, 3):
        print(f"J{a} linearized residual:       {linearized_residual(jacobi_field(a, p), p, y).max_rel:.2e}")
    for lev in (0, 1):
        s = kernel_spectrum(kappa, kernel_grid(kappa, 20.0, lev)).summary()
        print(f"level {lev}: {s['count']} near-null modes, gap {s['gap_ratio']:.1f}, "
              f"fit residual {s['max_fit_residual']:.2e}")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 0.5)
