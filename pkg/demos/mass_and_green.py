"""Green's function of the flat half-ball, its constant term and the mass integral.

Run: python demos/mass_and_green.py
"""
import math

import numpy as np

from bdyamabe.greens import extract_expansion, solve_green_mixed
from bdyamabe.pohozaev import adm_mass, brendle_chen_I, green_model, log_ladder, pohozaev_P_prime, \
    schwarzschild_half_metric


def main():
    for delta in (1.0, 2.0):
        G = solve_green_mixed(None, delta, 0.01)
        e = extract_expansion(G)
        print(f"delta = {delta}: A = {e['A']:.6f} (closed form {-1 / delta:.6f})")
    zero = np.zeros((2, 2))
    A = -1.0
    print(f"mass of the half-Schwarzschild metric, A = 0.5: {adm_mass(schwarzschild_half_metric(0.5)).mass:.6f}"
          f" (16 pi A = {8 * math.pi:.6f})")
    rho, _ = log_ladder()
    for r in rho[::4]:
        print(f"rho = {r:.1e}: I = {brendle_chen_I(green_model(A), zero, r):+.6f}, "
              f"P' = {pohozaev_P_prime(green_model(A), r):+.6f}")


if __name__ == "__main__":
    main()
