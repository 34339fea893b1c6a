"""Frequency shift of one self-coupled oscillator (nu=5, kappa=1) for n = 1, 10, 30.

Prints |rho - nu| from Euler and RK4 next to the value of the period
integral, which is the exact answer: rho = 2 pi / int dtheta / (nu - kappa S I_n).
"""
import math

from scipy import integrate

from winfree.cli import single_drift
from winfree.kernel import coupling_product, make_kernel

NU, KAPPA, T_END = 5.0, 1.0, 1000.0

for n in (1, 10, 30):
    k = make_kernel(n)
    period, _ = integrate.quad(lambda th: 1.0 / (NU + KAPPA * coupling_product(k, th)), -math.pi, math.pi,
                               epsabs=1e-13, epsrel=1e-12, limit=500)
    exact = abs(2 * math.pi / period - NU)
    e = abs(single_drift(NU, n, KAPPA, T_END, 1e-2, "euler") - NU)
    r = abs(single_drift(NU, n, KAPPA, T_END, 1e-2, "rk4") - NU)
    print(f"n={n:<3d} euler {e:.5f}   rk4 {r:.5f}   quadrature {exact:.5f}")
