"""Quantum steady state at one point of the bistable window.

Solves the optomechanical and Kerr master equations at z = 0.26 for the
parameters y = 1.5, chi = 0.08, w_m/kappa = 30, Q_m = 300, then compares the
photon statistics and prints a coarse Wigner map of the optical mode.  Each
optomechanical solve takes about a minute; pass smaller truncations on the
command line (e.g. ``python quantum_bistability.py 20 6``) for a quick look.
"""

import sys
import warnings

import numpy as np

from kerrmech import fock, observables
from kerrmech.semiclassical import PhysicalParams, Stability, mean_field_branches

n_a = int(sys.argv[1]) if len(sys.argv) > 1 else 30
n_b = int(sys.argv[2]) if len(sys.argv) > 2 else 10

p = PhysicalParams.from_dimensionless(y=1.5, z=0.26, chi=0.08, sideband=30, q_m=300)
rho = fock.steady_state(fock.liouvillian_om(p, fock.FockConfig(n_a, n_b)))
rho_k = fock.steady_state(fock.liouvillian_kerr(p, fock.FockConfig(n_a)))
opt = observables.partial_trace_optical(rho)

print(f"truncation n_a = {n_a}, n_b = {n_b}; residual {rho.info['residual']:.1e}")
print(f"<a+a>  optomechanical {observables.photon_number(opt):.4f}   Kerr {observables.photon_number(rho_k):.4f}")
print(f"g2(0)  optomechanical {observables.g2_zero(opt):.4f}   Kerr {observables.g2_zero(rho_k):.4f}")
print(f"<b+b>  {observables.phonon_number(rho):.4f}")
print(f"fidelity(optical, Kerr) = {observables.fidelity(opt, rho_k):.6f}")

stable = [b.a_bar for b in mean_field_branches(p) if b.stability is Stability.STABLE]
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    w = observables.wigner(opt, points=121)
print("stable mean-field amplitudes:", ", ".join(f"{a:.3f}" for a in stable))
print("Wigner maxima:", ", ".join(f"{a:.3f}" for a in observables.local_maxima(w)))
print("lobe weights:", observables.lobe_weights(w, tuple(stable)))

# coarse character map, rows from Im alpha = +max down to -max
shades = " .:-=+*#%@"
sub = w.values[::-6, ::3]
levels = np.clip((sub / w.values.max() * (len(shades) - 1)).round().astype(int), 0, len(shades) - 1)
for row in levels:
    print("".join(shades[k] for k in row))
