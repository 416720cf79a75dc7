"""Mean-field S-curve: photon number against drive power at fixed detuning.

Prints the roots of the cubic along a power sweep, the stability of each
branch and the fold points where the middle branch appears and vanishes.
"""

import numpy as np

from kerrmech import harness
from kerrmech.semiclassical import PhysicalParams, bistability_window, mean_field_branches

y, chi, sideband, q_m = 1.5, 0.08, 30.0, 300.0

z_minus, z_plus, _, _ = bistability_window(y)
print(f"bistable window at y = {y}: z in ({z_minus:.6f}, {z_plus:.6f})")

zs = np.linspace(0.05, 0.5, 19)
print(f"{'z':>6}  {'n (photons) per branch, stability':<60}")
for z in zs:
    p = PhysicalParams.from_dimensionless(y=y, z=z, chi=chi, sideband=sideband, q_m=q_m)
    cells = [f"{b.nbar:8.3f} {b.branch_index.value:>6}/{b.stability.value}" for b in mean_field_branches(p)]
    print(f"{z:6.3f}  " + " | ".join(cells))

# folds located by bisection on the root count
print("folds:", [f"{f:.6f}" for f in harness.detect_folds(y, zs)])
