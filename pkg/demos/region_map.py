"""Stability regions of the (y, z) plane and the critical power z_c.

Region I: one stable solution.  II: bistable.  III: bistable with the upper
branch parametrically unstable.  IV: single, parametrically unstable.
"""

import numpy as np

from kerrmech.semiclassical import bistability_window, critical_occupation, critical_power, region_classify

sideband, q_m = 10.0, 1000.0
ys = np.linspace(0.0, 3.0, 13)
zs = np.linspace(0.02, 1.0, 50)

print(f"omega_m/kappa = {sideband}, Q_m = {q_m}")
digit = {"I": "1", "II": "2", "III": "3", "IV": "4"}
print("rows: y; columns: z from 0.02 to 1.0; digits are region numbers")
for y in ys:
    print(f"y = {y:4.2f}  " + "".join(digit[region_classify(y, z, sideband, q_m).value] for z in zs))

print()
for y in (1.0, 1.5, 2.0):
    window = bistability_window(y)
    lam_c = critical_occupation(y, sideband, q_m)
    print(
        f"y = {y}: z- = {window[0]:.4f}, z+ = {window[1]:.4f}, "
        f"chi*n_c = {lam_c:.4f}, z_c = {critical_power(y, sideband, q_m):.4f}"
    )
