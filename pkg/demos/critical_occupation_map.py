"""Critical occupation chi*n_c as a function of sideband ratio and Q_m.

Compares the exact root of c2 with the closed-form approximations of the
damping regime each point belongs to.
"""

import warnings

import numpy as np

from kerrmech.semiclassical import NcRegime, ValidityWarning, critical_occupation, nc_asymptotic

y = 1.5
for q_m in (1e2, 1e4):
    print(f"Q_m = {q_m:g}")
    print(f"{'w_m/kappa':>10} {'exact':>12} {'asymptotic':>12}  regime")
    for s in np.logspace(-1.5, 2, 8):
        if s > 1:
            regime = NcRegime.IA if s / q_m > 1 else NcRegime.IB_IIA
        elif s * q_m > 1:
            regime = NcRegime.IIB
        else:
            regime = NcRegime.TINY_SIDEBAND
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ValidityWarning)
            approx = nc_asymptotic(y, s, q_m, regime)
        exact = critical_occupation(y, s, q_m)
        approx_txt = "none" if approx is None else f"{approx:12.5g}"
        print(f"{s:10.4g} {exact:12.5g} {approx_txt:>12}  {regime.value}")
