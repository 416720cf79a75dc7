"""Polaron equivalence and a truncation convergence study.

The polaron transform maps the optomechanical Hamiltonian onto a Kerr
Hamiltonian plus a free mechanical oscillator; the deviation inside a window
away from the truncation edge should sit at round-off.  The convergence study
grows the Fock truncation until the photon number settles.
"""

from kerrmech import fock
from kerrmech.semiclassical import PhysicalParams

p0 = PhysicalParams.from_dimensionless(y=1.5, z=0.0, chi=0.08, sideband=30, q_m=300)
for dims in (fock.FockConfig(6, 20), fock.FockConfig(6, 40)):
    dev = fock.polaron_check(p0, dims)
    print(f"polaron deviation at {dims.n_a}x{dims.n_b}: {dev:.2e} (omega_m = {p0.omega_m})")

p = PhysicalParams.from_dimensionless(y=1.5, z=0.10, chi=0.08, sideband=30, q_m=300)
res = fock.convergence_study(p, fock.FockConfig(8), "photon_number", system="kerr")
print("Kerr truncation ladder (n_a, <a+a>):")
for dims, value in res.ladder:
    print(f"  {dims.n_a:3d}  {value:.8f}")
print(f"converged at n_a = {res.dims.n_a}: <a+a> = {res.value:.8f}")
