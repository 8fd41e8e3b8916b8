"""Adiabatically release a pinned hole and magnon and watch the bound state form.

The light shift pins both excitations at the start; as it ramps down the
state follows the lowest eigenstates of the ladder.
"""
from _common import shipped
from rydberg_tj.dynamics import RampedHamiltonian, evolve, overlap_trace, product_state
from rydberg_tj.hamiltonian import build_tJ
from rydberg_tj.spectra import lowest_eigenpairs

cfg = shipped("ladder19_ramp.json")
H0 = build_tJ(cfg.geometry, cfg.basis, cfg.couplings)
snaps = evolve(product_state(cfg.basis, cfg.initial_config), RampedHamiltonian(H0, cfg.program), cfg.schedule)
low = lowest_eigenpairs(H0, 10)
tr = overlap_trace(snaps, low.eigenstates, manifold=10)
print(" time   |<E0|psi>|^2   lowest-10 weight")
for k, (t, _) in enumerate(snaps):
    print(f"{t:5.2f}   {tr['overlaps'][k, 0]:.4f}        {tr['manifold'][k]:.4f}")
