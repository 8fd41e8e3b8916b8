"""Three-site plaquette: why the spin background sets the sign of hole tunneling.

A hole moving around a triangle permutes the two spins it passes. For a
polarized or triplet pair this is harmless; for a singlet it flips the sign
of the effective hopping.
"""
from rydberg_tj.toymodel import effective_tunneling_sign, plaquette_spectrum

t = 1.0
for sector in ("polarized", "triplet", "singlet"):
    spec = plaquette_spectrum(t, sector)
    print(f"{sector:>9}: energies {spec.energies}")
for pair in ("triplet", "singlet"):
    print(f"effective hop through a {pair}: {effective_tunneling_sign(pair, t):+.3f} t")
