"""Hole-magnon binding energy along the 19-site ladder as the rung height changes.

Negative E_b means the pair is bound. Binding is strongest near h/a = 0.5,
where each hole hop can be paired with a magnon hop around a triangle.
"""
import numpy as np

from _common import shipped
from rydberg_tj.spectra import binding_sweep

c = shipped("ladder19_binding.json").couplings
ratios = [0.0, 0.25, 0.5, np.sqrt(3) / 2]
for n_mag in (1, 2):
    rows = binding_sweep(ratios, 19, 14.7, c, n_magnons=n_mag)
    print(f"1H{n_mag}M")
    for r, eb in rows:
        print(f"  h/a = {r:.3f}   E_b/|t| = {eb:+.3f}")
