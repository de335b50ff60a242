"""Wiener condition and the Hessian null space for two ion profiles.

The box profile satisfies the Jellium condition but its lattice-sum matrix
Sigma(theta) is singular on the planes where a quasimomentum component
vanishes.  Each singular direction adds a zero mode to the energy Hessian, so
the null space grows beyond the five symmetry directions (phase and
translations).  The sheared mixture keeps Sigma positive on the discrete zone
and shows the bare five.

Run:  python demos/wiener_and_hessian.py
"""
import numpy as np

from crystalstab.crystal_state import SolitaryPoint
from crystalstab.hessian_stability import assemble_hessian, constrained_spectrum, kernel_defect_dimension, null_space
from crystalstab.ion_models import box, sheared_mix, wiener_matrix
from crystalstab.spectral_core import TorusGrid

S = SolitaryPoint(0.8, (0.15, -0.3, 0.45))
grid = TorusGrid(2, 4)

print("Sigma_0 at theta = (0, pi, pi) and at a generic point")
for model in (box(), sheared_mix()):
    a = wiener_matrix(model, [0.0, np.pi, np.pi]).sigma0
    b = wiener_matrix(model, [1.0, 2.0, 2.5]).sigma0
    print(f"  {model.kind:12s} {a:10.3e} {b:10.3e}")

print("\nHessian null space at N = 2")
for model in (box(), sheared_mix()):
    H = assemble_hessian(S, grid, model)
    d = kernel_defect_dimension(model, grid.N)
    cs = constrained_spectrum(H)
    print(f"  {model.kind:12s} dim ker = {null_space(H).dimension:3d}   5 + d = {5 + d:3d}   "
          f"constrained min eig = {cs.min_eig:.3e}")
