"""
Measurement polytopes and shrinking factors
===========================================

A finite set of qubit measurements can simulate every projective measurement
once those are mixed with enough noise.  How much noise is the shrinking
factor.  This script prints it for a few sets.
"""

import numpy as np

from localmodels import measpoly as mp
from localmodels.qforms import QubitOperator

# six axes of a regular icosahedron: the best six-measurement set for unbiased noise
ico = mp.icosahedron()
eta, facet = mp.shrinking_factor(ico)
print(f"icosahedron: m = {ico.m}, eta* = {eta:.10f}")
print(f"closed form  sqrt((5 + 2 sqrt 5) / 15) = {np.sqrt((5 + 2 * np.sqrt(5)) / 15):.10f}")

# adding the dual polyhedron repeatedly: 6 -> 16 -> 46 -> 136 measurements
cur = ico
for _ in range(3):
    cur = mp.dual_polyhedron(cur)
    print(f"  + dual: m = {cur.m:4d}, eta* = {mp.shrinking_factor(cur)[0]:.6f}")

# each augmentation round adds worst-facet directions until eta* strictly grows
cur = ico
for k in range(5):
    cur = mp.augment(cur)
    print(f"augment round {k + 1}: m = {cur.m}, eta* = {mp.shrinking_factor(cur)[0]:.6f}")

# with a biased noise state the orientation of the set starts to matter
xi = QubitOperator.density([0, 0, 0.6])
print(f"\nbiased map, unrotated icosahedron: eta* = {mp.shrinking_factor(ico, xi)[0]:.6f}")
rotated, eta_rot = mp.optimize_orientation(ico, xi)
print(f"after orientation search:          eta* = {eta_rot:.6f}")
