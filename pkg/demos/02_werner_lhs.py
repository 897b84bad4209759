"""
Local hidden-state models for the Werner state
==============================================

For ``q phi+ + (1 - q) I/4`` steering from Alice to Bob is impossible below
q = 1/2.  This script shows how far the finite-measurement construction
reaches, level by level, and brackets it with the separability and
steering bounds.
"""

from localmodels import bounds, lhs, measpoly as mp
from localmodels.qforms import HALF_IDENTITY, MAXIMALLY_MIXED, FamilyState, werner

target = FamilyState(werner(1.0), MAXIMALLY_MIXED, HALF_IDENTITY)

# three levels of the isotropic schedule: 6, 16 and 46 measurements
certs = lhs.run_hierarchy(target, lhs.schedule("isotropic-dual", 3), stop_when_certified=False)
for c in certs:
    print(f"level {c.level['level']}: m = {c.level['m']:3d}  eta = {c.level['eta']:.5f}  "
          f"strategies = {c.level['n_strategies']:5d}  q* = {c.q_star:.6f}  "
          f"validated = {c.validation['passed']}")

# every certified model is unsteerable for all projective measurements, so
# q* lies between the PPT line and any finite-measurement steering bound
print(f"\nseparable up to       q = {bounds.ppt_threshold(target):.6f}")
print(f"steerable (13 axes) above q = "
      f"{bounds.steering_upper_bound(target, bounds.default_upper_bound_set()):.6f}")

# the certificate can be read back and re-checked independently of the solver
cert = certs[0]
inst = lhs.LhsInstance.from_family(target, mp.icosahedron())
print("\nre-validated level 1:", lhs.validate(cert, inst)["passed"])
