"""
Partially entangled states with colored noise
=============================================

Mixing ``cos t |00> + sin t |11>`` with ``rho_A (x) I/2`` keeps Alice's
marginal fixed.  A closed-form sufficient condition for unsteerability is
known for this family.  With a noise map matched to ``rho_A`` two levels
already beat it at theta = pi/8, so the condition is not tight there; at the
other angles shown the closed form stays ahead at this depth.
"""

import numpy as np

from localmodels import bounds, lhs
from localmodels.qforms import FamilyPoint

for theta in (np.pi / 16, np.pi / 8, 3 * np.pi / 16):
    fp = FamilyPoint.colored_noise(1.0, theta)
    certs = lhs.run_hierarchy(fp, lhs.schedule("oriented-augment", 2))
    q = certs[-1].q_star
    cj = bounds.condj_threshold(theta)
    print(f"theta = {theta:.4f}: closed form alpha = {cj:.5f}, constructed alpha = {q:.5f} "
          f"(m = {certs[-1].level['m']}), PPT {bounds.ppt_threshold(fp):.5f}")
