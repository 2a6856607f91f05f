"""
Energy decay during spinodal decomposition
==========================================

A random mixture relaxes under the Cahn-Hilliard flow. The free energy must
fall monotonically while the total amount of each phase stays fixed.
"""

import numpy as np

from chseg.chsolver import SolverConfig, evolve
from chseg.volume import ScalarVolume

rng = np.random.default_rng(0)
psi0 = ScalarVolume(rng.random((48, 48, 48)), domain="phase_field")

# default time step: 80 % of the explicit stability bound for eps = 6
cfg = SolverConfig(steps=3000, log_every=300)
psi, trace = evolve(psi0, cfg)

print(f"dt = {cfg.resolved_dt():.6g}, {trace.elapsed_s:.1f}s")
print(f"{'step':>6} {'energy':>14} {'mass drift':>12}")
for n, e, m in zip(trace.step_index, trace.energy, trace.mass):
    print(f"{n:6d} {e:14.6f} {(m - trace.mass[0]) / trace.mass[0]:12.2e}")

# Most of the drop comes from smoothing the voxel-scale noise. Growth of the
# separating long-wavelength modes is much slower at eps = 6, so visible
# phase separation needs far more steps than this demo runs.
print(f"field std {psi0.data.std():.3f} -> {psi.data.std():.3f}")
