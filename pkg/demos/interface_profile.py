"""
The diffuse interface profile
=============================

A step between two nearly pure phases relaxes towards the equilibrium
profile ``0.5 * (1 + tanh((x - x0) / (2 sqrt(2) eps)))``. This short run
shows the error shrinking; the acceptance suite runs it to convergence.
"""

import numpy as np

from chseg.chsolver import Solver, SolverConfig, equilibrium_profile

eps = 6.0
x = np.arange(128)
line = np.where(x < 64, 0.01, 0.99)
solver = Solver(np.broadcast_to(line[:, None, None], (128, 1, 1)), SolverConfig(epsilon=eps))


def deviation(p):
    i = int(np.nonzero((p[:-1] - 0.5) * (p[1:] - 0.5) <= 0)[0][0])
    x0 = i + (0.5 - p[i]) / (p[i + 1] - p[i])
    return x0, np.abs(p - equilibrium_profile(x, x0, eps)).max()


done = 0
for target in (1_000, 10_000, 100_000, 1_000_000):
    solver.advance(target - done)
    done = target
    x0, dev = deviation(solver.psi[:, 0, 0])
    print(f"{done:>9d} steps: x0 = {x0:.2f}, max deviation from tanh = {dev:.4f}, energy {solver.energy():.6f}")

# width check: the 10-90 % rise of the tanh profile spans about 2*sqrt(2)*eps*ln(9)
p = solver.psi[:, 0, 0]
rise = np.interp(0.9, p, x) - np.interp(0.1, p, x)
print(f"10-90% width {rise:.1f} voxels, theory {2 * np.sqrt(2) * eps * np.log(9):.1f}")
