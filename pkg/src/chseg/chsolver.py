"""Explicit finite-difference Cahn-Hilliard solver on a uniform voxel grid.

The field evolves as ``dpsi/dt = div(M(psi) grad mu)`` with
``mu = f'(psi) - eps**2 * lap(psi)``, double-well ``f = psi**2 (1-psi)**2 / 4``
and degenerate mobility ``M = |psi (1-psi)|``. Space is discretised in voxel
units (h = 1) with the 7-point Laplacian and a flux form divergence; the
boundary is no-flux, implemented by even reflection. Time stepping is forward
Euler.

``chemical_potential`` and ``step`` are straightforward numpy versions that
work on :class:`ScalarVolume`. ``evolve`` runs compiled kernels on a float64
state so that mass drift stays at round-off level over long runs.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InputError, NonFiniteStateError
from .volume import UNIT_RANGE, ScalarVolume

log = logging.getLogger(__name__)

# numba probes TBB first and warns when the installed one is too old; the
# fallback layers are fine
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)

MOBILITY_MAX = 0.25
STABILITY_SAFETY = 0.8


def default_dt(epsilon: float, ndim: int = 3) -> float:
    """Forward-Euler step from the linear stability bound of the biharmonic term.

    ``0.8 * 2 / (M_max * eps**2 * lam_max**2)`` with ``M_max = 1/4`` and
    ``lam_max = 4 * ndim``, the largest eigenvalue of the negative 7-point
    Laplacian at ``h = 1``.
    """
    lam_max = 4.0 * ndim
    return STABILITY_SAFETY * 2.0 / (MOBILITY_MAX * epsilon**2 * lam_max**2)


@dataclass
class SolverConfig:
    epsilon: float = 6.0
    dt: float | None = None  # None: default_dt(epsilon)
    steps: int = 700
    log_every: int = 10
    early_stop_tol: float | None = None
    early_stop_window: int = 100

    def resolved_dt(self) -> float:
        return default_dt(self.epsilon) if self.dt is None else float(self.dt)

    def validate(self) -> None:
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if not self.resolved_dt() > 0:
            raise InputError("dt must be positive")
        if self.steps < 0:
            raise InputError("steps must be non-negative")
        if self.log_every < 1 or self.early_stop_window < 1:
            raise InputError("log_every and early_stop_window must be >= 1")


@dataclass
class SolverTrace:
    step_index: list[int] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    stopped_early: bool = False
    elapsed_s: float = 0.0

    def record(self, step, energy, mass):
        self.step_index.append(int(step))
        self.energy.append(float(energy))
        self.mass.append(float(mass))

    def __len__(self):
        return len(self.step_index)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "energy", "mass"])
            for row in zip(self.step_index, self.energy, self.mass):
                w.writerow([row[0], repr(row[1]), repr(row[2])])

    @classmethod
    def read_csv(cls, path) -> "SolverTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.record(int(row["step"]), float(row["energy"]), float(row["mass"]))
        return trace


# --- pointwise terms ---------------------------------------------------------


def bulk_energy_density(psi):
    return 0.25 * psi**2 * (1.0 - psi) ** 2


def bulk_energy_derivative(psi):
    return 0.5 * psi * (1.0 - psi) * (1.0 - 2.0 * psi)


def mobility(psi):
    return np.abs(psi * (1.0 - psi))


# --- numpy reference operators ---------------------------------------------


def _laplacian(p: np.ndarray) -> np.ndarray:
    # sum of neighbour differences so that a constant field gives exactly 0
    q = np.pad(p, 1, mode="edge")
    c = q[1:-1, 1:-1, 1:-1]
    return (
        (q[2:, 1:-1, 1:-1] - c)
        + (q[:-2, 1:-1, 1:-1] - c)
        + (q[1:-1, 2:, 1:-1] - c)
        + (q[1:-1, :-2, 1:-1] - c)
        + (q[1:-1, 1:-1, 2:] - c)
        + (q[1:-1, 1:-1, :-2] - c)
    )


def _mu(p: np.ndarray, epsilon: float) -> np.ndarray:
    return bulk_energy_derivative(p) - epsilon**2 * _laplacian(p)


def _divergence_update(p: np.ndarray, mu: np.ndarray) -> np.ndarray:
    m = mobility(p)
    d = np.zeros_like(p)
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        flux = 0.5 * (m[lo] + m[hi]) * (mu[hi] - mu[lo])
        d[lo] += flux
        d[hi] -= flux
    return d


def _check_state(p: np.ndarray, step_index: int) -> None:
    if not np.all(np.isfinite(p)):
        raise NonFiniteStateError(step_index)
    lo, hi = UNIT_RANGE
    if p.min() < lo or p.max() > hi:
        raise NonFiniteStateError(
            step_index, f"solver state left [{lo}, {hi}] by step {step_index}; dt is likely too large"
        )


def _require_phase_field(psi: ScalarVolume) -> None:
    if psi.domain != "phase_field":
        raise InputError(f"solver needs a phase_field volume, got {psi.domain}")


def chemical_potential(psi: ScalarVolume, epsilon: float) -> np.ndarray:
    """``f'(psi) - eps**2 * lap(psi)`` as a float64 array.

    Returned as a bare array because chemical potential values are not
    confined to the unit range a phase-field volume must respect.
    """
    _require_phase_field(psi)
    return _mu(psi.data.astype(np.float64), epsilon)


def step(psi: ScalarVolume, cfg: SolverConfig | None = None, step_index: int = 1) -> ScalarVolume:
    """One forward-Euler update, face fluxes ``0.5 (M_p + M_q)(mu_q - mu_p)``."""
    cfg = cfg or SolverConfig()
    _require_phase_field(psi)
    p = psi.data.astype(np.float64)
    out = p + cfg.resolved_dt() * _divergence_update(p, _mu(p, cfg.epsilon))
    _check_state(out, step_index)
    return psi.with_data(out)


def total_energy(psi, epsilon: float) -> float:
    """Voxel sum of ``f(psi) + eps**2/2 |grad psi|**2``.

    Gradients use central differences in the interior and one-sided
    differences on the boundary; axes of length 1 contribute nothing.
    Accepts a :class:`ScalarVolume` or a bare array.
    """
    p = np.asarray(getattr(psi, "data", psi), dtype=np.float64)
    grad2 = np.zeros_like(p)
    for axis, n in enumerate(p.shape):
        if n > 1:
            grad2 += np.gradient(p, axis=axis) ** 2
    return float(np.sum(bulk_energy_density(p) + 0.5 * epsilon**2 * grad2))


# --- compiled kernels --------------------------------------------------------


@numba.njit(parallel=True, cache=True, fastmath=False)
def _mu_kernel(p, eps2, mu, m):
    nx, ny, nz = p.shape
    for i in numba.prange(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            for k in range(nz):
                km = k - 1 if k > 0 else 0
                kp = k + 1 if k < nz - 1 else nz - 1
                c = p[i, j, k]
                lap = (
                    (p[ip, j, k] - c)
                    + (p[im, j, k] - c)
                    + (p[i, jp, k] - c)
                    + (p[i, jm, k] - c)
                    + (p[i, j, kp] - c)
                    + (p[i, j, km] - c)
                )
                mu[i, j, k] = 0.5 * c * (1.0 - c) * (1.0 - 2.0 * c) - eps2 * lap
                m[i, j, k] = abs(c * (1.0 - c))


@numba.njit(parallel=True, cache=True, fastmath=False)
def _update_kernel(p, mu, m, dt, out):
    # Each voxel gathers its own six face fluxes; a face flux seen from the
    # other side is the exact negative, so writes are independent.
    nx, ny, nz = p.shape
    bad = 0
    for i in numba.prange(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            for k in range(nz):
                km = k - 1 if k > 0 else 0
                kp = k + 1 if k < nz - 1 else nz - 1
                mc = m[i, j, k]
                uc = mu[i, j, k]
                d = (
                    0.5 * (mc + m[ip, j, k]) * (mu[ip, j, k] - uc)
                    + 0.5 * (mc + m[im, j, k]) * (mu[im, j, k] - uc)
                    + 0.5 * (mc + m[i, jp, k]) * (mu[i, jp, k] - uc)
                    + 0.5 * (mc + m[i, jm, k]) * (mu[i, jm, k] - uc)
                    + 0.5 * (mc + m[i, j, kp]) * (mu[i, j, kp] - uc)
                    + 0.5 * (mc + m[i, j, km]) * (mu[i, j, km] - uc)
                )
                v = p[i, j, k] + dt * d
                out[i, j, k] = v
                if not np.isfinite(v):
                    bad += 1
    return bad


@numba.njit(parallel=True, cache=True)
def _energy_kernel(p, eps2):
    nx, ny, nz = p.shape
    total = 0.0
    for i in numba.prange(nx):
        row = 0.0
        for j in range(ny):
            for k in range(nz):
                c = p[i, j, k]
                g2 = 0.0
                if nx > 1:
                    if i == 0:
                        g = p[1, j, k] - c
                    elif i == nx - 1:
                        g = c - p[i - 1, j, k]
                    else:
                        g = 0.5 * (p[i + 1, j, k] - p[i - 1, j, k])
                    g2 += g * g
                if ny > 1:
                    if j == 0:
                        g = p[i, 1, k] - c
                    elif j == ny - 1:
                        g = c - p[i, j - 1, k]
                    else:
                        g = 0.5 * (p[i, j + 1, k] - p[i, j - 1, k])
                    g2 += g * g
                if nz > 1:
                    if k == 0:
                        g = p[i, j, 1] - c
                    elif k == nz - 1:
                        g = c - p[i, j, k - 1]
                    else:
                        g = 0.5 * (p[i, j, k + 1] - p[i, j, k - 1])
                    g2 += g * g
                row += 0.25 * c * c * (1.0 - c) * (1.0 - c) + 0.5 * eps2 * g2
        total += row
    return total


class Solver:
    """Owns the float64 state and scratch buffers of one run."""

    def __init__(self, psi0, cfg: SolverConfig | None = None):
        self.cfg = cfg or SolverConfig()
        self.cfg.validate()
        data = getattr(psi0, "data", psi0)
        self.psi = np.ascontiguousarray(data, dtype=np.float64).copy()
        if not np.all(np.isfinite(self.psi)):
            raise InputError("initial field contains NaN or infinite values")
        self._mu = np.empty_like(self.psi)
        self._m = np.empty_like(self.psi)
        self._next = np.empty_like(self.psi)
        self.dt = self.cfg.resolved_dt()
        self.eps2 = float(self.cfg.epsilon) ** 2
        self.steps_done = 0

    def energy(self) -> float:
        return float(_energy_kernel(self.psi, self.eps2))

    def mass(self) -> float:
        return float(self.psi.sum())

    def advance(self, n: int = 1) -> None:
        for _ in range(n):
            _mu_kernel(self.psi, self.eps2, self._mu, self._m)
            bad = _update_kernel(self.psi, self._mu, self._m, self.dt, self._next)
            self.psi, self._next = self._next, self.psi
            self.steps_done += 1
            if bad:
                raise NonFiniteStateError(self.steps_done)


def evolve(psi0: ScalarVolume, cfg: SolverConfig | None = None):
    """Apply ``cfg.steps`` solver steps and return ``(psi, trace)``.

    Energy and mass are sampled at step 0, every ``log_every`` steps and at
    the final step. When ``early_stop_tol`` is set, the run also ends once
    the relative energy change over ``early_stop_window`` steps drops below
    it.
    """
    cfg = cfg or SolverConfig()
    _require_phase_field(psi0)
    solver = Solver(psi0, cfg)
    trace = SolverTrace()
    t0 = time.perf_counter()
    trace.record(0, solver.energy(), solver.mass())

    check_every = cfg.early_stop_window if cfg.early_stop_tol is not None else None
    window_energy = trace.energy[0]
    n = 0
    while n < cfg.steps:
        stride = cfg.log_every - n % cfg.log_every
        if check_every is not None:
            stride = min(stride, check_every - n % check_every)
        stride = min(stride, cfg.steps - n)
        solver.advance(stride)
        n += stride

        energy = None
        if n % cfg.log_every == 0 or n == cfg.steps:
            energy = solver.energy()
            trace.record(n, energy, solver.mass())
        if check_every is not None and n % check_every == 0:
            energy = solver.energy() if energy is None else energy
            if abs(energy - window_energy) < cfg.early_stop_tol * abs(energy):
                if trace.step_index[-1] != n:
                    trace.record(n, energy, solver.mass())
                trace.stopped_early = True
                break
            window_energy = energy

    _check_state(solver.psi, n)
    trace.elapsed_s = time.perf_counter() - t0
    if n:
        rate = solver.psi.size * n / max(trace.elapsed_s, 1e-12)
        log.info("evolved %d steps on %s in %.2fs (%.3g voxel-updates/s)",
                 n, solver.psi.shape, trace.elapsed_s, rate)
    out = psi0.with_data(solver.psi, "phase_field")
    out.meta["solver_steps"] = n
    return out, trace


def equilibrium_profile(x, x0: float, epsilon: float):
    """Flat-interface equilibrium ``0.5 (1 + tanh((x - x0) / (2 sqrt(2) eps)))``."""
    return 0.5 * (1.0 + np.tanh((np.asarray(x, dtype=np.float64) - x0) / (2.0 * math.sqrt(2.0) * epsilon)))
