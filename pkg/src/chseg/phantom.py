"""Deterministic two-phase liver phantoms with exact ground truth.

Noise comes from a fixed, platform independent stream so that phantom bytes
are reproducible everywhere:

* the 64-bit seed is scrambled once with splitmix64 (a zero state is
  replaced by the splitmix64 constant);
* the generator is xorshift64* (shifts 12, 25, 27; multiplier
  0x2545F4914F6CDD1D);
* a uniform double is ``(x >> 11) * 2**-53``;
* normals come in Box-Muller pairs from consecutive uniforms ``u1, u2``:
  ``r = sqrt(-2 ln(1 - u1))``, first ``r cos(2 pi u2)`` then
  ``r sin(2 pi u2)``;
* one normal is drawn per voxel in x-fastest order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import SpecInvalidError
from .volume import BinaryMask, ScalarVolume

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(seed: int) -> int:
    z = (seed + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@numba.njit(cache=True)
def _normals(state, n):
    out = np.empty(n, dtype=np.float64)
    x = np.uint64(state)
    mult = np.uint64(0x2545F4914F6CDD1D)
    two_pi = 2.0 * math.pi
    scale = 1.0 / 9007199254740992.0  # 2**-53
    i = 0
    while i < n:
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        u1 = float((x * mult) >> np.uint64(11)) * scale
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        u2 = float((x * mult) >> np.uint64(11)) * scale
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        out[i] = r * math.cos(two_pi * u2)
        if i + 1 < n:
            out[i + 1] = r * math.sin(two_pi * u2)
        i += 2
    return out


def gaussian_stream(seed: int, n: int) -> np.ndarray:
    """First ``n`` standard normals of the stream for ``seed``."""
    state = splitmix64(int(seed) & MASK64) or GOLDEN
    return _normals(np.uint64(state), int(n))


@dataclass
class Lesion:
    center: tuple[float, float, float]
    radius: float
    intensity: float | None = None  # None: PhantomSpec.lesion_intensity


@dataclass
class PhantomSpec:
    dims: tuple[int, int, int] = (96, 96, 96)
    liver_center: tuple[float, float, float] = (48.0, 48.0, 48.0)
    liver_semi_axes: tuple[float, float, float] = (40.0, 35.0, 30.0)
    lesions: list[Lesion] = field(default_factory=list)
    liver_intensity: float = 0.55
    lesion_intensity: float = 0.15
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "PhantomSpec":
        doc = dict(doc)
        try:
            doc["lesions"] = [Lesion(**les) for les in doc.get("lesions", [])]
            spec = cls(**doc)
        except TypeError as exc:
            raise SpecInvalidError(f"bad phantom spec: {exc}") from exc
        spec.dims = tuple(int(n) for n in spec.dims)
        spec.liver_center = tuple(float(v) for v in spec.liver_center)
        spec.liver_semi_axes = tuple(float(v) for v in spec.liver_semi_axes)
        for les in spec.lesions:
            les.center = tuple(float(v) for v in les.center)
        return spec

    @classmethod
    def load(cls, path) -> "PhantomSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def reference_spec(seed: int = 42) -> PhantomSpec:
    """96^3 ellipsoidal liver with three hypointense lesions of radius 5, 8 and 12."""
    return PhantomSpec(
        dims=(96, 96, 96),
        liver_center=(48.0, 48.0, 48.0),
        liver_semi_axes=(40.0, 35.0, 30.0),
        lesions=[
            Lesion((30.0, 48.0, 48.0), 12.0),
            Lesion((64.0, 38.0, 44.0), 8.0),
            Lesion((58.0, 64.0, 58.0), 5.0),
        ],
        liver_intensity=0.55,
        lesion_intensity=0.15,
        noise_sigma=0.08,
        rng_seed=seed,
    )


def _grid(dims):
    return np.indices(dims, dtype=np.float64)


def _ellipsoid(dims, center, semi_axes):
    g = _grid(dims)
    r = sum(((g[a] - center[a]) / semi_axes[a]) ** 2 for a in range(3))
    return r <= 1.0


def _ball(dims, center, radius):
    g = _grid(dims)
    return sum((g[a] - center[a]) ** 2 for a in range(3)) <= radius * radius


def validate(spec: PhantomSpec) -> None:
    if len(spec.dims) != 3 or min(spec.dims) < 1:
        raise SpecInvalidError(f"dims must be three positive ints, got {spec.dims}")
    if min(spec.liver_semi_axes) <= 0:
        raise SpecInvalidError("liver semi-axes must be positive")
    for name in ("liver_intensity", "lesion_intensity"):
        if not 0 <= getattr(spec, name) <= 1:
            raise SpecInvalidError(f"{name} must lie in [0, 1]")
    if spec.noise_sigma < 0:
        raise SpecInvalidError("noise_sigma must be non-negative")
    liver = _ellipsoid(spec.dims, spec.liver_center, spec.liver_semi_axes)
    if not liver.any():
        raise SpecInvalidError("liver ellipsoid contains no voxels")
    for n, les in enumerate(spec.lesions):
        if les.radius < 2:
            raise SpecInvalidError(f"lesion {n}: radius must be >= 2 voxels")
        if les.intensity is not None and not 0 <= les.intensity <= 1:
            raise SpecInvalidError(f"lesion {n}: intensity must lie in [0, 1]")
        ball = _ball(spec.dims, les.center, les.radius)
        if not ball.any() or np.any(ball & ~liver):
            raise SpecInvalidError(f"lesion {n} is not inside the liver ellipsoid")


def generate(spec: PhantomSpec):
    """Render the phantom.

    Returns:
        ``(volume, liver, lesions)``: noisy intensities clamped to [0, 1] as a
        ``normalized_unit`` volume, and the exact noise-free liver and lesion
        masks.
    """
    validate(spec)
    dims = spec.dims
    liver = _ellipsoid(dims, spec.liver_center, spec.liver_semi_axes)
    lesions = np.zeros(dims, dtype=bool)
    img = np.where(liver, spec.liver_intensity, 0.0)
    for les in spec.lesions:
        ball = _ball(dims, les.center, les.radius)
        lesions |= ball
        img[ball] = spec.lesion_intensity if les.intensity is None else les.intensity
    if spec.noise_sigma > 0:
        noise = gaussian_stream(spec.rng_seed, math.prod(dims)).reshape(dims, order="F")
        img = img + spec.noise_sigma * noise
    img = np.clip(img, 0.0, 1.0)
    meta = {"phantom": spec.to_json()}
    return ScalarVolume(img, (1.0, 1.0, 1.0), "normalized_unit", meta), BinaryMask(liver), BinaryMask(lesions)
