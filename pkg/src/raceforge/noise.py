"""Discrete sampling of continuous white-noise processes.

A process with auto-correlation W·δ(t) is represented by its spectral density
matrix W and sampled once per integration step as N(0, W/Δt).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SYM_TOL = 1e-12
_EIG_TOL = -1e-12


@dataclass(frozen=True)
class NoiseSpec:
    """Spectral density of a 3-axis continuous white-noise process.

    `spectral_density` must be symmetric positive-semidefinite, units
    (unit)²·s. The matrix square root is cached for sampling.
    """

    spectral_density: np.ndarray
    _factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.spectral_density, dtype=float)
        if w.shape != (3, 3):
            raise ValueError("spectral density must be 3x3")
        if not np.allclose(w, w.T, atol=_SYM_TOL):
            raise ValueError("spectral density must be symmetric")
        eigval, eigvec = np.linalg.eigh(w)
        if eigval.min() < _EIG_TOL:
            raise ValueError("spectral density must be positive-semidefinite")
        factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
        object.__setattr__(self, "spectral_density", w)
        object.__setattr__(self, "_factor", factor)

    @classmethod
    def isotropic(cls, density: float) -> "NoiseSpec":
        return cls(np.eye(3) * float(density))

    @classmethod
    def diagonal(cls, densities) -> "NoiseSpec":
        return cls(np.diag(np.asarray(densities, dtype=float)))

    @property
    def is_zero(self) -> bool:
        return not self.spectral_density.any()


def sample_white_noise(spec: NoiseSpec, dt: float, rng: np.random.Generator, size=None):
    """Draw N(0, W/dt) samples; shape (3,) or (size, 3)."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    shape = (3,) if size is None else (int(size), 3)
    if spec.is_zero:
        return np.zeros(shape)
    z = rng.standard_normal(shape)
    return (z @ spec._factor.T) / np.sqrt(dt)


class BlockSampler:
    """Amortized per-step sampling of one white-noise stream.

    Prefetches standard normals in blocks; the resulting draw sequence is
    bit-identical to calling sample_white_noise once per step, because a
    block fill consumes the generator exactly like repeated 3-vector draws.
    """

    def __init__(self, spec: NoiseSpec, dt: float, rng: np.random.Generator, block: int = 4096):
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        self._zero = spec.is_zero
        self._zeros = np.zeros(3)
        if not self._zero:
            self._scaled = (spec._factor / np.sqrt(dt)).T
            self._rng = rng
            self._block = block
            self._buf = None
            self._next = 0

    def draw(self):
        if self._zero:
            return self._zeros
        if self._buf is None or self._next >= len(self._buf):
            self._buf = self._rng.standard_normal((self._block, 3)) @ self._scaled
            self._next = 0
        out = self._buf[self._next]
        self._next += 1
        return out
