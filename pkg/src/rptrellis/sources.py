"""IID test sources: seeded sampling, CDF and inverse CDF.

All randomness comes from a counter-based Philox generator so that a given
``(model, n, seed)`` triple yields the same samples on every platform.
Samples are produced by inversion: 53-bit uniforms on the open interval
(0, 1) are pushed through the family's inverse CDF.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "Family",
    "SourceModel",
    "make_rng",
    "open_uniforms",
    "sample",
    "cdf",
    "inverse_cdf",
]

_TWO_M53 = 2.0 ** -53


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM01 = "uniform01"
    LAPLACIAN = "laplacian"


@dataclass(frozen=True)
class SourceModel:
    """An IID source. ``mean``/``variance`` are ignored for ``UNIFORM01``."""

    family: Family = Family.GAUSSIAN
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.UNIFORM01:
            object.__setattr__(self, "mean", 0.5)
            object.__setattr__(self, "variance", 1.0 / 12.0)
        elif not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @classmethod
    def gaussian(cls, mean=0.0, variance=1.0):
        return cls(Family.GAUSSIAN, mean, variance)

    @classmethod
    def uniform01(cls):
        return cls(Family.UNIFORM01)

    @classmethod
    def laplacian(cls, mean=0.0, variance=1.0):
        return cls(Family.LAPLACIAN, mean, variance)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "mean": self.mean, "variance": self.variance}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceModel":
        return cls(Family(d["family"]), float(d.get("mean", 0.0)), float(d.get("variance", 1.0)))


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator; the only PRNG used across the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def open_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    """n uniforms on the grid (k + 1/2) 2^-53, so never exactly 0 or 1."""
    k = rng.integers(0, 1 << 53, size=n, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) * _TWO_M53


def sample(model: SourceModel, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    u = open_uniforms(make_rng(seed), n)
    return inverse_cdf(model, u)


def _laplace_scale(model: SourceModel) -> float:
    # unit variance: density exp(-sqrt(2)|x|)/sqrt(2), scale b = sigma/sqrt(2)
    return model.std / math.sqrt(2.0)


def cdf(model: SourceModel, x):
    x = np.asarray(x, dtype=np.float64)
    fam = model.family
    if fam is Family.UNIFORM01:
        out = np.clip(x, 0.0, 1.0)
    elif fam is Family.GAUSSIAN:
        out = special.ndtr((x - model.mean) / model.std)
    else:
        z = (x - model.mean) / _laplace_scale(model)
        out = np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
    return out[()] if out.ndim == 0 else out


def inverse_cdf(model: SourceModel, u):
    """Generalized inverse ``inf{r : F(r) >= u}`` for u in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise ValueError("inverse_cdf requires 0 < u < 1")
    fam = model.family
    if fam is Family.UNIFORM01:
        out = u.copy()
    elif fam is Family.GAUSSIAN:
        out = model.mean + model.std * special.ndtri(u)
    else:
        b = _laplace_scale(model)
        lo = u < 0.5
        out = np.empty_like(u)
        out[lo] = model.mean + b * np.log(2.0 * u[lo])
        out[~lo] = model.mean - b * np.log(2.0 * (1.0 - u[~lo]))
    return out[()] if out.ndim == 0 else out
