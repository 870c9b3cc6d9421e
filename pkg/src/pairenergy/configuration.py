"""Particle configurations: N points in R^d with implicit equal masses 1/N.

Energies, per-particle potentials, forces and ball-mass counts are computed
by plain O(N^2) pairwise loops, chunked in a fixed row-block order so results
are bitwise reproducible for a given N (the chunking never depends on worker
counts or the environment).
"""

from __future__ import annotations

import csv
import json
import math
from typing import NamedTuple

import numpy as np

from .potentials import PotentialError, PotentialSpec

_CHUNK = 512


class ConfigurationError(ValueError):
    """Invalid configuration data."""


class Configuration:
    """Immutable ordered list of N points in R^d (N >= 1)."""

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ConfigurationError(f"points must be an (N, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("all coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __setattr__(self, *_):
        raise AttributeError("Configuration is immutable")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __repr__(self):
        return f"Configuration(N={self.n}, d={self.dim})"

    def translated(self, shift) -> "Configuration":
        return Configuration(self.points + np.asarray(shift, dtype=float))

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        return {"d": self.dim, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Configuration":
        if not isinstance(obj, dict) or set(obj) != {"d", "points"}:
            raise ConfigurationError('configuration JSON must be {"d": ..., "points": [...]}')
        pts = np.array(obj["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != obj["d"]:
            raise ConfigurationError("points do not match the declared dimension")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("NaN/Inf coordinates rejected")
        return cls(pts)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load_json(cls, path) -> "Configuration":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.points:
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def load_csv(cls, path) -> "Configuration":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                vals = [float(v) for v in row]
                if not all(math.isfinite(v) for v in vals):
                    raise ConfigurationError("NaN/Inf coordinates rejected")
                rows.append(vals)
        return cls(np.array(rows, dtype=float))


class BallMassQuery(NamedTuple):
    """Mass of the open r-ball around particle i, not counting particle i."""

    index: int
    radius: float
    mass: float


# --------------------------------------------------------------------------
# Pairwise kernels
# --------------------------------------------------------------------------

def _radial_with_origin(spec: PotentialSpec, r: np.ndarray) -> np.ndarray:
    """W on a matrix of distances where exact zeros mean coincident points."""
    vals = np.asarray(spec.radial(np.where(r == 0.0, 1.0, r)), dtype=float)
    if spec.singular_at_origin:
        return np.where(r == 0.0, np.inf, vals)
    w0 = float(spec.radial(0.0))
    return np.where(r == 0.0, w0, vals)


def _pair_rows(X: np.ndarray):
    """Yield (i0, r_block) with r_block the distances from rows i0:i0+c to all."""
    n = X.shape[0]
    for i0 in range(0, n, _CHUNK):
        block = X[i0:i0 + _CHUNK]
        diff = block[:, None, :] - X[None, :, :]
        yield i0, diff, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def per_particle_potentials(spec: PotentialSpec, X: Configuration) -> np.ndarray:
    """P_i = (1/N) sum_{j != i} W(x_i - x_j)."""
    n = X.n
    if n < 2:
        raise ConfigurationError("per-particle potentials need N >= 2")
    _check_dim(spec, X)
    out = np.empty(n)
    for i0, _, r in _pair_rows(X.points):
        vals = _radial_with_origin(spec, r)
        c = vals.shape[0]
        vals[np.arange(c), i0 + np.arange(c)] = 0.0  # exclude self
        out[i0:i0 + c] = vals.sum(axis=1)
    return out / n


def discrete_energy(spec: PotentialSpec, X: Configuration) -> float:
    """E_N = (1/(2 N^2)) sum_i sum_{j != i} W(x_i - x_j).

    +inf if a pair coincides and W is singular at the origin.
    """
    n = X.n
    if n < 2:
        raise ConfigurationError("discrete energy needs N >= 2")
    _check_dim(spec, X)
    total = 0.0
    for i0, _, r in _pair_rows(X.points):
        vals = _radial_with_origin(spec, r)
        c = vals.shape[0]
        vals[np.arange(c), i0 + np.arange(c)] = 0.0
        total += float(vals.sum())
    return total / (2.0 * n * n)


def per_particle_forces(spec: PotentialSpec, X: Configuration) -> np.ndarray:
    """F_i = (1/N) sum_{j != i} grad W(x_i - x_j) (the N-independent force scale).

    Errors on coincident pairs.
    """
    n = X.n
    if n < 2:
        raise ConfigurationError("forces need N >= 2")
    _check_dim(spec, X)
    out = np.empty_like(X.points)
    for i0, diff, r in _pair_rows(X.points):
        c = r.shape[0]
        rows, diag = np.arange(c), i0 + np.arange(c)
        r[rows, diag] = 1.0  # mask self-distance before the zero check
        if np.any(r == 0.0):
            raise ConfigurationError("coincident pair: gradient undefined")
        slope = np.asarray(spec.radial_derivative(r), dtype=float) / r
        slope[rows, diag] = 0.0
        out[i0:i0 + c] = np.einsum("ij,ijk->ik", slope, diff)
    return out / n


def energy_gradient(spec: PotentialSpec, X: Configuration) -> np.ndarray:
    """Gradient of E_N: component i is (1/N^2) sum_{j != i} grad W(x_i - x_j)."""
    return per_particle_forces(spec, X) / X.n


def diameter(X: Configuration) -> float:
    """Maximum pairwise Euclidean distance (0 for a single point)."""
    if X.n == 1:
        return 0.0
    best = 0.0
    for _, _, r in _pair_rows(X.points):
        best = max(best, float(r.max()))
    return best


def min_pair_distance(X: Configuration) -> float:
    """Smallest distance between two distinct particles (inf for N = 1)."""
    if X.n == 1:
        return math.inf
    best = math.inf
    for i0, _, r in _pair_rows(X.points):
        c = r.shape[0]
        r[np.arange(c), i0 + np.arange(c)] = np.inf
        best = min(best, float(r.min()))
    return best


def ball_mass(X: Configuration, i: int, r: float) -> float:
    """m_{i,r} = (1/N) #{j != i : |x_j - x_i| < r} (open ball)."""
    if not 0 <= i < X.n:
        raise ConfigurationError(f"index {i} out of range for N = {X.n}")
    if r <= 0:
        raise ConfigurationError("radius must be positive")
    d = np.linalg.norm(X.points - X.points[i], axis=1)
    count = int(np.count_nonzero(d < r)) - 1  # centre particle excluded
    return count / X.n


def ball_mass_query(X: Configuration, i: int, r: float) -> BallMassQuery:
    return BallMassQuery(index=i, radius=float(r), mass=ball_mass(X, i, r))


def _check_dim(spec: PotentialSpec, X: Configuration):
    if spec.dimension != X.dim:
        raise PotentialError(
            f"potential dimension {spec.dimension} != configuration dimension {X.dim}")
