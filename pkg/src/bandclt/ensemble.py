"""Real symmetric band random matrices ``M = W / sqrt(b)``.

Entries ``W_jk`` for ``(j, k)`` in the upper band are independent; the
off-diagonal law has variance ``sigma**2`` and the diagonal law ``2 sigma**2``.
Every entry is a deterministic function of ``(seed, replicate_index, j, k)``:
the replicate owns a Philox counter stream and entry ``(j, k)`` always reads
the same counter slot, so replicates can be produced in any order or process.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from .errors import InvalidSpecError

__all__ = [
    "Topology",
    "DistKind",
    "Cumulants",
    "EntryDistribution",
    "EnsembleSpec",
    "BandMatrix",
    "band_index_set",
    "band_mask",
    "upper_band_pairs",
    "cumulants",
    "replicate_uniforms",
    "sample",
]

_GAUSS_ABS5 = 8.0 * math.sqrt(2.0 / math.pi)  # E|Z|^5 for standard normal


class Topology(str, enum.Enum):
    PERIODIC = "periodic"
    SIMPLE = "simple"


class DistKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    RADEMACHER = "rademacher"
    SHIFTED_CUSTOM = "custom"


class Cumulants(NamedTuple):
    variance: float
    kappa3: float
    kappa4: float
    sigma5: float


@dataclass(frozen=True)
class EntryDistribution:
    """Centered entry law with standard deviation ``scale``.

    ``SHIFTED_CUSTOM`` is a finite discrete law given by ``atoms`` and
    ``probs``; it is shifted to mean zero and rescaled to ``scale``.  A custom
    law must also declare an upper bound ``sigma5`` on its fifth absolute
    moment.
    """

    kind: DistKind = DistKind.GAUSSIAN
    scale: float = 1.0
    atoms: tuple | None = None
    probs: tuple | None = None
    sigma5: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DistKind(self.kind))
        if not (self.scale >= 0.0 and math.isfinite(self.scale)):
            raise InvalidSpecError(f"scale must be finite and >= 0, got {self.scale}", field="scale")
        if self.kind is DistKind.SHIFTED_CUSTOM:
            self._check_custom()

    def _check_custom(self):
        if self.atoms is None or self.probs is None:
            raise InvalidSpecError("custom law needs atoms and probs", field="atoms")
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 1 or atoms.shape != probs.shape or atoms.size < 2:
            raise InvalidSpecError("atoms and probs must be 1-d of equal length >= 2", field="atoms")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise InvalidSpecError("probs must be nonnegative and sum to 1", field="probs")
        if np.any(np.diff(atoms) <= 0):
            raise InvalidSpecError("atoms must be strictly increasing", field="atoms")
        centered = atoms - probs @ atoms
        if probs @ centered**2 <= 0:
            raise InvalidSpecError("custom law is degenerate (zero variance)", field="atoms")
        object.__setattr__(self, "atoms", tuple(float(a) for a in atoms))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))
        if self.sigma5 is None:
            raise InvalidSpecError(
                "custom law requires a declared fifth absolute moment bound 'sigma5'", field="sigma5"
            )
        actual = self._custom_moments()[3]
        if self.sigma5 < actual * (1 - 1e-12):
            raise InvalidSpecError(
                f"declared sigma5={self.sigma5} is below the law's E|W|^5={actual}", field="sigma5"
            )

    # constructors -------------------------------------------------------
    @classmethod
    def gaussian(cls, scale=1.0):
        return cls(DistKind.GAUSSIAN, scale)

    @classmethod
    def uniform(cls, scale=1.0):
        """Uniform on ``[-sqrt(3) scale, sqrt(3) scale]``."""
        return cls(DistKind.UNIFORM, scale)

    @classmethod
    def rademacher(cls, scale=1.0):
        return cls(DistKind.RADEMACHER, scale)

    @classmethod
    def custom(cls, atoms, probs, scale=1.0, sigma5=None):
        return cls(DistKind.SHIFTED_CUSTOM, scale, tuple(atoms), tuple(probs), sigma5)

    def with_scale(self, scale):
        return replace(self, scale=float(scale))

    # law ---------------------------------------------------------------
    def _custom_support(self):
        atoms = np.asarray(self.atoms)
        probs = np.asarray(self.probs)
        centered = atoms - probs @ atoms
        sd = math.sqrt(probs @ centered**2)
        return centered * (self.scale / sd), probs

    def _custom_moments(self):
        x, p = self._custom_support()
        return p @ x**2, p @ x**3, p @ x**4, p @ np.abs(x) ** 5

    def quantile(self, u):
        """Map uniforms in (0, 1) to draws from this law (inverse CDF)."""
        u = np.asarray(u, dtype=float)
        s = self.scale
        if self.kind is DistKind.GAUSSIAN:
            return s * ndtri(u)
        if self.kind is DistKind.UNIFORM:
            return s * math.sqrt(3.0) * (2.0 * u - 1.0)
        if self.kind is DistKind.RADEMACHER:
            return np.where(u < 0.5, -s, s)
        x, p = self._custom_support()
        idx = np.searchsorted(np.cumsum(p)[:-1], u, side="right")
        return x[idx]

    def cumulants(self) -> Cumulants:
        s = self.scale
        if self.kind is DistKind.GAUSSIAN:
            return Cumulants(s**2, 0.0, 0.0, _GAUSS_ABS5 * s**5)
        if self.kind is DistKind.UNIFORM:
            return Cumulants(s**2, 0.0, -1.2 * s**4, (math.sqrt(3.0) * s) ** 5 / 6.0)
        if self.kind is DistKind.RADEMACHER:
            return Cumulants(s**2, 0.0, -2.0 * s**4, s**5)
        m2, m3, m4, _ = self._custom_moments()
        return Cumulants(float(m2), float(m3), float(m4 - 3.0 * m2**2), float(self.sigma5))

    def to_dict(self):
        out = {"kind": self.kind.value, "scale": self.scale}
        if self.kind is DistKind.SHIFTED_CUSTOM:
            out.update(atoms=list(self.atoms), probs=list(self.probs), sigma5=self.sigma5)
        return out

    @classmethod
    def from_dict(cls, data, scale=None):
        if isinstance(data, str):
            data = {"kind": data}
        data = dict(data)
        kind = data.pop("kind", "gaussian")
        try:
            kind = DistKind(kind)
        except ValueError:
            raise InvalidSpecError(f"unknown distribution kind {kind!r}", field="kind") from None
        if scale is not None:
            data["scale"] = scale
        return cls(kind, **data)


def cumulants(dist: EntryDistribution) -> Cumulants:
    """Declared ``(variance, kappa3, kappa4, sigma5)`` of an entry law."""
    return dist.cumulants()


@dataclass(frozen=True)
class EnsembleSpec:
    """Full description of a band random matrix law.

    ``offdiag_dist`` defaults to a Gaussian of standard deviation ``sigma``;
    ``diag_dist`` defaults to the off-diagonal family rescaled to variance
    ``2 sigma**2``.  ``sigma = 0`` is accepted as the degenerate zero ensemble.
    """

    n: int
    band_radius: int
    topology: Topology = Topology.PERIODIC
    sigma: float = 1.0
    offdiag_dist: EntryDistribution | None = None
    diag_dist: EntryDistribution | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        _check_band(self.n, self.band_radius)
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidSpecError(f"sigma must be finite and >= 0, got {self.sigma}", field="sigma")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpecError("seed must fit in an unsigned 64-bit integer", field="seed")
        off = self.offdiag_dist or EntryDistribution.gaussian(self.sigma)
        diag = self.diag_dist or off.with_scale(math.sqrt(2.0) * self.sigma)
        object.__setattr__(self, "offdiag_dist", off)
        object.__setattr__(self, "diag_dist", diag)
        if not math.isclose(off.cumulants().variance, self.sigma**2, rel_tol=1e-12, abs_tol=1e-300):
            raise InvalidSpecError("off-diagonal variance must equal sigma**2", field="offdiag_dist")
        if not math.isclose(diag.cumulants().variance, 2 * self.sigma**2, rel_tol=1e-12, abs_tol=1e-300):
            raise InvalidSpecError("diagonal variance must equal 2 sigma**2", field="diag_dist")

    @classmethod
    def build(cls, n, band_radius, sigma=1.0, dist="gaussian", diag_dist=None,
              topology=Topology.PERIODIC, seed=0):
        """Construct from distribution names or dicts, scaling them to ``sigma``."""
        off = EntryDistribution.from_dict(dist, scale=sigma)
        diag = None
        if diag_dist is not None:
            diag = EntryDistribution.from_dict(diag_dist, scale=math.sqrt(2.0) * sigma)
        return cls(int(n), int(band_radius), Topology(topology), float(sigma), off, diag, int(seed))

    @property
    def kappa4(self):
        return self.offdiag_dist.cumulants().kappa4

    @property
    def scaling(self):
        """Factor applied to ``W``; ``b = 0`` keeps the diagonal unscaled."""
        return 1.0 / math.sqrt(self.band_radius) if self.band_radius > 0 else 1.0

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_band(self, band_radius):
        return replace(self, band_radius=int(band_radius))

    def to_dict(self):
        return {
            "n": self.n,
            "band_radius": self.band_radius,
            "topology": self.topology.value,
            "sigma": self.sigma,
            "offdiag_dist": self.offdiag_dist.to_dict(),
            "diag_dist": self.diag_dist.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for key in ("offdiag_dist", "diag_dist"):
            if data.get(key) is not None:
                data[key] = EntryDistribution.from_dict(data[key])
        return cls(**data)


def _check_band(n, b):
    if int(n) != n or n < 1:
        raise InvalidSpecError(f"n must be a positive integer, got {n}", field="n")
    if int(b) != b or b < 0:
        raise InvalidSpecError(f"band_radius must be a nonnegative integer, got {b}", field="band_radius")
    if 2 * b > n:
        raise InvalidSpecError(f"band_radius exceeds n/2 (b={b}, n={n})", field="band_radius")


@lru_cache(maxsize=64)
def upper_band_pairs(n: int, b: int, topology: Topology = Topology.PERIODIC):
    """Off-diagonal pairs ``(j, k)``, ``j < k``, of the band in canonical order.

    Ordered by offset ``d = 1..b`` and then by ``j``; the position of a pair in
    this order is its counter slot in the replicate stream.
    """
    _check_band(n, b)
    topology = Topology(topology)
    rows, cols = [], []
    for d in range(1, b + 1):
        if topology is Topology.PERIODIC:
            count = n // 2 if 2 * d == n else n
            j = np.arange(count)
            k = (j + d) % n
        else:
            j = np.arange(n - d)
            k = j + d
        rows.append(np.minimum(j, k))
        cols.append(np.maximum(j, k))
    if not rows:
        empty = np.zeros(0, dtype=np.intp)
        return empty, empty
    r = np.concatenate(rows).astype(np.intp)
    c = np.concatenate(cols).astype(np.intp)
    r.flags.writeable = False
    c.flags.writeable = False
    return r, c


@lru_cache(maxsize=64)
def band_mask(n: int, b: int, topology: Topology = Topology.PERIODIC) -> np.ndarray:
    """Boolean ``n x n`` indicator of the band index set (read-only)."""
    _check_band(n, b)
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :])
    if Topology(topology) is Topology.PERIODIC:
        dist = np.minimum(dist, n - dist)
    mask = dist <= b
    mask.flags.writeable = False
    return mask


def band_index_set(n: int, b: int, topology: Topology = Topology.PERIODIC) -> frozenset:
    """All ordered index pairs ``(j, k)`` (0-based) inside the band."""
    j, k = np.nonzero(band_mask(n, b, topology))
    return frozenset(zip(j.tolist(), k.tolist()))


@dataclass
class BandMatrix:
    values: np.ndarray
    n: int
    band_radius: int
    topology: Topology = Topology.PERIODIC
    spec: EnsembleSpec | None = field(default=None, repr=False, compare=False)

    def is_symmetric(self):
        return bool(np.array_equal(self.values, self.values.T))

    def off_band_is_zero(self):
        outside = ~band_mask(self.n, self.band_radius, self.topology)
        return bool(np.all(self.values[outside] == 0.0))


def replicate_uniforms(seed: int, replicate_index: int, count: int) -> np.ndarray:
    """First ``count`` uniforms in (0, 1) of the counter stream of one replicate."""
    if replicate_index < 0:
        raise InvalidSpecError("replicate_index must be >= 0", field="replicate_index")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate_index),))
    raw = np.random.Philox(seq).random_raw(count)
    # 53 random bits, offset by half a unit so 0 and 1 never occur
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def sample(spec: EnsembleSpec, replicate_index: int) -> BandMatrix:
    """Draw replicate ``replicate_index`` of the ensemble as a dense matrix."""
    n = spec.n
    rows, cols = upper_band_pairs(n, spec.band_radius, spec.topology)
    u = replicate_uniforms(spec.seed, replicate_index, n + rows.size)
    scale = spec.scaling
    m = np.zeros((n, n))
    m[np.diag_indices(n)] = spec.diag_dist.quantile(u[:n]) * scale
    if rows.size:
        vals = spec.offdiag_dist.quantile(u[n:]) * scale
        m[rows, cols] = vals
        m[cols, rows] = vals
    return BandMatrix(m, n, spec.band_radius, spec.topology, spec)
