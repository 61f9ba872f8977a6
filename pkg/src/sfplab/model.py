"""Model parameters, weight laws, box geometry and the edge kernel."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import DomainError, PreconditionError, SpecError
from .rng import RngStream, StreamKind


class Norm(str, Enum):
    L1 = "L1"
    LINF = "Linf"


class Boundary(str, Enum):
    FREE = "free"
    TORUS = "torus"


@dataclass(frozen=True)
class ParetoC:
    """Exact Pareto tail ``P(W >= w) = c * w**-(tau-1)`` above ``c**(1/(tau-1))``."""

    c: float = 1.0
    kind = "pareto_c"

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"ParetoC needs c > 0, got {self.c}")

    def support_min(self, tau: float) -> float:
        return self.c ** (1.0 / (tau - 1.0))

    def quantile(self, u, tau: float):
        return (self.c / u) ** (1.0 / (tau - 1.0))

    def tail(self, w, tau: float):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.minimum(1.0, self.c * w ** -(tau - 1.0))
        return np.where(w <= self.support_min(tau), 1.0, t)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class StandardPareto(ParetoC):
    """``P(W >= w) = w**-(tau-1)`` for ``w >= 1``."""

    c: float = field(default=1.0, init=False)
    kind = "standard_pareto"

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Constant:
    w0: float = 1.0
    kind = "constant"

    def __post_init__(self):
        if not self.w0 > 0:
            raise DomainError(f"Constant law needs w0 > 0, got {self.w0}")

    def support_min(self, tau: float) -> float:
        return self.w0

    def quantile(self, u, tau: float):
        return np.full_like(np.asarray(u, dtype=float), self.w0)[()]

    def tail(self, w, tau: float):
        return np.where(np.asarray(w, dtype=float) <= self.w0, 1.0, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "w0": self.w0}


WeightLaw = Union[ParetoC, StandardPareto, Constant]


def law_from_dict(obj) -> WeightLaw:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SpecError(f"weight_law must be an object with a 'kind', got {obj!r}")
    kind = obj["kind"]
    allowed = {"pareto_c": {"kind", "c"}, "standard_pareto": {"kind"}, "constant": {"kind", "w0"}}
    if kind not in allowed:
        raise SpecError(f"unknown weight_law kind {kind!r}")
    extra = set(obj) - allowed[kind]
    if extra:
        raise SpecError(f"unknown keys in weight_law: {sorted(extra)}")
    if kind == "pareto_c":
        return ParetoC(float(obj["c"]))
    if kind == "standard_pareto":
        return StandardPareto()
    return Constant(float(obj["w0"]))


def law_dominated(lo: WeightLaw, hi: WeightLaw, tau: float) -> bool:
    """True when quantile coupling gives ``W_lo <= W_hi`` for every uniform.

    For the three supported laws this is the same as stochastic domination.
    """
    if isinstance(lo, Constant) and isinstance(hi, Constant):
        return lo.w0 <= hi.w0
    if isinstance(lo, Constant):
        return lo.w0 <= hi.support_min(tau)
    if isinstance(hi, Constant):
        return False
    return lo.c <= hi.c


_PARAM_KEYS = {"d", "alpha", "tau", "lambda", "weight_law", "mu", "norm"}


@dataclass(frozen=True)
class ModelParams:
    d: int
    alpha: float
    tau: float
    lam: float
    weight_law: WeightLaw = field(default_factory=StandardPareto)
    mu: float = 1.0
    norm: Norm = Norm.L1

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise DomainError(f"d must be a positive integer, got {self.d!r}")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.tau > 1:
            raise DomainError(f"tau must be > 1, got {self.tau}")
        if not self.lam >= 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if not 0 < self.mu <= 1:
            raise DomainError(f"mu must lie in (0, 1], got {self.mu}")
        object.__setattr__(self, "norm", Norm(self.norm))

    @property
    def gamma(self) -> float:
        return gamma(self)

    def replace(self, **changes) -> "ModelParams":
        kw = dict(d=self.d, alpha=self.alpha, tau=self.tau, lam=self.lam,
                  weight_law=self.weight_law, mu=self.mu, norm=self.norm)
        kw.update(changes)
        return ModelParams(**kw)

    def to_dict(self):
        return {
            "d": self.d,
            "alpha": self.alpha,
            "tau": self.tau,
            "lambda": self.lam,
            "weight_law": self.weight_law.to_dict(),
            "mu": self.mu,
            "norm": self.norm.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj) -> "ModelParams":
        if not isinstance(obj, dict):
            raise SpecError("params must be a JSON object")
        unknown = set(obj) - _PARAM_KEYS
        if unknown:
            raise SpecError(f"unknown keys in params: {sorted(unknown)}")
        missing = {"d", "alpha", "tau", "lambda"} - set(obj)
        if missing:
            raise SpecError(f"missing keys in params: {sorted(missing)}")
        if not isinstance(obj["d"], int) or isinstance(obj["d"], bool):
            raise SpecError(f"d must be an integer, got {obj['d']!r}")
        law = law_from_dict(obj.get("weight_law", {"kind": "standard_pareto"}))
        norm = obj.get("norm", "L1")
        if norm not in ("L1", "Linf"):
            raise SpecError(f"norm must be 'L1' or 'Linf', got {norm!r}")
        return cls(d=obj["d"], alpha=float(obj["alpha"]), tau=float(obj["tau"]),
                   lam=float(obj["lambda"]), weight_law=law,
                   mu=float(obj.get("mu", 1.0)), norm=Norm(norm))

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))


def gamma(params: ModelParams) -> float:
    return params.alpha * (params.tau - 1.0) / params.d


def weight_quantile(law: WeightLaw, u, tau: float):
    """Inverse tail of the weight law: the ``w`` with ``P(W >= w) = u``."""
    arr = np.asarray(u, dtype=float)
    if np.any(~((arr > 0) & (arr <= 1))):
        raise DomainError("weight_quantile needs u in (0, 1]")
    out = law.quantile(arr, tau)
    return float(out) if np.ndim(out) == 0 else out


def sample_weight(law: WeightLaw, stream: RngStream, tau: float) -> float:
    if stream.kind != StreamKind.WEIGHTS:
        raise DomainError(f"sample_weight needs a weights stream, got {stream.kind.name}")
    return weight_quantile(law, stream.uniform(), tau)


def edge_probability(wx, wy, dist, lam: float, alpha: float):
    """``1 - exp(-lam * wx * wy / dist**alpha)``; vectorises over array inputs."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise DomainError("edge_probability needs dist > 0 (no self-loops)")
    x = lam * np.asarray(wx, dtype=float) * np.asarray(wy, dtype=float) / dist**alpha
    p = -np.expm1(-x)
    return float(p) if np.ndim(p) == 0 else p


@dataclass(frozen=True)
class BoxGeometry:
    """The box ``origin + [0, side-1]^d`` with row-major vertex indexing."""

    origin: tuple
    side: int
    boundary: Boundary = Boundary.FREE

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(int(c) for c in self.origin))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if len(self.origin) < 1:
            raise DomainError("origin needs at least one coordinate")
        if not (isinstance(self.side, (int, np.integer)) and self.side >= 1):
            raise DomainError(f"side must be a positive integer, got {self.side!r}")
        object.__setattr__(self, "side", int(self.side))

    @classmethod
    def cube(cls, d: int, side: int, boundary=Boundary.FREE) -> "BoxGeometry":
        return cls((0,) * d, side, boundary)

    @property
    def d(self) -> int:
        return len(self.origin)

    @property
    def n_vertices(self) -> int:
        return self.side**self.d

    def coords(self) -> np.ndarray:
        """(n, d) int64 array of absolute coordinates in index order."""
        grids = np.indices((self.side,) * self.d).reshape(self.d, -1).T
        return grids.astype(np.int64) + np.asarray(self.origin, dtype=np.int64)

    def coord_of(self, index: int) -> tuple:
        if not 0 <= index < self.n_vertices:
            raise DomainError(f"vertex index {index} outside the box")
        return tuple(int(c) + o for c, o in zip(np.unravel_index(index, (self.side,) * self.d), self.origin))

    def index_of(self, coord) -> int:
        local = [int(c) - o for c, o in zip(coord, self.origin)]
        if len(local) != self.d or any(not 0 <= c < self.side for c in local):
            raise DomainError(f"coordinate {tuple(coord)} outside the box")
        return int(np.ravel_multi_index(local, (self.side,) * self.d))

    def contains(self, coord) -> bool:
        return len(coord) == self.d and all(o <= c < o + self.side for c, o in zip(coord, self.origin))

    def iter_coords(self):
        for local in itertools.product(range(self.side), repeat=self.d):
            yield tuple(c + o for c, o in zip(local, self.origin))

    def max_distance(self, norm=Norm.L1) -> int:
        reach = self.side // 2 if self.boundary == Boundary.TORUS else self.side - 1
        return reach * (self.d if Norm(norm) == Norm.L1 else 1)


def vertex_distance(x, y, geometry: BoxGeometry, norm=Norm.L1) -> int:
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if not (geometry.contains(tuple(x)) and geometry.contains(tuple(y))):
        raise DomainError("vertex_distance needs both vertices inside the box")
    delta = np.abs(x - y)
    if geometry.boundary == Boundary.TORUS:
        delta = np.minimum(delta, geometry.side - delta)
    return int(delta.sum() if Norm(norm) == Norm.L1 else delta.max())


def distance_arrays(a: np.ndarray, b: np.ndarray, norm=Norm.L1, torus_side: int = 0) -> np.ndarray:
    """Row-wise distances between coordinate arrays of equal shape."""
    delta = np.abs(np.asarray(a) - np.asarray(b))
    if torus_side:
        delta = np.minimum(delta, torus_side - delta)
    return delta.sum(axis=-1) if Norm(norm) == Norm.L1 else delta.max(axis=-1)


def check_positive_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and strictly positive")
    return w


def log_factorial(n: int) -> float:
    return math.lgamma(n + 1)
