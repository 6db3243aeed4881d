"""Serializable, vectorized nonlinearities ``(x, y) -> R^d``.

Every term acts on arrays with arbitrary leading (batch/time) axes:
``x`` has shape ``(..., n)`` and ``y`` shape ``(..., m)``.  Each term reports
a Lipschitz constant with respect to ``|x - x'| + |y - y'|`` (Euclidean block
norms), which is the convention of the gap condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["Nonlinearity", "Zero", "AbsCoupling", "SinCoupling", "Linear", "Sum",
           "REGISTRY", "build_nonlinearity"]


class Nonlinearity:
    out_dim: int

    def __call__(self, x, y):
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _source(x, y, which):
    if which == "x":
        return x
    if which == "y":
        return y
    lead = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    return np.concatenate([np.broadcast_to(x, lead + x.shape[-1:]),
                           np.broadcast_to(y, lead + y.shape[-1:])], axis=-1)


def _tile_to(s, out_dim):
    d = s.shape[-1]
    if d == out_dim:
        return s
    idx = np.arange(out_dim) % d
    return s[..., idx]


def _tile_factor(d, out_dim):
    return math.sqrt(math.ceil(out_dim / d))


@dataclass(frozen=True)
class Zero(Nonlinearity):
    out_dim: int = 1

    def __call__(self, x, y):
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.zeros(lead + (self.out_dim,))

    @property
    def lipschitz(self):
        return 0.0

    def to_dict(self):
        return {"name": "zero"}


@dataclass(frozen=True)
class AbsCoupling(Nonlinearity):
    """``out[i] = epsilon * |x[i mod n]|``, the coupling of the ``example5`` preset."""

    epsilon: float = 1.0
    out_dim: int = 1
    in_dim: int = 1

    def __call__(self, x, y):
        return self.epsilon * np.abs(_tile_to(np.asarray(x), self.out_dim))

    @property
    def lipschitz(self):
        return abs(self.epsilon) * _tile_factor(self.in_dim, self.out_dim)

    def to_dict(self):
        return {"name": "abs_coupling", "epsilon": self.epsilon}


@dataclass(frozen=True)
class SinCoupling(Nonlinearity):
    """Saturating coupling ``out[i] = epsilon * sin(s[i mod d])``, ``s`` = x, y or (x, y)."""

    epsilon: float = 1.0
    source: str = "x"
    out_dim: int = 1
    in_dim: int = 1

    def __post_init__(self):
        if self.source not in ("x", "y", "xy"):
            raise ConfigError(f"sin_coupling source must be x, y or xy, got {self.source!r}")

    def __call__(self, x, y):
        s = _source(np.asarray(x), np.asarray(y), self.source)
        return self.epsilon * np.sin(_tile_to(s, self.out_dim))

    @property
    def lipschitz(self):
        return abs(self.epsilon) * _tile_factor(self.in_dim, self.out_dim)

    def to_dict(self):
        return {"name": "sin_coupling", "epsilon": self.epsilon, "source": self.source}


@dataclass(frozen=True)
class Linear(Nonlinearity):
    """``out = Mx @ x + My @ y`` (matrices stored as nested tuples)."""

    mx: tuple
    my: tuple

    @property
    def out_dim(self):
        return len(self.mx)

    def __call__(self, x, y):
        return np.asarray(x) @ np.asarray(self.mx).T + np.asarray(y) @ np.asarray(self.my).T

    @property
    def lipschitz(self):
        return max(np.linalg.norm(np.asarray(self.mx), 2), np.linalg.norm(np.asarray(self.my), 2))

    def to_dict(self):
        return {"name": "linear", "mx": [list(r) for r in self.mx],
                "my": [list(r) for r in self.my]}


@dataclass(frozen=True)
class Sum(Nonlinearity):
    terms: tuple

    @property
    def out_dim(self):
        return self.terms[0].out_dim

    def __call__(self, x, y):
        out = self.terms[0](x, y)
        for t in self.terms[1:]:
            out = out + t(x, y)
        return out

    @property
    def lipschitz(self):
        return sum(t.lipschitz for t in self.terms)

    def to_dict(self):
        return {"name": "sum", "terms": [t.to_dict() for t in self.terms]}


REGISTRY = ("zero", "abs_coupling", "sin_coupling", "linear", "sum")


def build_nonlinearity(doc, n: int, m: int, out_dim: int, path: str = "") -> Nonlinearity:
    """Instantiate a registry entry from a mapping like ``{"name": "abs_coupling"}``."""
    if isinstance(doc, str):
        doc = {"name": doc}
    if not isinstance(doc, dict) or "name" not in doc:
        raise ConfigError("nonlinearity must be a name or a mapping with 'name'", path)
    name = doc["name"]
    extra = {k: v for k, v in doc.items() if k != "name"}
    try:
        if name == "zero":
            return Zero(out_dim)
        if name == "abs_coupling":
            return AbsCoupling(float(extra.get("epsilon", 1.0)), out_dim, n)
        if name == "sin_coupling":
            source = extra.get("source", "x")
            in_dim = {"x": n, "y": m, "xy": n + m}.get(source, 1)
            return SinCoupling(float(extra.get("epsilon", 1.0)), source, out_dim, in_dim)
        if name == "linear":
            mx = np.asarray(extra.get("mx", np.zeros((out_dim, n))), dtype=float)
            my = np.asarray(extra.get("my", np.zeros((out_dim, m))), dtype=float)
            if mx.shape != (out_dim, n) or my.shape != (out_dim, m):
                raise ConfigError(
                    f"linear needs mx {out_dim}x{n} and my {out_dim}x{m}", path)
            return Linear(tuple(map(tuple, mx)), tuple(map(tuple, my)))
        if name == "sum":
            terms = extra.get("terms") or []
            if not terms:
                raise ConfigError("sum needs a non-empty 'terms' list", path)
            return Sum(tuple(build_nonlinearity(t, n, m, out_dim, f"{path}.terms[{i}]")
                             for i, t in enumerate(terms)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad parameters for {name!r}: {exc}", path) from exc
    raise ConfigError(f"unknown nonlinearity {name!r}; registry: {', '.join(REGISTRY)}", path)
