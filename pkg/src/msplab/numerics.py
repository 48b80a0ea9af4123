"""Quadrature, hypercube expectations and seeded randomness.

Every expectation used by the dynamics goes through this module: exact
averages over the hypercube ``{-1,+1}^P``, Gauss-Hermite rules for the
Gaussian smoothing variable and Gauss-Legendre rules for the uniform
second-layer initialization.

Index convention: row ``x`` of :func:`hypercube` has ``z_b = +1`` when bit
``b`` of ``x`` is set and ``-1`` otherwise.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_TABULATED_P = 16


class UnsupportedSizeError(ValueError):
    """Raised when an input exceeds a documented size cap."""


def _check_p(P: int, cap: int = MAX_TABULATED_P) -> None:
    if not isinstance(P, (int, np.integer)) or P < 0:
        raise ValueError(f"P must be a nonnegative integer, got {P!r}")
    if P > cap:
        raise UnsupportedSizeError(f"P={P} exceeds the cap of {cap}")


def hypercube(P: int) -> np.ndarray:
    """All ``2^P`` sign vectors as a float array of shape ``(2^P, P)``."""
    _check_p(P)
    x = np.arange(1 << P)[:, None]
    bits = (x >> np.arange(P)[None, :]) & 1
    return (2.0 * bits - 1.0).astype(np.float64)


def character_matrix(P: int) -> np.ndarray:
    """Matrix ``C[x, S] = chi_S(z_x)`` for all points and subset masks."""
    _check_p(P)
    n = 1 << P
    x = np.arange(n)[:, None]
    s = np.arange(n)[None, :]
    # chi_S(z_x) = (-1)^{|S \ x|}
    missing = s & ~x & (n - 1)
    parity = np.zeros_like(missing)
    for b in range(P):
        parity ^= (missing >> b) & 1
    return (1.0 - 2.0 * parity).astype(np.float64)


def expect_hypercube(f: Callable[[np.ndarray], np.ndarray], P: int) -> float:
    """Exact average of ``f`` over the uniform hypercube.

    ``f`` receives the full ``(2^P, P)`` matrix of points and must return one
    value per row.
    """
    Z = hypercube(P)
    vals = np.asarray(f(Z), dtype=np.float64)
    if vals.shape != (Z.shape[0],):
        raise ValueError(f"f must return shape {(Z.shape[0],)}, got {vals.shape}")
    return float(vals.mean())


@dataclass(frozen=True)
class HermiteRule:
    """Gauss-Hermite rule for ``G ~ N(0, 1)`` with weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, n: int = 21) -> "HermiteRule":
        if n < 1:
            raise ValueError("a Hermite rule needs at least one node")
        x, w = np.polynomial.hermite_e.hermegauss(n)
        return cls(nodes=x, weights=w / w.sum())

    @classmethod
    def degenerate(cls) -> "HermiteRule":
        """Single node at zero, used when the smoothing width vanishes."""
        return cls(nodes=np.zeros(1), weights=np.ones(1))

    @property
    def size(self) -> int:
        return int(self.nodes.size)


@dataclass(frozen=True)
class LegendreRule:
    """Gauss-Legendre rule for ``Unif[-1, 1]`` with weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, n: int = 64) -> "LegendreRule":
        if n < 1:
            raise ValueError("a Legendre rule needs at least one node")
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(nodes=x, weights=w / w.sum())

    @property
    def size(self) -> int:
        return int(self.nodes.size)


def expect_gaussian(f: Callable[[np.ndarray], np.ndarray], rule: HermiteRule) -> float:
    """``sum_i w_i f(node_i)`` for a vectorized ``f``."""
    if rule.size < 2:
        raise ValueError("expect_gaussian needs a rule with at least 2 nodes")
    vals = np.asarray(f(rule.nodes), dtype=np.float64)
    return float(np.dot(rule.weights, vals))


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream id; maps to a Philox counter-based generator."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, name: str) -> "RngSpec":
        """Named sub-stream, stable across runs and platforms."""
        sub = zlib.crc32(name.encode("utf-8"))
        return RngSpec(self.seed, (int(self.stream) << 32) ^ sub)


def sample_rademacher(d: int, count: int, rng: RngSpec | np.random.Generator) -> np.ndarray:
    """``count x d`` matrix of independent uniform signs."""
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    return (2.0 * gen.integers(0, 2, size=(count, d)) - 1.0).astype(np.float64)


def double_factorial_moment(k: int) -> float:
    """``E[G^k]`` for a standard normal ``G``."""
    if k % 2:
        return 0.0
    out = 1.0
    for j in range(k - 1, 0, -2):
        out *= j
    return out


def uniform_moment(k: int) -> float:
    """``E[a^k]`` for ``a ~ Unif[-1, 1]``."""
    return 0.0 if k % 2 else 1.0 / (k + 1)
