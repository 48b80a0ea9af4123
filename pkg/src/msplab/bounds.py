"""Lower bounds for linear methods and two auxiliary probabilistic estimates.

* Gram-matrix dimension bounds ``r >= M (1 - eps) / |G|_op`` and the
  row-sum variant ``(slack - kappa) / max_i mean_j |G_ij|``.
* Closed-form sample bounds for degree-``k`` monomials and for staircases.
* Brute-force Gram matrices of permutation classes ``{h o tau}``.
* Empirical Wasserstein-1 distance of Rademacher sums to a Gaussian.
* Legendre expansions of multivariate polynomials on ``[-1, 1]^m``.

The risk slack of the dimension bound is called ``slack`` throughout, to keep
it apart from the learning rate ``eta`` used by the dynamics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtri

from .fourier import FourierFunction, apply_perm, popcount, set_label
from .numerics import LegendreRule, RngSpec, UnsupportedSizeError
from .twophase import jacobi_eigh

MAX_PERM_D = 7
MAX_LEGENDRE_D = 8
MAX_LEGENDRE_M = 4


@dataclass
class GramMatrix:
    """Symmetric matrix of inner products ``<f_i, P f_j>``."""

    G: np.ndarray
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.G = np.asarray(self.G, dtype=np.float64)
        n = self.G.shape[0]
        if self.G.shape != (n, n):
            raise ValueError("Gram matrix must be square")
        if np.max(np.abs(self.G - self.G.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(self.G), initial=0.0)):
            raise ValueError("Gram matrix must be symmetric")
        if np.any(np.diag(self.G) < -1e-12):
            raise ValueError("Gram diagonal must be nonnegative")
        if not self.labels:
            self.labels = [f"f{i + 1}" for i in range(n)]

    @property
    def M(self) -> int:
        return self.G.shape[0]

    def opnorm(self) -> float:
        w, _ = jacobi_eigh(self.G)
        return float(max(abs(w[0]), abs(w[-1])))

    def row_average(self) -> float:
        """``max_i (1/M) sum_j |G_ij|``."""
        return float(np.max(np.mean(np.abs(self.G), axis=1)))


@dataclass
class BoundReport:
    name: str
    value: float
    inputs: dict
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.value >= 0:
            raise ValueError("bounds are nonnegative")

    def line(self) -> str:
        parts = [f"bound={self.name}", f"value={self.value!r}"]
        parts += [f"{k}={v!r}" for k, v in self.inputs.items()]
        if self.flags:
            parts.append("flags=" + "|".join(self.flags))
        return " ".join(parts)

    def csv_header(self) -> str:
        return ",".join(["bound", "value", *self.inputs, "flags"])

    def csv_row(self) -> str:
        return ",".join([self.name, repr(self.value), *(repr(v) for v in self.inputs.values()), "|".join(self.flags)])


def dimension_lower_bound(G: GramMatrix, eps: float | None = None, slack: float | None = None, kappa: float = 0.0,
                          mode: str = "opnorm") -> BoundReport:
    """Lower bound on the dimension of any linear feature space fitting the class."""
    if mode == "opnorm":
        if eps is None:
            raise ValueError("opnorm mode needs eps")
        val = G.M * (1.0 - eps) / G.opnorm()
        return BoundReport("dimension-opnorm", max(val, 0.0), {"M": G.M, "eps": eps})
    if mode != "rowsum":
        raise ValueError("mode must be 'opnorm' or 'rowsum'")
    if slack is None:
        raise ValueError("rowsum mode needs slack")
    if not np.allclose(np.diag(G.G), 1.0 - kappa, atol=1e-9):
        raise ValueError("Gram diagonal must equal 1 - kappa")
    if slack <= kappa:
        return BoundReport("dimension-rowsum", 0.0, {"M": G.M, "slack": slack, "kappa": kappa}, ("degenerate-slack",))
    return BoundReport("dimension-rowsum", (slack - kappa) / G.row_average(), {"M": G.M, "slack": slack, "kappa": kappa})


def polyk_bound(d: int, k: int, m: int, slack: float) -> BoundReport:
    """``(slack / m) * C(d, k)`` for degree-``k`` targets built from ``m`` monomials."""
    if not 0 <= k <= d:
        raise ValueError("need 0 <= k <= d")
    if m < 1 or not 0 <= slack <= 1:
        raise ValueError("need m >= 1 and 0 <= slack <= 1")
    return BoundReport("polyk", float(Fraction(slack) / m * math.comb(d, k)), {"d": d, "k": k, "m": m, "slack": slack})


def staircase_bound(d: int, P: int, slack: float) -> BoundReport:
    """``(slack / 2) * C(d, floor(slack * P / 2))`` for staircases of length ``P <= d / 2``."""
    if P < 1 or 2 * P > d:
        raise ValueError("staircase bound needs 1 <= P <= d/2")
    if not 0 <= slack <= 1:
        raise ValueError("need 0 <= slack <= 1")
    k = math.floor(Fraction(slack) * P / 2)
    return BoundReport("staircase", float(Fraction(slack) / 2 * math.comb(d, k)), {"d": d, "P": P, "slack": slack})


def _project(coeffs: dict[int, float], degree: int | None, min_degree: int | None) -> dict[int, float]:
    if degree is not None:
        return {m: a for m, a in coeffs.items() if popcount(m) == degree}
    if min_degree is not None:
        return {m: a for m, a in coeffs.items() if popcount(m) >= min_degree}
    return dict(coeffs)


def gram_permuted_class(h: FourierFunction, d: int, degree: int | None = None,
                        min_degree: int | None = None) -> GramMatrix:
    """Gram matrix of the distinct functions ``h o tau``, ``tau in S_d``, after projection.

    Each distinct image is hit by the same number of permutations, so averages
    over the rows equal averages over uniformly random permutations.
    """
    if d > MAX_PERM_D:
        raise UnsupportedSizeError(f"d={d} exceeds {MAX_PERM_D}")
    if h.P > d:
        raise ValueError("h has more coordinates than d")
    if degree is not None and min_degree is not None:
        raise ValueError("give degree or min_degree, not both")
    base = h.embed(d).coeffs
    seen: dict[tuple, dict[int, float]] = {}
    for perm in itertools.permutations(range(d)):
        img = {apply_perm(m, perm): a for m, a in base.items()}
        key = tuple(sorted(img.items()))
        if key not in seen:
            seen[key] = _project(img, degree, min_degree)
    funcs = list(seen.values())
    labels = [" + ".join(f"{a:g}*{set_label(m)}" for m, a in sorted(f.items())) or "0" for f in funcs]
    M = len(funcs)
    G = np.zeros((M, M))
    for i in range(M):
        for j in range(i, M):
            fi, fj = funcs[i], funcs[j]
            G[i, j] = G[j, i] = sum(a * fj.get(m, 0.0) for m, a in fi.items())
    return GramMatrix(G, labels)


def polyk_row_average(d: int, k: int, m: int) -> float:
    """``(m/2) k! (d-k)! / d!`` for ``m`` degree-``k`` monomials with coefficients ``1/sqrt(2m)``."""
    return m / 2 * math.factorial(k) * math.factorial(d - k) / math.factorial(d)


def staircase_row_average(d: int, P: int, ell: int) -> float:
    """``(1/P) sum_{i >= ell} i! (d-i)! / d!`` for the staircase with coefficients ``1/sqrt(P)``."""
    return sum(math.factorial(i) * math.factorial(d - i) / math.factorial(d) for i in range(max(ell, 1), P + 1)) / P


def subspace_trial(F: np.ndarray, r: int, gen: np.random.Generator) -> tuple[float, float]:
    """Fit unit-norm rows of ``F`` with a random ``r``-dimensional subspace.

    Inner products are averages over coordinates (uniform measure). Returns the
    average squared residual ``eps`` and the bound ``M (1 - eps) / |G|_op``.
    """
    M, n = F.shape
    norms = np.sqrt(np.mean(F * F, axis=1))
    if not np.allclose(norms, 1.0, atol=1e-12):
        raise ValueError("rows of F must have unit norm")
    Q, _ = np.linalg.qr(gen.normal(size=(n, r)))
    resid = F - (F @ Q) @ Q.T
    eps = float(np.mean(np.mean(resid * resid, axis=1)))
    G = GramMatrix(F @ F.T / n)
    return eps, M * (1.0 - eps) / G.opnorm()


# Berry-Esseen


@dataclass
class BerryEsseenResult:
    w1: float
    bound: float
    w1_normalized: float
    samples: int

    @property
    def holds(self) -> bool:
        return self.w1 <= self.bound


def berry_esseen_w1(v: Sequence[float], samples: int = 100_000, rng: RngSpec | np.random.Generator | None = None,
                    chunk: int = 10_000) -> BerryEsseenResult:
    """Empirical ``W1(<v, r>, |v|_2 G)`` for Rademacher ``r`` against ``3 |v|_3^3 / |v|_2^2``.

    The empirical distance pairs sorted samples with normal quantiles at the
    midpoints ``(i - 1/2) / n``.
    """
    v = np.asarray(v, dtype=np.float64)
    n2 = float(np.sqrt(np.sum(v * v)))
    if n2 == 0.0:
        raise ValueError("v must be nonzero")
    gen = RngSpec(0).generator() if rng is None else (rng.generator() if isinstance(rng, RngSpec) else rng)
    out = np.empty(samples)
    for s in range(0, samples, chunk):
        e = min(samples, s + chunk)
        r = 2.0 * gen.integers(0, 2, size=(e - s, v.size)) - 1.0
        out[s:e] = r @ v
    out.sort()
    q = ndtri((np.arange(samples) + 0.5) / samples) * n2
    w1 = float(np.mean(np.abs(out - q)))
    bound = 3.0 * float(np.sum(np.abs(v) ** 3)) / n2 ** 2
    return BerryEsseenResult(w1, bound, w1 / n2, samples)


def rademacher_w1_exact() -> float:
    """``W1`` between a uniform sign and a standard normal."""
    phi = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    Phi1 = 0.5 * (1 + math.erf(1 / math.sqrt(2)))
    # 2 * int_1^inf (1 - Phi) + 2 * int_0^1 (Phi - 1/2)
    return 2 * (phi(1) - (1 - Phi1)) + 2 * (Phi1 + phi(1) - phi(0) - 0.5)


# Legendre anticoncentration


def legendre_matrix(D: int) -> np.ndarray:
    """Row ``l`` holds monomial coefficients of ``sqrt(2l+1) P_l``, orthonormal for ``Unif[-1, 1]``."""
    raw = np.zeros((D + 1, D + 1))
    raw[0, 0] = 1.0
    if D >= 1:
        raw[1, 1] = 1.0
    for l in range(1, D):
        # (l+1) P_{l+1} = (2l+1) x P_l - l P_{l-1}
        raw[l + 1, 1:] = (2 * l + 1) * raw[l, :-1]
        raw[l + 1] -= l * raw[l - 1]
        raw[l + 1] /= l + 1
    return raw * np.sqrt(2 * np.arange(D + 1) + 1)[:, None]


@dataclass
class AnticoncentrationResult:
    second_moment: float
    l1_mass: float
    g: np.ndarray
    constant: float
    quadrature_second_moment: float

    @property
    def holds(self) -> bool:
        return self.second_moment >= self.constant * self.l1_mass ** 2 * (1 - 1e-12)


def _shift(h: np.ndarray, w: np.ndarray, rho: float) -> np.ndarray:
    """Monomial coefficients of ``z -> h(w + rho z)``."""
    D = h.shape[0] - 1
    out = h
    for ax in range(h.ndim):
        # (w + rho z)^j = sum_i C(j, i) w^(j-i) rho^i z^i
        T = np.zeros((D + 1, D + 1))
        for j in range(D + 1):
            for i in range(j + 1):
                T[j, i] = math.comb(j, i) * w[ax] ** (j - i) * rho ** i
        out = np.moveaxis(np.tensordot(out, T, axes=([ax], [0])), -1, ax)
    return out


def legendre_anticoncentration(h, D: int | None = None, m: int | None = None, w=None,
                               rho: float | None = None) -> AnticoncentrationResult:
    """Legendre expansion, Parseval second moment and ``l1`` coefficient mass of a polynomial.

    ``h`` is an array of monomial coefficients with shape ``(D+1,)*m``.
    With ``w`` and ``rho`` the polynomial ``h(w + rho z)`` is analysed, and
    the mass is ``sum_alpha |h_alpha| rho^{|alpha|}``.
    """
    h = np.asarray(h, dtype=np.float64)
    m = h.ndim if m is None else m
    D = h.shape[0] - 1 if D is None else D
    if h.shape != (D + 1,) * m:
        raise ValueError("coefficient array must have shape (D+1,)*m")
    if D > MAX_LEGENDRE_D or m > MAX_LEGENDRE_M:
        raise UnsupportedSizeError("legendre analysis supports D <= 8 and m <= 4")
    if (w is None) != (rho is None):
        raise ValueError("give both w and rho or neither")
    mass_weights = np.ones_like(h)
    target = h
    if rho is not None:
        w = np.asarray(w, dtype=np.float64)
        target = _shift(h, w, float(rho))
        deg = sum(np.ix_(*[np.arange(D + 1)] * m))
        mass_weights = float(rho) ** deg
    B = legendre_matrix(D)
    # monomial x^j = sum_l Binv[j, l] Ptilde_l
    Binv = solve_triangular(B, np.eye(D + 1), lower=True)
    g = target
    for ax in range(m):
        g = np.moveaxis(np.tensordot(g, Binv, axes=([ax], [0])), -1, ax)
    second = float(np.sum(g * g))
    mass = float(np.sum(np.abs(h) * mass_weights))
    C = (D + 1) ** m * float(np.max(np.abs(B))) ** m
    const = 1.0 / ((D + 1) ** m * C * C)
    rule = LegendreRule.gauss(D + 1)
    vals = target
    for ax in range(m):
        V = rule.nodes[None, :] ** np.arange(D + 1)[:, None]
        vals = np.moveaxis(np.tensordot(vals, V, axes=([ax], [0])), -1, ax)
    W = rule.weights
    for _ in range(m - 1):
        W = np.multiply.outer(W, rule.weights)
    quad = float(np.sum(W * vals * vals))
    return AnticoncentrationResult(second, mass, g, const, quad)
