"""Polynomial structure of the first-layer weights during Phase 1.

With the interaction term dropped, ``u_i(a, t) = sum_l p_il (a t)^l`` where the
coefficients ``p_il`` depend only on the Fourier coefficients of ``h`` and the
Taylor coefficients ``m_r = sigma^(r)(0)``. The discrete stepper has an
analogous exact polynomial ``p_{k,i}(eta a, beta, m)``.

Multi-index sums over ``(i_1..i_r)`` are collapsed by dynamic programming over
the XOR of the chosen singletons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activation import Activation
from .dynamics import EffectiveEnsemble, dfpde_step_discrete, residual_coefficients
from .fourier import FourierFunction, SetStructure, is_msp
from .numerics import LegendreRule, UnsupportedSizeError
from .twophase import integrate_simplified

MAX_CONTINUOUS_L = 24
MAX_DISCRETE_STEPS = 8
MAX_DISCRETE_L = 16


@dataclass
class CoeffTable:
    """``p[i, l]`` for coordinates ``i = 1..P`` (row ``i-1``) and orders ``l = 1..L`` (column ``l``)."""

    P: int
    L: int
    p: np.ndarray
    discrete: np.ndarray | None = None

    def evaluate(self, a, t: float) -> np.ndarray:
        """``sum_{l<=L} p_il (a t)^l`` for each ``a``; shape ``(len(a), P)``."""
        x = np.atleast_1d(np.asarray(a, dtype=np.float64)) * t
        powers = x[:, None] ** np.arange(self.L + 1)[None, :]
        return powers @ self.p.T

    def rows(self):
        for i in range(self.P):
            for l in range(1, self.L + 1):
                yield i + 1, l, float(self.p[i, l])

    def csv_text(self) -> str:
        lines = ["i,l,value"] + [f"{i},{l},{v!r}" for i, l, v in self.rows()]
        return "\n".join(lines) + "\n"


def _xor_convolve(table: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``out[T] = sum_j weights[j] * table[T xor {j}]``."""
    out = np.zeros_like(table)
    idx = np.arange(table.size)
    for j, w in enumerate(weights):
        if w != 0.0:
            out += w * table[idx ^ (1 << j)]
    return out


def continuous_coeff_table(h: FourierFunction, m, L: int) -> CoeffTable:
    """Coefficients ``p_il`` of the simplified first-layer flow up to order ``L``.

    ``p_i1 = alpha_{i} m_1`` and for ``l >= 2``
    ``p_il = (1/l) sum_r (m_{r+1}/r!) sum_{i_1..i_r, l_1+..+l_r = l-1} alpha_{{i} xor {i_1} .. {i_r}} prod p_{i_r' l_r'}``.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    if L > MAX_CONTINUOUS_L:
        raise UnsupportedSizeError(f"L={L} exceeds {MAX_CONTINUOUS_L}")
    m = [float(x) for x in m] + [0.0] * max(0, L + 1 - len(m))
    P = h.P
    n = 1 << P
    alpha = h.dense()
    p = np.zeros((P, L + 1))
    for i in range(P):
        p[i, 1] = alpha[1 << i] * m[1]
    # A[r][lam][T]: sum over (i_1..i_r, l_1..l_r) with sum l = lam and xor = T of prod p
    A = {0: {0: np.eye(1, n, 0).ravel()}}
    idx = np.arange(n)
    for l in range(2, L + 1):
        lam = l - 1
        for r in range(1, min(lam, L - 1) + 1):
            acc = np.zeros(n)
            prev = A.get(r - 1, {})
            for lp in range(1, lam + 1):
                base = prev.get(lam - lp)
                if base is not None:
                    acc += _xor_convolve(base, p[:, lp])
            A.setdefault(r, {})[lam] = acc
        for i in range(P):
            total = 0.0
            for r in range(1, min(lam, L - 1) + 1):
                coef = m[r + 1] / math.factorial(r)
                if coef != 0.0:
                    total += coef * float(np.dot(A[r][lam], alpha[idx ^ (1 << i)]))
            p[i, l] = total / l
    return CoeffTable(P, L, p)


def discrete_coeff_eval(xi, rho, zeta, k1: int) -> np.ndarray:
    """Values ``p_{k,i}(zeta, xi, rho)`` for ``k = 0..k1``.

    ``xi`` has shape ``(k1, 2^P)`` (one row of set coefficients per step) or
    ``(2^P,)`` when constant in ``k``; ``rho = (rho_0..rho_L)``. ``zeta`` may be
    a scalar or an array; the result has shape ``(k1 + 1, *zeta.shape, P)``.
    """
    if k1 > MAX_DISCRETE_STEPS:
        raise UnsupportedSizeError(f"k1={k1} exceeds {MAX_DISCRETE_STEPS}")
    rho = [float(r) for r in rho]
    L = len(rho) - 1
    if L > MAX_DISCRETE_L:
        raise UnsupportedSizeError(f"L={L} exceeds {MAX_DISCRETE_L}")
    xi = np.asarray(xi, dtype=np.float64)
    n = xi.shape[-1]
    P = n.bit_length() - 1
    if n != 1 << P:
        raise ValueError("xi rows must have length 2^P")
    if xi.ndim == 1:
        xi = np.broadcast_to(xi, (k1, n))
    if xi.shape[0] < k1:
        raise ValueError("xi needs one row per step")
    zeta = np.asarray(zeta, dtype=np.float64)
    flat = zeta.reshape(-1)
    out = np.zeros((k1 + 1, flat.size, P))
    idx = np.arange(n)
    singles = [1 << i for i in range(P)]
    for k in range(k1):
        pk = out[k]
        new = pk.copy()
        new += (flat[:, None] * rho[1]) * xi[k, singles][None, :]
        # Q_r(T) per zeta: sum over sequences with xor T of prod p
        Q = np.zeros((flat.size, n))
        Q[:, 0] = 1.0
        for r in range(1, L):
            nxt = np.zeros_like(Q)
            for j in range(P):
                nxt += pk[:, j:j + 1] * Q[:, idx ^ (1 << j)]
            Q = nxt
            coef = rho[r + 1] / math.factorial(r)
            if coef == 0.0:
                continue
            for i in range(P):
                new[:, i] += flat * coef * (Q @ xi[k, idx ^ (1 << i)])
        out[k + 1] = new
    return out.reshape((k1 + 1, *zeta.shape, P))


def simplified_integrate(h: FourierFunction, act: Activation, a, T1: float, delta: float,
                         method: str = "euler") -> np.ndarray:
    """``u(a, T1)`` of ``du/dt = a E_z[h(z) sigma'(<u, z>) z]`` from ``u = 0``.

    Scalar ``a`` gives a vector of length ``P``; an array gives one row per value.
    """
    U = integrate_simplified(h, act, a, T1, delta, method)
    return U[0] if np.ndim(a) == 0 else U


def vanilla_leading_order(alpha, m, k: int, a: float, t: float) -> float:
    """Leading term of ``u_k`` for the vanilla staircase ``sum_i alpha_i z_1..z_i``.

    ``alpha[i-1]`` is the coefficient of ``z_1..z_i`` and ``m[r]`` is ``sigma^(r)(0)``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    e = 2 ** (k - 1)
    out = 2.0 ** (1 - e) * (a * t) ** e
    for i in range(1, k + 1):
        out *= (m[i] * alpha[i - 1]) ** (2 ** max(k - 1 - i, 0))
    return float(out)


@dataclass
class OrderExponents:
    """Leading ``t``-orders ``o_i`` and the coordinate introduction order."""

    o: tuple[float, ...]
    introduction: tuple[int, ...]

    def rank(self, i: int) -> int:
        """1-based position of coordinate ``i`` (1-based) in the introduction order."""
        return self.introduction.index(i) + 1

    @staticmethod
    def vanilla(P: int) -> tuple[int, ...]:
        return tuple(2 ** (k - 1) for k in range(1, P + 1))


def order_exponents(S: SetStructure, allow_blocked: bool = False) -> OrderExponents:
    """Smallest exponents with ``o_i = 1 + sum_{j in S_i \\ {i}} o_j`` over admissible ``S_i`` containing ``i``.

    Found by relaxation from infinity, which yields the minimum over all
    choices of ``S_i`` and therefore the true leading order. Coordinates that no
    staircase reaches keep ``o = inf``; they raise unless ``allow_blocked``.
    """
    res = is_msp(S)
    if not res.is_msp and not allow_blocked:
        raise ValueError("structure is not a merged staircase")
    P = S.P
    o = [math.inf] * P
    changed = True
    while changed:
        changed = False
        for s in S.sets:
            if s == 0:
                continue
            members = [b for b in range(P) if (s >> b) & 1]
            for i in members:
                cand = 1 + sum(o[j] for j in members if j != i)
                if cand < o[i]:
                    o[i] = cand
                    changed = True
    intro: list[int] = []
    union = 0
    for s in res.reachable:
        for b in range(P):
            if (s >> b) & 1 and not (union >> b) & 1:
                intro.append(b + 1)
        union |= s
    if not allow_blocked and any(math.isinf(o[b]) for b in range(P) if (S.union() >> b) & 1):
        raise ValueError("structure is not a merged staircase")
    return OrderExponents(tuple(o), tuple(intro))


def is_vanilla(h: FourierFunction) -> bool:
    """True when the support is exactly the prefixes ``{1}, {1,2}, .., [P]``."""
    return set(h.support) - {0} == {(1 << k) - 1 for k in range(1, h.P + 1)}


def blocked_coefficients(table: CoeffTable, o: OrderExponents) -> np.ndarray:
    """``|p_il|`` for every ``l < o_i``; these vanish identically."""
    vals = [abs(table.p[i, l]) for i in range(table.P) for l in range(1, table.L + 1) if l < o.o[i]]
    return np.asarray(vals)


def fit_order(ts, errs) -> float:
    """Least-squares slope of ``log err`` against ``log t``."""
    x, y = np.log(np.asarray(ts, float)), np.log(np.asarray(errs, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class OracleCheck:
    """Errors of a numeric integration against a series over a ``t`` ladder."""

    ts: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    required: float

    @property
    def passed(self) -> bool:
        return self.slope >= self.required

    def line(self) -> str:
        errs = ", ".join(f"{e:.3e}" for e in self.errors)
        return f"slope={self.slope:.3f} required>={self.required:.3f} errors=[{errs}]"


def continuous_oracle_check(h: FourierFunction, act: Activation, L: int, a=(-0.9, -0.4, 0.3, 0.8),
                            ts=(0.1, 0.05, 0.025), steps: int = 200) -> OracleCheck:
    """Truncated series ``sum_{l<=L} p_il (a t)^l`` against RK4 of the simplified flow.

    The truncation error is ``O(t^(L+1))``; the check requires a fitted slope of at least ``L - 0.5``.
    """
    table = continuous_coeff_table(h, act.taylor(L), L)
    a = np.asarray(a, dtype=np.float64)
    errs = []
    for t in ts:
        num = integrate_simplified(h, act, a, t, t / steps, "rk4")
        errs.append(float(np.max(np.abs(num - table.evaluate(a, t)))))
    return OracleCheck(tuple(ts), tuple(errs), fit_order(ts, errs), L - 0.5)


def vanilla_oracle_check(alpha, act: Activation, k: int, a: float = 1.0, ts=(0.1, 0.05, 0.025),
                         steps: int = 400) -> OracleCheck:
    """Closed-form leading term of ``u_k`` for a vanilla staircase against RK4.

    The gap is of higher order than ``t^(2^(k-1))``; the check requires a slope
    of at least ``2^(k-1) + 0.5``.
    """
    P = len(alpha)
    h = FourierFunction.from_sets(P, [(tuple(range(1, i + 1)), float(c)) for i, c in enumerate(alpha, 1)])
    m = act.taylor(P + 1)
    errs = []
    for t in ts:
        u = integrate_simplified(h, act, np.array([a]), t, t / steps, "rk4")[0, k - 1]
        errs.append(abs(u - vanilla_leading_order(alpha, m, k, a, t)))
    return OracleCheck(tuple(ts), tuple(errs), fit_order(ts, errs), 2 ** (k - 1) + 0.5)


def discrete_oracle_error(h: FourierFunction, act: Activation, eta: float, k1: int,
                          a_rule: LegendreRule | None = None) -> float:
    """Largest gap between the discrete first-layer stepper and ``p_{k,i}(eta a)`` over ``k <= k1``.

    The per-step set coefficients fed to the polynomial are the residual
    Fourier coefficients of the running state; ``act`` must be a polynomial.
    """
    rule = LegendreRule.gauss(16) if a_rule is None else a_rule
    ens = EffectiveEnsemble.from_rule(rule, h.P, 0.0)
    xis, Us = [], [ens.U.copy()]
    for _ in range(k1):
        xis.append(residual_coefficients(ens, h, act))
        ens = dfpde_step_discrete(ens, h, act, 0.0, eta)
        Us.append(ens.U.copy())
    rho = act.taylor(act.poly_degree())
    pk = discrete_coeff_eval(np.array(xis), rho, eta * rule.nodes, k1)
    return float(max(np.max(np.abs(pk[k] - Us[k])) for k in range(k1 + 1)))
