"""Layer-wise training: first-layer flow, kernel matrix, eigenvalue certificate and linear second phase.

Phase 1 trains the first layer with the second layer frozen at its Legendre
nodes and ``s = 0``. Phase 2 freezes the first layer; the residual
``g = h - fhat`` then obeys the linear equation ``dg/dt = -E_z'[K(z, z') g(z')]``.
That operator is ``K / 2^P`` on point values and ``K_F = C^T K C / 4^P`` on
Fourier coefficients; both have the same spectrum, and ``risk = |g_hat|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activation import Activation
from .dynamics import (
    EffectiveEnsemble, HyperParams, Schedule, TrainingTrace, dfpde_integrate, dfpde_step_discrete, tracked_sets,
)
from .fourier import FourierFunction, set_label
from .numerics import HermiteRule, LegendreRule, character_matrix, hypercube, uniform_moment

CERTIFIED_THRESHOLD = 1e-10
MAX_EIG_SIZE = 256
T1_LADDER = (0.02, 0.05, 0.1)


class InvalidInputError(ValueError):
    pass


# phase 1


@dataclass
class FirstLayerMap:
    """``u^{T1}(a0)`` on the Legendre nodes."""

    nodes: np.ndarray
    weights: np.ndarray
    U: np.ndarray
    T1: float
    activation: str
    source: str

    def __post_init__(self) -> None:
        self.U = np.atleast_2d(np.asarray(self.U, dtype=np.float64))
        if self.U.shape[0] != self.nodes.size or not np.all(np.isfinite(self.U)):
            raise ValueError("first-layer map needs one finite row per node")
        if self.source not in ("continuous", "discrete", "simplified"):
            raise ValueError("source must be continuous, discrete or simplified")

    @property
    def P(self) -> int:
        return self.U.shape[1]


def simplified_rhs(a: np.ndarray, U: np.ndarray, h_table: np.ndarray, act: Activation, Z: np.ndarray) -> np.ndarray:
    """``a E_z[h(z) sigma'(<u, z>) z]`` for every particle (interaction term dropped)."""
    return a[:, None] * ((act.dsigma(U @ Z.T) * h_table) @ Z) / Z.shape[0]


def integrate_simplified(h: FourierFunction, act: Activation, a: np.ndarray, T1: float, delta: float,
                         method: str = "euler") -> np.ndarray:
    """Fixed-step integration of the simplified first-layer flow from ``u = 0``."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    Z = hypercube(h.P)
    H = h.table()
    U = np.zeros((a.size, h.P))
    n = int(round(T1 / delta))
    if n == 0:
        return U
    dt = T1 / n
    f = lambda V: simplified_rhs(a, V, H, act, Z)
    for _ in range(n):
        if method == "euler":
            U = U + dt * f(U)
        elif method == "rk4":
            k1 = f(U)
            k2 = f(U + dt / 2 * k1)
            k3 = f(U + dt / 2 * k2)
            k4 = f(U + dt * k3)
            U = U + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            raise ValueError("method must be 'euler' or 'rk4'")
    return U


def phase1(h: FourierFunction, act: Activation, T1: float, a_rule: LegendreRule | None = None,
           delta: float = 0.01, variant: str = "full", *, method: str = "euler",
           eta: float | None = None) -> FirstLayerMap:
    """Train the first layer for time ``T1`` with ``a`` frozen and ``s = 0``.

    ``full`` keeps the predictor interaction, ``simplified`` drops it and
    ``discrete`` takes ``round(T1 / eta)`` full-gradient steps of size ``eta``.
    """
    if T1 < 0:
        raise ValueError("T1 must be nonnegative")
    a_rule = LegendreRule.gauss() if a_rule is None else a_rule
    nodes, weights = a_rule.nodes.copy(), a_rule.weights.copy()
    if variant == "simplified":
        U = integrate_simplified(h, act, nodes, T1, delta, method)
        return FirstLayerMap(nodes, weights, U, T1, act.ident(), "simplified")
    ens = EffectiveEnsemble.from_rule(a_rule, h.P, 0.0)
    if variant == "discrete":
        eta = delta if eta is None else eta
        for _ in range(int(round(T1 / eta))):
            ens = dfpde_step_discrete(ens, h, act, 0.0, eta)
        return FirstLayerMap(nodes, weights, ens.U, T1, act.ident(), "discrete")
    if variant != "full":
        raise ValueError("variant must be full, simplified or discrete")
    if T1 == 0:
        return FirstLayerMap(nodes, weights, np.zeros((nodes.size, h.P)), 0.0, act.ident(), "continuous")
    n = max(1, int(round(T1 / delta)))
    hp = HyperParams(xi_a=Schedule.constant(0.0), xi_w=Schedule.constant(1.0), horizon=T1, record_interval=T1)
    _, final = dfpde_integrate(h, hp, act, s0=0.0, hermite=HermiteRule.degenerate(), delta=T1 / n,
                               method=method, ensemble=ens)
    return FirstLayerMap(nodes, weights, final.U, T1, act.ident(), "continuous")


# kernel


@dataclass
class KernelMatrix:
    """``K(z, z') = E_a[sigma(<u(a), z>) sigma(<u(a), z'>)]`` on hypercube points."""

    K: np.ndarray

    def __post_init__(self) -> None:
        self.K = np.asarray(self.K, dtype=np.float64)
        n = self.K.shape[0]
        if self.K.shape != (n, n) or n & (n - 1):
            raise ValueError("kernel must be a square matrix of size 2^P")
        if not _is_symmetric(self.K):
            raise InvalidInputError("kernel matrix is not symmetric")

    @property
    def P(self) -> int:
        return self.K.shape[0].bit_length() - 1

    def operator(self) -> np.ndarray:
        """``K / 2^P``: the Phase-2 generator on point values."""
        return self.K / self.K.shape[0]

    def fourier(self) -> np.ndarray:
        """``C^T K C / 4^P``: the Phase-2 generator on Fourier coefficients."""
        C = character_matrix(self.P)
        F = C.T @ self.K @ C / self.K.shape[0] ** 2
        return 0.5 * (F + F.T)


def kernel_matrix(fmap: FirstLayerMap, act: Activation) -> KernelMatrix:
    Z = hypercube(fmap.P)
    Phi = act.sigma(fmap.U @ Z.T)
    K = Phi.T @ (fmap.weights[:, None] * Phi)
    return KernelMatrix(0.5 * (K + K.T))


def _is_symmetric(A: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(A - A.T), initial=0.0) <= tol * max(1.0, float(np.max(np.abs(A), initial=0.0))))


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ascending eigenvalues and orthonormal eigenvectors as columns.
    Sweeps stop once the off-diagonal Frobenius norm is below ``tol * |A|_F``.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise InvalidInputError("matrix must be square")
    if not _is_symmetric(A):
        raise InvalidInputError("matrix is not symmetric")
    if n > MAX_EIG_SIZE:
        raise InvalidInputError(f"matrix size {n} exceeds {MAX_EIG_SIZE}")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        return np.diag(A).copy(), V
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * float(np.sum(np.triu(A, 1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def lambda_min(K) -> float:
    """Smallest eigenvalue; a :class:`KernelMatrix` is measured through its Phase-2 generator."""
    A = K.fourier() if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)
    return float(jacobi_eigh(A)[0][0])


# phase 2


def residual_flow(A: np.ndarray, g0: np.ndarray, times, mode: str = "exact", delta: float = 0.01) -> np.ndarray:
    """Squared norm of ``g(t)`` for ``dg/dt = -A g`` at the requested times.

    ``exact`` integrates in the eigenbasis; ``euler`` takes steps of size
    ``delta`` and is exact only in the small-step limit.
    """
    A = np.asarray(A, dtype=np.float64)
    g0 = np.asarray(g0, dtype=np.float64)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if mode == "exact":
        lam, V = jacobi_eigh(A)
        c = V.T @ g0
        return np.array([float(np.sum(np.exp(-2.0 * lam * t) * c * c)) for t in times])
    if mode != "euler":
        raise ValueError("mode must be 'exact' or 'euler'")
    out, g, now = [], g0.copy(), 0.0
    for t in times:
        while now < t - 1e-12:
            g = g - delta * (A @ g)
            now += delta
        out.append(float(g @ g))
    return np.asarray(out)


@dataclass
class Phase2Result:
    trace: TrainingTrace
    lambda_min: float
    T1: float
    T2: float
    risk_T1: float
    risk_T2: float
    predicted_T2: float | None = None
    target: float | None = None
    reached: bool = True
    plateau: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def predicted_risk(self) -> float:
        return math.exp(-self.lambda_min * (self.T2 - self.T1)) * self.risk_T1

    def report(self) -> str:
        items = [
            ("lambda_min", f"{self.lambda_min:.6e}"), ("T1", repr(self.T1)), ("T2", repr(self.T2)),
            ("risk_T1", f"{self.risk_T1:.6e}"), ("risk_T2", f"{self.risk_T2:.6e}"),
            ("predicted_risk", f"{self.predicted_risk:.6e}"), ("target", repr(self.target)),
            ("reached", str(self.reached).lower()), ("plateau", f"{self.plateau:.6e}"),
        ]
        return "\n".join(f"{k} = {v}" for k, v in items) + "\n"


def phase2(K: KernelMatrix, h: FourierFunction, fmap: FirstLayerMap, act: Activation, horizon: float | None = None,
           target: float | None = None, *, mode: str = "exact", delta: float = 0.01, records: int = 50,
           track: str = "support") -> Phase2Result:
    """Second-layer training with the first layer frozen at ``fmap``.

    With ``target`` the horizon is the exponential prediction
    ``log(risk(T1) / target) / lambda_min``. When ``lambda_min`` is not above
    the certification threshold and residual mass sits in the kernel of the
    generator, the target is reported as unreachable together with the plateau.
    """
    if (horizon is None) == (target is None):
        raise ValueError("give exactly one of horizon or target")
    P = h.P
    Z = hypercube(P)
    C = character_matrix(P)
    fhat = (fmap.weights * fmap.nodes) @ act.sigma(fmap.U @ Z.T)
    g_hat = C.T @ (h.table() - fhat) / Z.shape[0]
    A = K.fourier()
    lam, V = jacobi_eigh(A)
    lmin = float(lam[0])
    c = V.T @ g_hat
    risk0 = float(g_hat @ g_hat)
    null = lam <= CERTIFIED_THRESHOLD
    plateau = float(np.sum(c[null] ** 2))
    reached = True
    predicted = None
    if target is not None:
        if risk0 <= target:
            horizon = 0.0
        elif lmin > CERTIFIED_THRESHOLD:
            horizon = math.log(risk0 / target) / lmin
            predicted = fmap.T1 + horizon
        else:
            reached = plateau < target
            horizon = 0.0 if not reached else math.log(risk0 / target) / max(float(lam[~null][0]), 1e-300)
    times = np.linspace(0.0, horizon, records + 1) if horizon > 0 else np.zeros(1)
    R = residual_flow(A, g_hat, times, mode=mode, delta=delta) if mode == "euler" else \
        np.array([float(np.sum(np.exp(-2.0 * lam * t) * c * c)) for t in times])
    sets = tracked_sets(h, track)
    trace = TrainingTrace(sets)
    trace.metadata.update(dynamics="phase2", mode=mode, T1=fmap.T1, activation=act.ident(), lambda_min=lmin,
                          first_layer=fmap.source)
    h_hat = np.array([h.coefficient(m) for m in sets])
    idx = list(sets)
    for t, r in zip(times, R):
        g_t = V @ (np.exp(-lam * t) * c)
        trace.add(fmap.T1 + float(t), r, 0.0, h_hat - g_t[idx])
    if target is not None and reached:
        reached = R[-1] <= target * (1 + 1e-9)
    return Phase2Result(trace, lmin, fmap.T1, fmap.T1 + float(times[-1]), risk0, float(R[-1]), predicted, target,
                        reached, plateau)


# vanilla-staircase monomial Gram matrix


def beta(mask: int) -> int:
    """``beta(S) = sum_{k in S} 2^(k-1)``, which is the mask itself."""
    return int(mask)


def gram_monomial_matrix(P: int, a_rule: LegendreRule | None = None) -> np.ndarray:
    """``M(S, S') = E_a[a^(beta(S) + beta(S'))]`` for ``a ~ Unif[-1, 1]``, indexed by mask.

    Closed-form moments by default; with ``a_rule`` the moments come from the
    quadrature instead (exact when the rule has enough nodes).
    """
    n = 1 << P
    e = np.add.outer(np.arange(n), np.arange(n))
    if a_rule is None:
        mom = np.array([uniform_moment(k) for k in range(2 * n - 1)])
    else:
        mom = np.array([float(np.dot(a_rule.weights, a_rule.nodes ** k)) for k in range(2 * n - 1)])
    return mom[e]


# export


def matrix_csv(M: np.ndarray, labels: list[str]) -> str:
    lines = ["," + ",".join(labels)]
    for lab, row in zip(labels, M):
        lines.append(lab + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def subset_labels(P: int) -> list[str]:
    return [set_label(m) for m in range(1 << P)]


@dataclass
class Certificate:
    target: str
    activation: str
    T1: float
    lambda_min: float
    certified: bool

    def report(self) -> str:
        return (
            f"target = {self.target}\nactivation = {self.activation}\nT1 = {self.T1!r}\n"
            f"lambda_min = {self.lambda_min:.6e}\nthreshold = {CERTIFIED_THRESHOLD:.0e}\n"
            f"status = {'pass' if self.certified else 'fail'}\n"
        )


def certify(h: FourierFunction, act: Activation, T1: float, a_rule: LegendreRule | None = None,
            delta: float = 0.01, method: str = "euler") -> tuple[Certificate, FirstLayerMap, KernelMatrix]:
    fmap = phase1(h, act, T1, a_rule, delta, method=method)
    K = kernel_matrix(fmap, act)
    lm = lambda_min(K)
    return Certificate(str(h), act.ident(), T1, lm, lm > CERTIFIED_THRESHOLD), fmap, K
