"""Training dynamics: ambient batch-SGD, the dimension-free particle flow and its discrete stepper.

The dimension-free state is a weighted set of particles ``(a, u, s)`` with
``u in R^P`` and smoothing width ``s >= 0``. Starting from ``u = 0`` and a
constant ``s``, every particle is a deterministic function of its initial
second-layer weight, so placing particles on Gauss-Legendre nodes represents
the distribution without sampling noise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .activation import Activation
from .fourier import FourierFunction, set_label, set_order_key
from .numerics import HermiteRule, LegendreRule, RngSpec, character_matrix, hypercube

METHODS = ("euler", "rk4")


class DivergenceError(RuntimeError):
    """Non-finite weights; carries the trace recorded so far."""

    def __init__(self, message: str, trace: "TrainingTrace"):
        super().__init__(message)
        self.trace = trace


# schedules and hyperparameters


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant or piecewise-linear nonnegative function of time."""

    knots: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (1.0,)
    kind: str = "constant"

    def __post_init__(self) -> None:
        if len(self.knots) != len(self.values) or not self.knots:
            raise ValueError("schedule needs matching, nonempty knots and values")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ValueError("schedule knots must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise ValueError("schedules must be nonnegative")
        if self.kind not in ("constant", "linear"):
            raise ValueError("schedule kind is 'constant' or 'linear'")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls((0.0,), (float(value),))

    @classmethod
    def steps(cls, pairs: Sequence[tuple[float, float]]) -> "Schedule":
        return cls(tuple(float(t) for t, _ in pairs), tuple(float(v) for _, v in pairs))

    def __call__(self, t: float) -> float:
        k = self.knots
        if self.kind == "constant" or len(k) == 1:
            idx = int(np.searchsorted(k, t, side="right")) - 1
            return self.values[max(idx, 0)]
        return float(np.interp(t, k, self.values))

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def encode(self) -> str:
        pts = ";".join(f"{t!r}:{v!r}" for t, v in zip(self.knots, self.values))
        return pts if self.kind == "constant" else "linear|" + pts

    @classmethod
    def decode(cls, text: str) -> "Schedule":
        text = str(text).strip()
        kind = "constant"
        if text.startswith("linear|"):
            kind, text = "linear", text[len("linear|"):]
        if ":" not in text:
            return cls.constant(float(text))
        pairs = [p.split(":") for p in text.split(";") if p.strip()]
        return cls(tuple(float(t) for t, _ in pairs), tuple(float(v) for _, v in pairs), kind)


@dataclass(frozen=True)
class Distribution:
    """Named one-dimensional law: ``uniform(lo, hi)``, ``normal(mean, std)``, ``delta(v)`` or ``rademacher``."""

    name: str
    params: tuple[float, ...] = ()

    def sample(self, gen: np.random.Generator, size) -> np.ndarray:
        n = self.name
        if n == "uniform":
            return gen.uniform(self.params[0], self.params[1], size=size)
        if n == "normal":
            return gen.normal(self.params[0], self.params[1], size=size)
        if n == "delta":
            return np.full(size, float(self.params[0]))
        if n == "rademacher":
            return 2.0 * gen.integers(0, 2, size=size) - 1.0
        raise ValueError(f"unknown distribution {n!r}")

    def second_moment_root(self) -> float:
        n = self.name
        if n == "uniform":
            lo, hi = self.params
            return math.sqrt((hi**3 - lo**3) / (3 * (hi - lo)))
        if n == "normal":
            return math.sqrt(self.params[0] ** 2 + self.params[1] ** 2)
        if n == "delta":
            return abs(float(self.params[0]))
        if n == "rademacher":
            return 1.0
        raise ValueError(f"unknown distribution {n!r}")

    def encode(self) -> str:
        return self.name + "(" + ",".join(repr(float(p)) for p in self.params) + ")"

    @classmethod
    def decode(cls, text: str) -> "Distribution":
        text = text.strip()
        if "(" not in text:
            return cls(text)
        name, rest = text.split("(", 1)
        args = tuple(float(x) for x in rest.rstrip(")").split(",") if x.strip())
        return cls(name.strip(), args)


@dataclass(frozen=True)
class HyperParams:
    eta: float = 0.5
    xi_a: Schedule = Schedule.constant(1.0)
    xi_w: Schedule = Schedule.constant(1.0)
    lambda_a: float = 0.0
    lambda_w: float = 0.0
    batch: int = 150
    latent: tuple[int, ...] | None = None
    mu_a: Distribution = Distribution("uniform", (-1.0, 1.0))
    mu_w: Distribution = Distribution("normal", (0.0, 1.0))
    noise: float = 0.0
    horizon: float = 10.0
    record_interval: float = 0.5
    test_size: int = 300

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.batch < 1:
            raise ValueError("batch size must be at least 1")
        if self.horizon < 0 or self.record_interval <= 0:
            raise ValueError("horizon must be nonnegative and record interval positive")
        if self.lambda_a < 0 or self.lambda_w < 0:
            raise ValueError("regularization must be nonnegative")

    @property
    def fixed_schedules(self) -> bool:
        return self.xi_a.is_constant and self.xi_w.is_constant

    def as_dict(self) -> dict:
        d = asdict(self)
        d["xi_a"] = self.xi_a.encode()
        d["xi_w"] = self.xi_w.encode()
        d["mu_a"] = self.mu_a.encode()
        d["mu_w"] = self.mu_w.encode()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()[:16]


# traces


@dataclass
class TrainingTrace:
    """Recorded ``(t, risk, stderr, coefficients)`` rows plus metadata."""

    sets: tuple[int, ...]
    times: list[float] = field(default_factory=list)
    risk: list[float] = field(default_factory=list)
    stderr: list[float] = field(default_factory=list)
    coeffs: list[np.ndarray] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, t: float, risk: float, stderr: float, coeffs: np.ndarray) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("trace times must be strictly increasing")
        if risk < 0:
            raise ValueError("risk must be nonnegative")
        self.times.append(float(t))
        self.risk.append(float(risk))
        self.stderr.append(float(stderr))
        self.coeffs.append(np.asarray(coeffs, dtype=np.float64).copy())

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.risk)

    @property
    def C(self) -> np.ndarray:
        """Coefficient matrix of shape ``(records, len(sets))``."""
        if not self.coeffs:
            return np.zeros((0, len(self.sets)))
        return np.vstack(self.coeffs)

    def column(self, mask: int) -> np.ndarray:
        return self.C[:, self.sets.index(mask)]

    def header(self) -> list[str]:
        return ["t", "risk", "stderr", *[set_label(s) for s in self.sets]]

    def csv_text(self) -> str:
        lines = [",".join(self.header())]
        for t, r, e, c in zip(self.times, self.risk, self.stderr, self.coeffs):
            lines.append(",".join(repr(float(v)) for v in (t, r, e, *c)))
        return "\n".join(lines) + "\n"

    def sidecar_text(self) -> str:
        return json.dumps(self.metadata, sort_keys=True, indent=2, default=str) + "\n"

    def write(self, stem: str) -> tuple[str, str]:
        csv_path, meta_path = stem + ".csv", stem + ".meta.json"
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.csv_text())
        with open(meta_path, "w") as fh:
            fh.write(self.sidecar_text())
        return csv_path, meta_path


def tracked_sets(h: FourierFunction, track: str | Sequence[int] = "support") -> tuple[int, ...]:
    if track == "support":
        sets = [m for m in h.support if m != 0]
    elif track == "all":
        sets = list(range(1, 1 << h.P))
    else:
        sets = [int(m) for m in track]
    return tuple(sorted(sets, key=set_order_key))


# dimension-free particles


@dataclass
class EffectiveEnsemble:
    """Weighted particles ``(a, u, s)`` representing the dimension-free distribution."""

    a: np.ndarray
    U: np.ndarray
    s: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=np.float64)
        self.U = np.atleast_2d(np.asarray(self.U, dtype=np.float64))
        self.s = np.asarray(self.s, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        n = self.a.size
        if self.U.shape[0] != n or self.s.size != n or self.w.size != n:
            raise ValueError("particle arrays must share their leading length")
        if abs(self.w.sum() - 1.0) > 1e-12 or np.any(self.w < 0):
            raise ValueError("particle weights must be nonnegative and sum to 1")
        if np.any(self.s < 0):
            raise ValueError("smoothing widths must be nonnegative")

    @property
    def P(self) -> int:
        return self.U.shape[1]

    @classmethod
    def from_rule(cls, rule: LegendreRule, P: int, s0: float = 0.0) -> "EffectiveEnsemble":
        n = rule.size
        return cls(rule.nodes.copy(), np.zeros((n, P)), np.full(n, float(s0)), rule.weights.copy())

    def copy(self) -> "EffectiveEnsemble":
        return EffectiveEnsemble(self.a.copy(), self.U.copy(), self.s.copy(), self.w.copy())


def _rule_for(ens: EffectiveEnsemble, hermite: HermiteRule) -> HermiteRule:
    return HermiteRule.degenerate() if not np.any(ens.s) else hermite


def _features(a, U, s, act: Activation, Z: np.ndarray, hermite: HermiteRule):
    """``E_G sigma``, ``E_G sigma'`` and ``E_G sigma' G`` per particle and point."""
    pre = U @ Z.T
    if hermite.size == 1 and hermite.nodes[0] == 0.0:
        return act.sigma(pre), act.dsigma(pre), np.zeros_like(pre)
    g, wg = hermite.nodes, hermite.weights
    full = pre[:, :, None] + s[:, None, None] * g[None, None, :]
    ds = act.dsigma(full)
    return act.sigma(full) @ wg, ds @ wg, ds @ (wg * g)


@dataclass
class FieldEval:
    fhat: np.ndarray
    resid: np.ndarray
    risk: float
    da: np.ndarray
    dU: np.ndarray
    ds: np.ndarray


def evaluate_field(
    a, U, s, w, h_table: np.ndarray, act: Activation, Z: np.ndarray, hermite: HermiteRule,
    xi_a: float, xi_w: float, lam_a: float, lam_w: float,
) -> FieldEval:
    """Predictor, residual and drift of every particle."""
    X = Z.shape[0]
    rule = HermiteRule.degenerate() if not np.any(s) else hermite
    Es, Ed, EdG = _features(a, U, s, act, Z, rule)
    fhat = (w * a) @ Es
    resid = h_table - fhat
    da = xi_a * ((Es @ resid) / X - lam_a * a)
    dU = xi_w * (a[:, None] * ((Ed * resid) @ Z) / X - lam_w * U)
    ds = xi_w * (a * (EdG @ resid) / X - lam_w * s)
    return FieldEval(fhat, resid, float(np.mean(resid * resid)), da, dU, ds)


def effective_predict(ens: EffectiveEnsemble, z, act: Activation, hermite: HermiteRule | None = None):
    """``sum_j w_j a_j E_G sigma(<u_j, z> + s_j G)`` for one point or a batch."""
    hermite = HermiteRule.gauss() if hermite is None else hermite
    Z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if Z.shape[1] != ens.P:
        raise ValueError(f"expected points of length {ens.P}")
    if not np.all(np.abs(Z) == 1.0):
        raise ValueError("entries of z must be +1 or -1")
    Es, _, _ = _features(ens.a, ens.U, ens.s, act, Z, _rule_for(ens, hermite))
    out = (ens.w * ens.a) @ Es
    return float(out[0]) if np.ndim(z) == 1 else out


def potential(
    theta: tuple[float, np.ndarray, float], ens: EffectiveEnsemble, h: FourierFunction,
    act: Activation, hermite: HermiteRule, lam_a: float = 0.0, lam_w: float = 0.0,
) -> float:
    """First variation of the regularized half-risk at a test particle, with the ensemble held fixed.

    ``psi = E_{z,G}[(fhat - h) a sigma(<u,z> + s G)] + (lam_a a^2 + lam_w (|u|^2 + s^2)) / 2``.
    """
    a, u, s = theta
    Z = hypercube(ens.P)
    Es, _, _ = _features(ens.a, ens.U, ens.s, act, Z, _rule_for(ens, hermite))
    fhat = (ens.w * ens.a) @ Es
    rule = hermite if s != 0 else HermiteRule.degenerate()
    one, _, _ = _features(np.array([a]), np.asarray(u, float)[None, :], np.array([s]), act, Z, rule)
    inter = float(np.mean((fhat - h.table()) * a * one[0]))
    return inter + 0.5 * (lam_a * a * a + lam_w * (float(np.dot(u, u)) + s * s))


def particle_drift(
    theta: tuple[float, np.ndarray, float], ens: EffectiveEnsemble, h: FourierFunction,
    act: Activation, hermite: HermiteRule, lam_a: float = 0.0, lam_w: float = 0.0,
    xi_a: float = 1.0, xi_w: float = 1.0,
) -> np.ndarray:
    """Analytic velocity ``(da, du, ds)`` of a test particle in the field of ``ens``."""
    a, u, s = theta
    Z = hypercube(ens.P)
    Es, _, _ = _features(ens.a, ens.U, ens.s, act, Z, _rule_for(ens, hermite))
    fhat = (ens.w * ens.a) @ Es
    resid = h.table() - fhat
    rule = hermite if s != 0 else HermiteRule.degenerate()
    e, ed, edg = (x[0] for x in _features(np.array([a]), np.asarray(u, float)[None, :], np.array([s]), act, Z, rule))
    X = Z.shape[0]
    da = xi_a * (np.dot(e, resid) / X - lam_a * a)
    du = xi_w * (a * ((ed * resid) @ Z) / X - lam_w * np.asarray(u, float))
    ds = xi_w * (a * np.dot(edg, resid) / X - lam_w * s)
    return np.concatenate([[da], du, [ds]])


def _stage(state, k, h):
    return tuple(x + h * dx for x, dx in zip(state, k))


def dfpde_integrate(
    h: FourierFunction,
    hp: HyperParams,
    act: Activation,
    a_rule: LegendreRule | None = None,
    s0: float | None = None,
    hermite: HermiteRule | None = None,
    delta: float = 0.01,
    *,
    method: str = "euler",
    ensemble: EffectiveEnsemble | None = None,
    t0: float = 0.0,
    track: str | Sequence[int] = "support",
    callback: Callable[[float, EffectiveEnsemble], None] | None = None,
    symmetries: Sequence[Sequence[int]] = (),
) -> tuple[TrainingTrace, EffectiveEnsemble]:
    """Fixed-step integration of the dimension-free particle equations.

    Starts from ``u = 0`` and ``s = s0`` (default ``m_2^w`` of ``hp.mu_w``) on the
    Legendre nodes unless an explicit ``ensemble`` is given. Risk and predictor
    coefficients are exact hypercube averages.

    ``symmetries`` is a permutation group of the coordinates (without the
    identity) under which ``h`` is invariant, as returned by
    ``detect_symmetries``. The exact flow keeps ``u`` in the fixed subspace of
    that group, but rounding differences between coordinates can grow along
    unstable directions. When given, ``U`` is averaged over the group after
    every step; the largest deviation seen before averaging is stored as
    ``symmetry_defect`` in the trace metadata.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    hermite = HermiteRule.gauss() if hermite is None else hermite
    if ensemble is None:
        a_rule = LegendreRule.gauss() if a_rule is None else a_rule
        s0 = hp.mu_w.second_moment_root() if s0 is None else s0
        ensemble = EffectiveEnsemble.from_rule(a_rule, h.P, s0)
    ens = ensemble.copy()
    Z = hypercube(h.P)
    C = character_matrix(h.P)
    H = h.table()
    sets = tracked_sets(h, track)
    trace = TrainingTrace(sets)
    trace.metadata.update(
        dynamics="dfpde", method=method, delta=delta, activation=act.ident(), hyperparams=hp.as_dict(),
        hyperparams_hash=hp.digest(), particles=int(ens.a.size), hermite_nodes=hermite.size, target=str(h),
    )
    n_steps = int(round(hp.horizon / delta))
    every = max(1, int(round(hp.record_interval / delta)))
    if abs(every * delta - hp.record_interval) > 1e-9 * hp.record_interval and every * delta < hp.horizon:
        raise ValueError("record_interval must be a multiple of delta")
    lam_a, lam_w = hp.lambda_a, hp.lambda_w
    w = ens.w

    def rhs(t, state):
        a, U, s = state
        f = evaluate_field(a, U, s, w, H, act, Z, hermite, hp.xi_a(t), hp.xi_w(t), lam_a, lam_w)
        return f, (f.da, f.dU, f.ds)

    def record(t, f: FieldEval):
        coeffs = (f.fhat @ C[:, list(sets)]) / Z.shape[0] if sets else np.zeros(0)
        trace.add(t, f.risk, 0.0, coeffs)

    group = [list(p) for p in symmetries]
    defect = 0.0
    state = (ens.a, ens.U, ens.s)
    warn = hp.lambda_a == 0 and hp.lambda_w == 0 and hp.fixed_schedules
    for k in range(n_steps + 1):
        t = t0 + k * delta
        f, k1 = rhs(t, state)
        if k % every == 0 or k == n_steps:
            record(t, f)
            if warn and len(trace.risk) > 1 and trace.risk[-1] > 1.1 * trace.risk[-2] and trace.risk[-2] > 1e-12:
                trace.metadata["warning"] = f"risk increased by more than 10% near t={t:.4g}; step size may be unstable"
            if callback is not None:
                callback(t, EffectiveEnsemble(state[0], state[1], state[2], w))
        if k == n_steps:
            break
        if method == "euler":
            state = _stage(state, k1, delta)
        else:
            _, k2 = rhs(t + delta / 2, _stage(state, k1, delta / 2))
            _, k3 = rhs(t + delta / 2, _stage(state, k2, delta / 2))
            _, k4 = rhs(t + delta, _stage(state, k3, delta))
            state = tuple(x + delta / 6 * (d1 + 2 * d2 + 2 * d3 + d4) for x, d1, d2, d3, d4 in zip(state, k1, k2, k3, k4))
        if not all(np.all(np.isfinite(x)) for x in state):
            raise DivergenceError(f"non-finite particles at t={t + delta:.4g}", trace)
        # widths are norms; Euler can only push them negative through overshoot
        state = (state[0], state[1], np.maximum(state[2], 0.0))
        if group:
            U = state[1]
            defect = max(defect, max(float(np.max(np.abs(U[:, p] - U))) for p in group))
            state = (state[0], (U + sum(U[:, p] for p in group)) / (len(group) + 1), state[2])
    if group:
        trace.metadata["symmetry_defect"] = defect
    return trace, EffectiveEnsemble(state[0], state[1], state[2], w)


def dfpde_step_discrete(
    state: EffectiveEnsemble, h: FourierFunction, act: Activation,
    eta_a: float, eta_w: float, lam_a: float = 0.0, lam_w: float = 0.0,
    hermite: HermiteRule | None = None,
) -> EffectiveEnsemble:
    """One full-gradient step of the discrete dimension-free dynamics."""
    hermite = HermiteRule.gauss() if hermite is None else hermite
    Z = hypercube(h.P)
    f = evaluate_field(state.a, state.U, state.s, state.w, h.table(), act, Z, hermite, eta_a, eta_w, lam_a, lam_w)
    return EffectiveEnsemble(
        state.a + f.da, state.U + f.dU, np.maximum(state.s + f.ds, 0.0), state.w.copy()
    )


def residual_coefficients(state: EffectiveEnsemble, h: FourierFunction, act: Activation,
                          hermite: HermiteRule | None = None) -> np.ndarray:
    """Dense Fourier coefficients of ``h - fhat`` indexed by subset mask."""
    hermite = HermiteRule.gauss() if hermite is None else hermite
    Z = hypercube(h.P)
    Es, _, _ = _features(state.a, state.U, state.s, act, Z, _rule_for(state, hermite))
    resid = h.table() - (state.w * state.a) @ Es
    return character_matrix(h.P).T @ resid / Z.shape[0]


# risk


def risk(predictor, h: FourierFunction, act: Activation | None = None, hermite: HermiteRule | None = None,
         X_test: np.ndarray | None = None, latent: Sequence[int] | None = None):
    """Squared-error risk of a predictor against ``h``.

    Effective ensembles, Fourier functions and callables on ``z`` are averaged
    exactly over the hypercube. Ambient networks use the Monte-Carlo test set
    ``X_test`` and return ``(estimate, stderr)``.
    """
    if isinstance(predictor, AmbientNetwork):
        if X_test is None or act is None:
            raise ValueError("ambient risk needs an activation and a test set")
        idx = list(range(h.P)) if latent is None else list(latent)
        err = h_values(h, X_test[:, idx]) - predictor.predict(X_test, act)
        sq = err * err
        return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else 0.0
    Z = hypercube(h.P)
    if isinstance(predictor, EffectiveEnsemble):
        if act is None:
            raise ValueError("effective risk needs an activation")
        vals = effective_predict(predictor, Z, act, hermite)
    elif isinstance(predictor, FourierFunction):
        vals = predictor.table()
    else:
        vals = np.asarray(predictor(Z), dtype=np.float64)
    err = h.table() - vals
    return float(np.mean(err * err))


def h_values(h: FourierFunction, Z: np.ndarray) -> np.ndarray:
    """``h`` on arbitrary sign rows, via masks (no validation)."""
    out = np.zeros(Z.shape[0])
    for m, a in h.coeffs.items():
        cols = [b for b in range(h.P) if (m >> b) & 1]
        out += a * (np.prod(Z[:, cols], axis=1) if cols else 1.0)
    return out


# ambient network and batch-SGD


@dataclass
class AmbientNetwork:
    """``f(x) = (1/N) sum_j a_j sigma(<w_j, x>)`` in dimension ``d``."""

    a: np.ndarray
    W: np.ndarray

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @classmethod
    def initialize(cls, d: int, N: int, mu_a: Distribution, mu_w: Distribution, gen: np.random.Generator):
        a = mu_a.sample(gen, N)
        W = mu_w.sample(gen, (N, d)) / math.sqrt(d)
        return cls(a, W)

    def predict(self, X: np.ndarray, act: Activation) -> np.ndarray:
        return act.sigma(X @ self.W.T) @ self.a / self.N

    def check(self, cap: float = 1e6) -> bool:
        return bool(np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.W)) and np.max(np.abs(self.a)) <= cap)


def latent_coefficients(values: np.ndarray, Zl: np.ndarray, sets: Sequence[int]) -> np.ndarray:
    out = np.empty(len(sets))
    for k, m in enumerate(sets):
        cols = [b for b in range(Zl.shape[1]) if (m >> b) & 1]
        out[k] = float(np.mean(values * np.prod(Zl[:, cols], axis=1)))
    return out


def bsgd_train(
    h: FourierFunction,
    hp: HyperParams,
    act: Activation,
    width: int,
    rng: RngSpec,
    d: int,
    *,
    track: str | Sequence[int] = "support",
    estimator: str = "iid",
    network: AmbientNetwork | None = None,
) -> tuple[TrainingTrace, AmbientNetwork]:
    """One-pass batch-SGD with fresh samples at every step.

    Time ``t = k * eta``. Risk and predictor coefficients are estimated on a
    fixed test set of ``hp.test_size`` points drawn once. With
    ``estimator="latent-exact"`` each test point's nuisance coordinates are
    paired with all ``2^P`` latent sign patterns.
    """
    if estimator not in ("iid", "latent-exact"):
        raise ValueError("estimator must be 'iid' or 'latent-exact'")
    latent = list(range(h.P)) if hp.latent is None else list(hp.latent)
    if len(latent) != h.P or len(set(latent)) != h.P or max(latent) >= d:
        raise ValueError("latent index set must have P distinct coordinates in [d]")
    init_gen = rng.child("init").generator()
    data_gen = rng.child("data").generator()
    test_gen = rng.child("test").generator()
    net = AmbientNetwork.initialize(d, width, hp.mu_a, hp.mu_w, init_gen) if network is None else network

    X_test = 2.0 * test_gen.integers(0, 2, size=(hp.test_size, d)) - 1.0
    if estimator == "latent-exact":
        Zp = hypercube(h.P)
        X_test = np.repeat(X_test, Zp.shape[0], axis=0)
        X_test[:, latent] = np.tile(Zp, (hp.test_size, 1))
    y_test = h_values(h, X_test[:, latent])
    Zl_test = X_test[:, latent]
    sets = tracked_sets(h, track)
    trace = TrainingTrace(sets)
    trace.metadata.update(
        dynamics="bsgd", activation=act.ident(), hyperparams=hp.as_dict(), hyperparams_hash=hp.digest(),
        seed=int(rng.seed), stream=int(rng.stream), d=int(d), width=int(width), estimator=estimator,
        target=str(h),
    )

    def record(t):
        f = net.predict(X_test, act)
        err = (y_test - f) ** 2
        if estimator == "latent-exact":
            per = err.reshape(hp.test_size, -1).mean(axis=1)
        else:
            per = err
        se = float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else 0.0
        trace.add(t, float(err.mean()), se, latent_coefficients(f, Zl_test, sets))

    n_steps = int(round(hp.horizon / hp.eta))
    every = max(1, int(round(hp.record_interval / hp.eta)))
    b = hp.batch
    N = net.N
    for k in range(n_steps + 1):
        t = k * hp.eta
        if k % every == 0 or k == n_steps:
            record(t)
        if k == n_steps:
            break
        X = 2.0 * data_gen.integers(0, 2, size=(b, d)) - 1.0
        y = h_values(h, X[:, latent])
        if hp.noise > 0:
            y = y + data_gen.uniform(-hp.noise, hp.noise, size=b)
        pre = X @ net.W.T
        S = act.sigma(pre)
        r = y - S @ net.a / N
        eta_a = hp.eta * hp.xi_a(t)
        eta_w = hp.eta * hp.xi_w(t)
        grad_a = S.T @ r / b
        grad_W = net.a[:, None] * ((act.dsigma(pre) * r[:, None]).T @ X) / b
        net.a = net.a + eta_a * (grad_a - hp.lambda_a * net.a)
        net.W = net.W + eta_w * (grad_W - hp.lambda_w * net.W)
        if not net.check():
            raise DivergenceError(f"non-finite or exploding weights at step {k + 1}", trace)
    return trace, net


def with_horizon(hp: HyperParams, horizon: float) -> HyperParams:
    return replace(hp, horizon=horizon)


def coefficient_gap(a: TrainingTrace, b: TrainingTrace, decimals: int = 9) -> float:
    """Sup over shared record times of the l-infinity gap between coefficient vectors."""
    if a.sets != b.sets:
        raise ValueError("traces track different sets")
    ta, tb = np.round(a.t, decimals), np.round(b.t, decimals)
    common, ia, ib = np.intersect1d(ta, tb, return_indices=True)
    if common.size == 0:
        raise ValueError("traces share no record times")
    return float(np.max(np.abs(a.C[ia] - b.C[ib])))


def crossing_times(trace: TrainingTrace, level: float = 0.5) -> dict[int, float | None]:
    """First record time at which each tracked coefficient reaches ``level``."""
    out: dict[int, float | None] = {}
    for j, m in enumerate(trace.sets):
        hit = np.nonzero(trace.C[:, j] >= level)[0]
        out[m] = float(trace.t[hit[0]]) if hit.size else None
    return out
