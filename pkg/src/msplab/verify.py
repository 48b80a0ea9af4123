"""Invariant suites behind ``msplab verify``.

Each check is a named function returning ``(passed, detail)``. ``quick`` runs
small instances of every module's invariants; ``full`` adds the larger
instances and the fig1 preset comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .activation import Activation
from .bounds import berry_esseen_w1, legendre_anticoncentration, polyk_bound, staircase_bound
from .dynamics import (
    EffectiveEnsemble, HyperParams, bsgd_train, coefficient_gap, dfpde_integrate, particle_drift, potential,
)
from .fourier import (
    FourierFunction, detect_symmetries, evaluate, from_string, indices_from_mask, is_msp, msp_bruteforce,
    random_structure, walsh_transform,
)
from .numerics import HermiteRule, LegendreRule, RngSpec, hypercube
from .presets import FIG1_TARGET, PRESETS
from .recurrence import continuous_oracle_check, discrete_oracle_error
from .twophase import jacobi_eigh, residual_flow

Check = Callable[["Context"], tuple[bool, str]]


@dataclass
class Context:
    level: str
    activation: Activation
    gen: np.random.Generator


@dataclass
class Outcome:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class Report:
    level: str
    outcomes: list[Outcome] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    @property
    def failed(self) -> list[str]:
        return [o.name for o in self.outcomes if not o.passed]

    def text(self) -> str:
        lines = [f"{'PASS' if o.passed else 'FAIL'} {o.name} ({o.seconds:.1f}s): {o.detail}" for o in self.outcomes]
        status = "all invariants hold" if self.passed else "failed: " + ", ".join(self.failed)
        return "\n".join(lines + [f"verify {self.level}: {status}"]) + "\n"


def _random_function(gen: np.random.Generator, P: int) -> FourierFunction:
    S = random_structure(P, int(gen.integers(1, 1 << P)), gen)
    return FourierFunction(P, {s: float(gen.uniform(-1, 1)) for s in S.sets})


def walsh_roundtrip(ctx: Context) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        h = _random_function(ctx.gen, int(ctx.gen.integers(1, 8)))
        back = walsh_transform(evaluate(h, hypercube(h.P)))
        keys = set(h.coeffs) | set(back.coeffs)
        worst = max(worst, max(abs(h.coefficient(k) - back.coefficient(k)) for k in keys))
    return worst <= 1e-12, f"max coefficient error {worst:.2e}"


def msp_examples(ctx: Context) -> tuple[bool, str]:
    yes = ["z1 + z1z2 + z1z2z3", "z1 + z1z2 + z2z3 + z3z4", "z1 + z2 + z3 + z4 + z1z2z3z4"]
    no = ["z1z2z3", "z1 + z1z2z3 + z1z2z3z4", "z1 + z1z2 + z3z4"]
    got = [is_msp(from_string(s).structure()).is_msp for s in yes + no]
    ok = got == [True] * 3 + [False] * 3
    return ok, "six reference targets classified" if ok else f"got {got}"


def greedy_vs_bruteforce(ctx: Context) -> tuple[bool, str]:
    n = 300 if ctx.level == "quick" else 3000
    bad = 0
    for _ in range(n):
        P = int(ctx.gen.integers(1, 6))
        m = int(ctx.gen.integers(1, min(7, (1 << P) - 1) + 1))
        S = random_structure(P, m, ctx.gen)
        bad += is_msp(S).is_msp != msp_bruteforce(S)
    return bad == 0, f"{bad} disagreements on {n} structures"


def drift_potential_gradient(ctx: Context) -> tuple[bool, str]:
    act = ctx.activation
    h = from_string(FIG1_TARGET)
    hr = HermiteRule.gauss()
    rule = LegendreRule.gauss(16)
    worst = 0.0
    for _ in range(10 if ctx.level == "quick" else 50):
        ens = EffectiveEnsemble(rule.nodes + 0.1 * ctx.gen.normal(size=16), 0.5 * ctx.gen.normal(size=(16, 4)),
                                ctx.gen.uniform(0.2, 1.5, 16), rule.weights)
        theta = np.concatenate([[ctx.gen.uniform(-1, 1)], ctx.gen.normal(size=4), [ctx.gen.uniform(0.2, 1.5)]])
        lam_a, lam_w = 0.01, 0.02
        drift = particle_drift((theta[0], theta[1:-1], theta[-1]), ens, h, act, hr, lam_a, lam_w)
        f = lambda x: potential((x[0], x[1:-1], x[-1]), ens, h, act, hr, lam_a, lam_w)
        fd = np.empty_like(theta)
        eps = 1e-5
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = eps
            fd[i] = -(f(theta + e) - f(theta - e)) / (2 * eps)
        worst = max(worst, float(np.max(np.abs(drift - fd)) / np.max(np.abs(fd))))
    return worst <= 1e-6, f"max relative error {worst:.2e}"


def euler_halving(ctx: Context) -> tuple[bool, str]:
    h = from_string(FIG1_TARGET)
    act = Activation.shifted_sigmoid(0.5)
    hp = HyperParams(horizon=4.0, record_interval=1.0)
    runs = []
    for delta in (0.1, 0.05, 0.025, 0.0125):
        tr, _ = dfpde_integrate(h, hp, act, delta=delta)
        runs.append(np.column_stack([tr.R, tr.C])[1:])
    ratios = []
    for i in range(len(runs) - 2):
        a = np.max(np.abs(runs[i] - runs[i + 1]), axis=1)
        b = np.max(np.abs(runs[i + 1] - runs[i + 2]), axis=1)
        ratios.extend(a / b)
    lo, hi = min(ratios), max(ratios)
    return 1.7 <= lo and hi <= 2.3, f"ratios in [{lo:.3f}, {hi:.3f}]"


def blocked_coordinates(ctx: Context) -> tuple[bool, str]:
    act = Activation.shifted_sigmoid(0.5)
    worst, margin = 0.0, np.inf
    for spec in ("z1z2z3", PRESETS["fig4-leap2"].target, PRESETS["fig4-leap3"].target):
        h = from_string(spec)
        res = is_msp(h.structure(), h)
        omega = [i - 1 for i in indices_from_mask(res.blocked_coords)]
        seen = [0.0]
        tr, _ = dfpde_integrate(h, HyperParams(horizon=5.0, record_interval=0.5), act,
                                callback=lambda t, e: seen.__setitem__(0, max(seen[0], float(np.max(np.abs(e.U[:, omega]))))))
        worst = max(worst, seen[0])
        margin = min(margin, float(np.min(tr.R)) - res.stuck_risk_lower_bound)
    return worst <= 1e-10 and margin >= -1e-6, f"max |u| on blocked coordinates {worst:.2e}, risk margin {margin:.3e}"


def symmetry_conservation(ctx: Context) -> tuple[bool, str]:
    act = Activation.shifted_sigmoid(1.0)
    h = from_string(PRESETS["appA-h3"].target)
    syms = detect_symmetries(h)
    seen = [0.0]

    def cb(t, e):
        seen[0] = max(seen[0], max(float(np.max(np.abs(e.U[:, list(p)] - e.U))) for p in syms))

    tr, _ = dfpde_integrate(h, HyperParams(horizon=20.0, record_interval=1.0), act, callback=cb, symmetries=syms)
    defect = tr.metadata["symmetry_defect"]
    return defect <= 1e-9 and seen[0] <= 1e-9, f"step defect {defect:.2e}, recorded asymmetry {seen[0]:.2e}"


def continuous_recurrence(ctx: Context) -> tuple[bool, str]:
    act = Activation.shifted_sigmoid(0.5)
    chk = continuous_oracle_check(from_string("z1 + z1z2 + z1z2z3"), act, 3)
    return chk.passed, chk.line()


def discrete_recurrence(ctx: Context) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(5 if ctx.level == "quick" else 20):
        h = _random_function(ctx.gen, int(ctx.gen.integers(1, 4)))
        act = Activation.polynomial(list(ctx.gen.uniform(-1, 1, 6)))
        worst = max(worst, discrete_oracle_error(h, act, 0.05, 4))
    return worst <= 1e-9, f"max error {worst:.2e}"


def eigensolver(ctx: Context) -> tuple[bool, str]:
    worst = 0.0
    for n in (3, 8, 16):
        B = ctx.gen.normal(size=(n, n))
        A = B.T @ B
        w, V = jacobi_eigh(A)
        worst = max(worst, float(np.max(np.abs(A @ V - V * w))) / max(1.0, float(np.max(np.abs(A)))))
        g = ctx.gen.normal(size=n)
        ident = float(np.sum(np.exp(-2 * w * 0.7) * (V.T @ g) ** 2))
        worst = max(worst, abs(residual_flow(A, g, [0.7])[0] - ident))
    return worst <= 1e-9, f"max residual {worst:.2e}"


def bound_values(ctx: Context) -> tuple[bool, str]:
    a, b = polyk_bound(4, 2, 1, 1.0).value, staircase_bound(10, 4, 1.0).value
    return a == 6.0 and b == 22.5, f"polyk(4,2,1,1)={a!r}, staircase(10,4,1)={b!r}"


def berry_esseen(ctx: Context) -> tuple[bool, str]:
    bad = 0
    n = 5 if ctx.level == "quick" else 50
    for i in range(n):
        v = ctx.gen.normal(size=int(ctx.gen.integers(1, 200)))
        res = berry_esseen_w1(v, 100_000, RngSpec(1000 + i))
        bad += not res.holds
    return bad == 0, f"{bad} violations in {n} vectors"


def legendre_parseval(ctx: Context) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(10 if ctx.level == "quick" else 100):
        m, D = int(ctx.gen.integers(1, 3)), int(ctx.gen.integers(1, 5))
        coeffs = ctx.gen.normal(size=(D + 1,) * m)
        res = legendre_anticoncentration(coeffs, D, m)
        worst = max(worst, abs(res.second_moment - res.quadrature_second_moment))
    return worst <= 1e-9, f"max gap {worst:.2e}"


def determinism(ctx: Context) -> tuple[bool, str]:
    h = from_string("z1 + z1z2")
    hp = HyperParams(horizon=5.0, record_interval=1.0, test_size=50)
    act = Activation.shifted_sigmoid(0.5)
    a = bsgd_train(h, hp, act, 20, RngSpec(7), 10)[0].csv_text()
    b = bsgd_train(h, hp, act, 20, RngSpec(7), 10)[0].csv_text()
    return a == b, "identical CSV bodies" if a == b else "reruns differ"


def fig1_gap(ctx: Context) -> tuple[bool, str]:
    p = PRESETS["fig1"]
    h = from_string(p.target)
    act = Activation.shifted_sigmoid(0.5)
    ref, _ = dfpde_integrate(h, p.hp, act, delta=p.delta)
    gaps = [coefficient_gap(ref, bsgd_train(h, p.hp, act, p.width, RngSpec(s), p.d)[0]) for s in p.seeds]
    mean = float(np.mean(gaps))
    return mean <= 0.15, f"mean sup-time linf gap {mean:.4f} over seeds {list(p.seeds)}"


QUICK: list[tuple[str, Check]] = [
    ("walsh-roundtrip", walsh_roundtrip),
    ("msp-examples", msp_examples),
    ("greedy-vs-bruteforce", greedy_vs_bruteforce),
    ("drift-potential-gradient", drift_potential_gradient),
    ("euler-halving", euler_halving),
    ("blocked-coordinates", blocked_coordinates),
    ("symmetry-conservation", symmetry_conservation),
    ("continuous-recurrence", continuous_recurrence),
    ("discrete-recurrence", discrete_recurrence),
    ("eigensolver", eigensolver),
    ("bound-values", bound_values),
    ("berry-esseen", berry_esseen),
    ("legendre-parseval", legendre_parseval),
    ("determinism", determinism),
]
FULL: list[tuple[str, Check]] = QUICK + [("fig1-gap", fig1_gap)]


def run_suite(level: str = "quick", activation: Activation | None = None, seed: int = 0) -> Report:
    """Run every check; ``activation`` replaces the sigmoid in the gradient check (fault injection)."""
    if level not in ("quick", "full"):
        raise ValueError("level must be quick or full")
    ctx = Context(level, activation or Activation.shifted_sigmoid(0.5), RngSpec(seed).child("verify").generator())
    report = Report(level)
    for name, check in (QUICK if level == "quick" else FULL):
        t0 = time.perf_counter()
        try:
            ok, detail = check(ctx)
        except Exception as exc:  # a crashing invariant is a failed invariant
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.outcomes.append(Outcome(name, bool(ok), detail, time.perf_counter() - t0))
    return report
