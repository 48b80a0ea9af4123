"""Acceptance criteria 1-9.

Each test prints one ``PASS``/``FAIL`` line (also on success) and then asserts
the same condition. Wall-clock limits are part of each criterion.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from msplab.activation import Activation
from msplab.bounds import (
    berry_esseen_w1, gram_permuted_class, legendre_anticoncentration, polyk_bound, polyk_row_average,
    staircase_bound, staircase_row_average, subspace_trial,
)
from msplab.dynamics import (
    bsgd_train, coefficient_gap, crossing_times, dfpde_integrate,
)
from msplab.fourier import (
    FourierFunction, detect_symmetries, from_string, indices_from_mask, is_msp, msp_bruteforce, popcount,
    random_structure, set_label,
)
from msplab.numerics import RngSpec
from msplab.presets import PRESETS
from msplab.recurrence import continuous_oracle_check, discrete_oracle_error, vanilla_oracle_check
from msplab.twophase import certify, phase2
from msplab.verify import determinism, drift_potential_gradient, euler_halving, Context

from conftest import staircase


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def test_criterion_1_msp_classification(report):
    t0 = time.perf_counter()
    yes = ["z1 + z1z2 + z1z2z3", "z1 + z1z2 + z2z3 + z3z4", "z1 + z2 + z3 + z4 + z1z2z3z4"]
    no = ["z1z2z3", "z1 + z1z2z3 + z1z2z3z4", "z1 + z1z2 + z3z4"]
    labels = [is_msp(from_string(s).structure()).is_msp for s in yes + no]
    gen = np.random.default_rng(1)
    bad = 0
    for _ in range(10_000):
        P = int(gen.integers(1, 8))
        m = int(gen.integers(1, min(7, (1 << P) - 1) + 1))
        S = random_structure(P, m, gen)
        bad += is_msp(S).is_msp != msp_bruteforce(S)
    dt = time.perf_counter() - t0
    ok = labels == [True] * 3 + [False] * 3 and bad == 0 and dt < 10
    report(1, ok, f"examples {labels}, {bad} greedy/brute-force disagreements on 10^4 structures, {dt:.1f}s")


def test_criterion_2_blocked_coordinates_stay_zero(report):
    lines, ok = [], True
    for p in PRESETS.values():
        h = from_string(p.target)
        res = is_msp(h.structure(), h)
        if res.is_msp:
            continue
        t0 = time.perf_counter()
        omega = [i - 1 for i in indices_from_mask(res.blocked_coords)]
        seen = [0.0]

        def cb(t, e):
            seen[0] = max(seen[0], float(np.max(np.abs(e.U[:, omega]))))

        hp = replace(p.hp, horizon=5.0, record_interval=0.5)
        tr, _ = dfpde_integrate(h, hp, Activation.shifted_sigmoid(0.5), delta=p.delta, callback=cb)
        margin = float(np.min(tr.R)) - res.stuck_risk_lower_bound
        dt = time.perf_counter() - t0
        ok &= seen[0] <= 1e-10 and margin >= -1e-6 and dt < 30
        lines.append(f"{p.name}: max|u_omega|={seen[0]:.1e} margin={margin:.2e} {dt:.1f}s")
    ok &= bool(lines)
    report(2, ok, "; ".join(lines))


@pytest.fixture(scope="module")
def fig1_runs():
    p = PRESETS["fig1"]
    h = from_string(p.target)
    act = Activation.shifted_sigmoid(0.5)
    t0 = time.perf_counter()
    ref, _ = dfpde_integrate(h, p.hp, act, delta=p.delta)
    sgd = [bsgd_train(h, p.hp, act, p.width, RngSpec(s), p.d)[0] for s in p.seeds]
    return ref, sgd, time.perf_counter() - t0


@pytest.mark.slow
class TestCriterion3:
    def test_a_dfpde_final_risk(self, fig1_runs, report):
        ref, _, dt = fig1_runs
        report("3a", ref.R[-1] < 0.1 and dt <= 300, f"DF-PDE final risk {ref.R[-1]:.4f}, total run {dt:.0f}s")

    def test_b_crossing_order(self, fig1_runs, report):
        ref = fig1_runs[0]
        cross = crossing_times(ref, 0.5)
        order = sorted((t, popcount(m)) for m, t in cross.items() if t is not None)
        degrees = [d for _, d in order]
        ok = len(order) == len(cross) and all(a < b for a, b in zip(degrees, degrees[1:]))
        text = ", ".join(f"{set_label(m)}@{t:g}" for m, t in sorted(cross.items(), key=lambda kv: kv[1] or np.inf))
        report("3b", ok, f"crossings of 0.5: {text}")

    def test_c_sgd_tracks_dfpde(self, fig1_runs, report):
        ref, sgd, _ = fig1_runs
        gaps = [coefficient_gap(ref, tr) for tr in sgd]
        mean = float(np.mean(gaps))
        report("3c", mean <= 0.15, f"mean sup-time linf gap {mean:.4f} (per seed {', '.join(f'{g:.3f}' for g in gaps)})")


@pytest.mark.parametrize("P", [2, 3])
def test_criterion_4_two_phase(P, report):
    t0 = time.perf_counter()
    h = staircase(P, 1.0)
    act = Activation.shifted_sigmoid(0.5)
    cert, fmap, K = certify(h, act, 0.1)
    detail = f"P={P}: lambda_min={cert.lambda_min:.3e}"
    ok = cert.certified
    if ok:
        res = phase2(K, h, fmap, act, target=1e-3)
        ratio = res.risk_T2 / res.predicted_risk
        ok = res.risk_T2 <= 1e-3 and ratio <= 2.0
        detail += f", T2={res.T2:.3f}, risk(T2)={res.risk_T2:.3e}, realized/predicted={ratio:.3f}"
    dt = time.perf_counter() - t0
    report(4, ok and dt < 60, detail + f", {dt:.1f}s")


class TestCriterion5:
    def test_a_continuous(self, report):
        act = Activation.shifted_sigmoid(0.5)
        checks = [(s, L, continuous_oracle_check(from_string(s), act, L))
                  for s, L in (("z1 + z1z2 + z1z2z3", 3), ("z1 + z1z2 + z2z3 + z3z4", 4), ("z1 + z2 + z1z2z3", 2))]
        report("5a", all(c.passed for *_, c in checks), "; ".join(f"{s} L={L}: {c.line()}" for s, L, c in checks))

    def test_b_discrete(self, report):
        gen = np.random.default_rng(5)
        worst = 0.0
        for _ in range(20):
            P = int(gen.integers(1, 4))
            S = random_structure(P, int(gen.integers(1, (1 << P))), gen)
            h = FourierFunction(P, {s: float(gen.uniform(-1, 1)) for s in S.sets})
            act = Activation.polynomial(list(gen.uniform(-1, 1, 6)))
            eta = float(gen.uniform(0.005, 0.05))
            worst = max(worst, discrete_oracle_error(h, act, eta, 4))
        report("5b", worst <= 1e-9, f"max identity gap {worst:.2e} on 20 structures, k1=4")

    def test_c_vanilla_closed_form(self, report):
        act = Activation.polynomial([1.0] * 9)
        checks = [vanilla_oracle_check([1.0, 1.0, 1.0], act, k) for k in (1, 2, 3)]
        report("5c", all(c.passed for c in checks), "; ".join(f"k={k}: {c.line()}" for k, c in enumerate(checks, 1)))


def test_criterion_6_lower_bounds(report):
    t0 = time.perf_counter()
    vals = polyk_bound(4, 2, 1, 1.0).value, staircase_bound(10, 4, 1.0).value
    worst = 0.0
    for d in range(2, 7):
        for k in range(1, d + 1):
            h = FourierFunction.from_sets(d, [(tuple(range(1, k + 1)), 1 / np.sqrt(2))])
            worst = max(worst, abs(gram_permuted_class(h, d, degree=k).row_average() - polyk_row_average(d, k, 1)))
        for P in range(1, min(d, 4) + 1):
            h = staircase(P, 1 / np.sqrt(P))
            for ell in range(1, P + 1):
                G = gram_permuted_class(h, d, min_degree=ell)
                worst = max(worst, abs(G.row_average() - staircase_row_average(d, P, ell)))
    gen = np.random.default_rng(6)
    violations = 0
    for _ in range(100):
        M, n = int(gen.integers(2, 12)), 64
        F = gen.choice([-1.0, 1.0], size=(M, n))
        r = int(gen.integers(1, n))
        eps, bound = subspace_trial(F, r, gen)
        violations += r < bound - 1e-9
    dt = time.perf_counter() - t0
    ok = vals == (6.0, 22.5) and worst <= 1e-12 and violations == 0 and dt < 60
    report(6, ok, f"bounds {vals}, max row-average gap {worst:.1e}, {violations} subspace violations, {dt:.1f}s")


def test_criterion_7_probabilistic_lemmas(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(7)
    bad = 0
    for i in range(50):
        v = gen.normal(size=int(gen.integers(1, 200)))
        bad += not berry_esseen_w1(v, 100_000, RngSpec(2000 + i)).holds
    worst = 0.0
    for _ in range(100):
        m, D = int(gen.integers(1, 3)), int(gen.integers(1, 5))
        res = legendre_anticoncentration(gen.normal(size=(D + 1,) * m), D, m)
        worst = max(worst, abs(res.second_moment - res.quadrature_second_moment))
    dt = time.perf_counter() - t0
    ok = bad == 0 and worst <= 1e-9 and dt < 60
    report(7, ok, f"{bad} Berry-Esseen violations in 50 vectors, Parseval gap {worst:.1e}, {dt:.1f}s")


def test_criterion_8_symmetric_targets(report):
    t0 = time.perf_counter()
    out, ok = [], True
    for name, plateau in (("appA-h3", True), ("appA-h4", True), ("appA-h4tilde", False)):
        p = PRESETS[name]
        h = from_string(p.target)
        syms = detect_symmetries(h) if p.options.get("symmetry") == "project" else []
        tr, _ = dfpde_integrate(h, p.hp, Activation.shifted_sigmoid(1.0), delta=p.delta, symmetries=syms)
        final = tr.R[-1]
        if plateau:
            defect = tr.metadata.get("symmetry_defect", np.inf) if syms else np.inf
            ok &= bool(syms) and defect <= 1e-9 and final > 0.2
            out.append(f"{name}: {len(syms)} symmetries, defect {defect:.1e}, final risk {final:.3f}")
        else:
            ok &= final < 0.05
            out.append(f"{name}: final risk {final:.2e}")
    dt = time.perf_counter() - t0
    report(8, ok and dt < 120, "; ".join(out) + f", {dt:.0f}s")


def test_criterion_9_numerical_hygiene(report):
    ctx = Context("full", Activation.shifted_sigmoid(0.5), np.random.default_rng(9))
    results = [(name, *fn(ctx)) for name, fn in
               (("drift", drift_potential_gradient), ("halving", euler_halving), ("rerun", determinism))]
    report(9, all(ok for _, ok, _ in results), "; ".join(f"{n}: {d}" for n, _, d in results))
