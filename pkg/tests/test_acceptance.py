"""Acceptance gate: eleven release criteria, one verdict line each.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines inline; each
test prints exactly one ``criterion NN [PASS|FAIL] ...`` line whether it
succeeds or not.  Criteria with runtime budgets enforce them with a wall
clock.  Tolerances are part of the release contract — do not relax them.
"""

import itertools
import math
import time

import numpy as np

from lecam import (
    BSModel,
    FiniteExperiment,
    Partition,
    bayes_risk,
    bs_call_price,
    build_crr,
    complementary,
    convergence_study,
    crr_tangent,
    induced_experiment,
    is_complete,
    likelihood_ratio,
    limit_price_terminal,
    limit_price_via_np,
    np_decomposition,
    payoff_barrier_up_out,
    payoff_european_call,
    payoff_european_put,
    price_bounds,
    price_direct,
    price_via_tests,
    restrict,
    schedule_family,
    solve_martingale_measures,
    symmetric_trinomial_tangent,
    third_lemma_check,
    verify_mm_criterion,
    verify_representation,
    LatticeMarket,
)
from lecam import Test as RTest
from lecam.lattice import enumerate_paths

from test_lattice import random_market
from test_pricing import build_payoff, random_payoff
from test_blackscholes import call_price_oracle, random_model


class _Verdict:
    """Context manager printing one pass/fail line for a criterion."""

    def __init__(self, num, desc):
        self.num = num
        self.desc = desc
        self.extra = ""

    def note(self, text):
        self.extra = f" ({text})"

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        tag = "PASS" if exc_type is None else "FAIL"
        print(f"criterion {self.num:2d} [{tag}] {self.desc}{self.extra}")
        return False


def test_criterion_01_representation_randomized():
    with _Verdict(1, "density-process representation on 200 random lattices"
                     " + 200 perturbations") as v:
        start = time.perf_counter()
        rng = np.random.default_rng(42)
        for _ in range(200):
            m = random_market(rng, max_steps=4, max_support=3)
            qs = solve_martingale_measures(m).designated()
            assert verify_representation(m, qs, atol=1e-12)
        rejected = 0
        while rejected < 200:
            m = random_market(rng, max_steps=4, max_support=3)
            qs = solve_martingale_measures(m).designated()
            bad = [x.copy() for x in qs]
            j = int(rng.integers(0, m.steps))
            w = rng.random(len(bad[j])) + 0.1
            w /= w.sum()
            cand = 0.5 * bad[j] + 0.5 * w
            if abs(float(cand @ m.step_values(j)) - 1.0) < 1e-6:
                continue   # tilt accidentally landed near the martingale set
            bad[j] = cand
            assert not verify_representation(m, bad, atol=1e-12)
            rejected += 1
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0
        v.note(f"{elapsed:.2f}s")


def test_criterion_02_crr_measure_closed_form():
    with _Verdict(2, "CRR martingale measure tau=1/3, kappa=2/3 to 1e-15") as v:
        m = build_crr(u=2.0, d=0.5, r=1.0, p=0.5, steps=1, s0=4.0)
        sols = solve_martingale_measures(m)
        assert sols.complete
        (tau, one_minus_tau) = sols.per_step[0].vertices[0]
        u_tilde, d_tilde = m.step_values(0)
        tau_formula = (1.0 - d_tilde) / (u_tilde - d_tilde)
        kappa = tau * u_tilde
        assert abs(tau - 1.0 / 3.0) <= 1e-15
        assert abs(tau - tau_formula) <= 1e-15
        assert abs(one_minus_tau - 2.0 / 3.0) <= 1e-15
        assert abs(kappa - 2.0 / 3.0) <= 1e-15
        v.note(f"tau={tau!r}")


def test_criterion_03_pricing_theorem_500_pairs():
    with _Verdict(3, "test-power price = direct price on 500 random pairs"
                     " + put-call parity, 1e-12") as v:
        rng = np.random.default_rng(42)
        kinds = ("call", "put", "digital", "straddle", "strangle", "barrier")
        worst = 0.0
        for i in range(500):
            m = random_market(rng, max_steps=3, max_support=3)
            qs = solve_martingale_measures(m).designated()
            kind = kinds[i % len(kinds)]
            if kind == "barrier":
                K = float(m.s0 * rng.uniform(0.4, 1.5))
                B = float(m.s0 * rng.uniform(1.3, 4.0))
                payoff = payoff_barrier_up_out(K, B)
            else:
                K = float(m.s0 * rng.uniform(0.4, 1.8))
                K2 = float(K * rng.uniform(1.0, 1.6))
                payoff = build_payoff(kind, K, K2)
            direct = price_direct(m, qs, payoff)
            via = price_via_tests(m, qs, payoff).price
            worst = max(worst, abs(direct - via))
            assert abs(direct - via) <= 1e-12
            # parity on the same market and strike
            call = price_direct(m, qs, payoff_european_call(K))
            put = price_direct(m, qs, payoff_european_put(K))
            assert abs((call - put) - (m.s0 - K * m.discount)) <= 1e-12
        v.note(f"max |direct - via_tests| = {worst:.2e}")


def test_criterion_04_bayes_risk_identity_and_optimality():
    with _Verdict(4, "Bayes risk identity and minimality over deterministic"
                     " tests, 100 markets") as v:
        rng = np.random.default_rng(42)
        for _ in range(100):
            m = random_market(rng, max_steps=1, max_support=3)
            qs = solve_martingale_measures(m).designated()
            K = float(m.s0 * rng.uniform(0.3, 2.0))
            dec = np_decomposition(m, qs, payoff_european_call(K))
            closed = (m.s0 - dec.price) / (m.s0 + K * m.discount)
            assert abs(dec.risk - closed) <= 1e-12
            exp = induced_experiment(m, qs)
            assert exp.size <= 12
            for bits in itertools.product((0.0, 1.0), repeat=exp.size):
                t = RTest.from_vector(exp, bits)
                assert dec.risk <= bayes_risk(exp, "Q", "Q1", t, dec.priors) + 1e-12


def test_criterion_05_factorization_and_zero_covariance():
    with _Verdict(5, "restricted x complementary factorization and zero"
                     " covariance, 200 cases, 1e-12"):
        rng = np.random.default_rng(42)
        for trial in range(200):
            n = int(rng.integers(3, 9))
            measures = {}
            base = rng.random(n) + 0.05
            base /= base.sum()
            measures["Q"] = base
            for name in ("Q1", "P"):
                vec = rng.random(n)
                if n > 2 and rng.random() < 0.5:
                    vec[rng.integers(0, n)] = 0.0
                vec /= vec.sum()
                measures[name] = vec
            exp = FiniteExperiment(tuple(range(n)), measures, "Q")
            k = int(rng.integers(2, n + 1))
            part = Partition.by_key(exp.outcomes, lambda w: w % k)
            r = restrict(exp, part)
            comp = complementary(exp, part)
            block_ix = {w: i for i, b in enumerate(part.blocks) for w in b}
            for name in ("Q1", "P"):
                full = likelihood_ratio(exp, name, "Q")
                coarse = likelihood_ratio(r, name, "Q")
                fine = likelihood_ratio(comp, name, "Q")
                coarse_at = np.array([coarse[block_ix[w]] for w in exp.outcomes])
                assert np.all(np.abs(full - coarse_at * fine) <= 1e-12)
                cov = (base * coarse_at * fine).sum() \
                    - (base * coarse_at).sum() * (base * fine).sum()
                assert abs(cov) <= 1e-12


def test_criterion_06_criterion_equivalence_200_directions():
    with _Verdict(6, "conditional-expectation condition <=> martingale"
                     " property, 200 positive g") as v:
        rng = np.random.default_rng(42)
        held = failed = 0
        for i in range(200):
            m = random_market(rng, max_steps=3, max_support=3)
            sols = solve_martingale_measures(m)
            qs = sols.designated()
            paths = enumerate_paths(m)
            if i % 2 == 0:
                g = rng.random(paths.shape[0]) + 0.2
            else:
                # density of another martingale measure: must satisfy both sides
                g = np.ones(paths.shape[0])
                for j, step in enumerate(sols.per_step):
                    if step.unique:
                        continue
                    w = rng.random(len(step.vertices)) + 0.2
                    w /= w.sum()
                    other = np.array(step.vertices).T @ w
                    g *= (other / qs[j])[paths[:, j]]
            report = verify_mm_criterion(m, qs, g)
            assert report.equivalent        # no counterexamples either way
            if report.condition_holds:
                held += 1
            else:
                failed += 1
        assert held > 0 and failed > 0      # both directions exercised
        v.note(f"{held} hold / {failed} fail, sides always agree")


def test_criterion_07_completeness_and_bounds():
    with _Verdict(7, "binomial complete; trinomial bounds [0, 0.25] exact") as v:
        binomial = build_crr(u=2.0, d=0.5, r=1.0, p=0.5, steps=2, s0=4.0)
        assert is_complete(binomial)
        trinomial = LatticeMarket(
            steps=1, horizon=1.0, s0=1.0,
            returns=(((1.5, 1 / 3), (1.0, 1 / 3), (0.5, 1 / 3)),),
            bond_rates=(0.0,),
        )
        assert not is_complete(trinomial)
        lo, hi = price_bounds(trinomial, payoff_european_call(1.0))
        # vertex-evaluation oracle: measures (0,1,0) and (1/2,0,1/2)
        vertices = [np.array([0.0, 1.0, 0.0]), np.array([0.5, 0.0, 0.5])]
        payoffs = np.array([0.5, 0.0, 0.0])
        oracle = [float(q @ payoffs) for q in vertices]
        assert lo == min(oracle) == 0.0
        assert hi == max(oracle) == 0.25
        v.note(f"bounds=({lo!r}, {hi!r})")


def test_criterion_08_black_scholes_vs_quadrature():
    with _Verdict(8, "closed form vs 2001-node quadrature (1e-9, 50 draws);"
                     " np route = closed form (1e-10, 1000 draws)") as v:
        rng = np.random.default_rng(42)
        worst_quad = 0.0
        for _ in range(50):
            m = random_model(rng)
            strike = float(m.s0 * rng.uniform(0.7, 1.4))
            got = bs_call_price(m, strike)
            want = call_price_oracle(m.s0, strike, m.total_variance(),
                                     m.total_rate())
            worst_quad = max(worst_quad, abs(got - want))
            assert abs(got - want) <= 1e-9
        worst_np = 0.0
        for _ in range(1000):
            m = random_model(rng)
            strike = float(m.s0 * rng.uniform(0.5, 2.0))
            gap = abs(limit_price_via_np(m, strike).price - bs_call_price(m, strike))
            worst_np = max(worst_np, gap)
            assert gap <= 1e-10
        v.note(f"quad={worst_quad:.2e}, np={worst_np:.2e}")


def test_criterion_09_desk_scale_convergence():
    with _Verdict(9, "N=4096 CRR price within 0.02 of the limit (r=0),"
                     " 0.03 (r=5%), under 30s") as v:
        start = time.perf_counter()
        path = crr_tangent(1.0, 1.0)
        payoff = payoff_european_call(100.0)

        flat = BSModel(100.0, 1.0, 0.2, 0.0)
        assert abs(limit_price_terminal(flat, payoff) - 7.9656) < 1e-4
        (row,) = convergence_study(path, schedule_family(flat), payoff,
                                   flat, [4096])
        assert row.abs_gap < 0.02

        carried = BSModel(100.0, 1.0, 0.2, 0.05)
        (row_r,) = convergence_study(path, schedule_family(carried), payoff,
                                     carried, [4096])
        assert row_r.abs_gap < 0.03
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0
        v.note(f"gaps {row.abs_gap:.2e} / {row_r.abs_gap:.2e}, {elapsed:.1f}s")


def test_criterion_10_tangent_shape_invariance():
    with _Verdict(10, "trinomial vs binomial tangent prices within 0.05"
                      " at N=4096") as v:
        bs = BSModel(100.0, 1.0, 0.2, 0.0)
        payoff = payoff_european_call(100.0)
        (bin_row,) = convergence_study(crr_tangent(1.0, 1.0),
                                       schedule_family(bs), payoff, bs, [4096])
        tri = symmetric_trinomial_tangent((0.25, 0.5, 0.25))
        (tri_row,) = convergence_study(tri, schedule_family(bs), payoff,
                                       bs, [4096])
        gap = abs(tri_row.p_n - bin_row.p_n)
        assert gap < 0.05
        v.note(f"|p_tri - p_bin| = {gap:.2e}")


def test_criterion_11_lan_moments_at_4096():
    with _Verdict(11, "exact log-price moments at N=4096 vs Gaussian limit"
                      " targets; Noether max-term < 0.01") as v:
        path = crr_tangent(1.0, 1.0)
        worst_mean = worst_var = noether = 0.0
        for rate in (0.0, 0.05):
            bs = BSModel(100.0, 1.0, 0.2, rate)
            schedule = schedule_family(bs)(4096)
            report = third_lemma_check(path, schedule)
            worst_mean = max(worst_mean, report.logs_mean_gap)
            worst_var = max(worst_var, report.logs_var_gap)
            noether = max(noether,
                          max(schedule.step_vol(j) for j in range(schedule.N)))
            assert report.logs_mean_gap < 2e-3
            assert report.logs_var_gap < 1e-2
        assert noether < 0.01
        v.note(f"mean_gap={worst_mean:.2e}, var_gap={worst_var:.2e}, "
               f"noether_max={noether:.2e}")
