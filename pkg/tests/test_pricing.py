"""Pricing checks: every price is re-derived by explicit path enumeration.

The central property — prices computed through test powers equal discounted
expectations — is exercised across all payoff constructors, random markets,
and both complete and incomplete solution sets.
"""

import itertools
import math

import numpy as np
import pytest

from lecam import (
    BinaryPriors,
    InvalidParams,
    LatticeMarket,
    NotACall,
    PathDependenceUnsupported,
    PathState,
    bayes_risk,
    build_crr,
    dynamic_price,
    enumerate_paths,
    np_decomposition,
    payoff_barrier_up_out,
    payoff_digital,
    payoff_european_call,
    payoff_european_put,
    payoff_from_json,
    payoff_straddle,
    payoff_strangle,
    payoff_to_json,
    price_bounds,
    price_direct,
    price_via_tests,
    solve_martingale_measures,
)
from lecam import Test as RTest
from lecam.lattice import path_prices, path_probabilities

from test_lattice import brute_paths, brute_prob, random_market

RNG_SEED = 42


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def terminal_payoff_fn(kind, K, K2=None, B=None):
    if kind == "call":
        return lambda s: max(s - K, 0.0)
    if kind == "put":
        return lambda s: max(K - s, 0.0)
    if kind == "digital":
        return lambda s: 1.0 if s > K else 0.0
    if kind == "straddle":
        return lambda s: max(s - K, 0.0) + max(K - s, 0.0)
    if kind == "strangle":
        return lambda s: max(K - s, 0.0) + max(s - K2, 0.0)
    raise ValueError(kind)


def build_payoff(kind, K, K2=None, B=None):
    if kind == "call":
        return payoff_european_call(K)
    if kind == "put":
        return payoff_european_put(K)
    if kind == "digital":
        return payoff_digital(K)
    if kind == "straddle":
        return payoff_straddle(K)
    if kind == "strangle":
        return payoff_strangle(K, K2)
    raise ValueError(kind)


def brute_price(m, qs, payoff_fn, barrier=None):
    """disc * E_Q[H], path by path, in plain python."""
    disc = 1.0
    for r in m.bond_rates:
        disc /= 1.0 + r
    total = 0.0
    for w in brute_paths(m):
        spot = m.s0
        alive = spot < barrier if barrier is not None else True
        for j, i in enumerate(w):
            spot *= m.returns[j][i][0] * (1.0 + m.bond_rates[j])
            if barrier is not None and spot >= barrier:
                alive = False
        h = payoff_fn(spot) if alive else 0.0
        total += brute_prob(m, qs, w) * h
    return disc * total


PAYOFF_KINDS = ("call", "put", "digital", "straddle", "strangle")


def random_payoff(rng, s0):
    kind = PAYOFF_KINDS[int(rng.integers(0, len(PAYOFF_KINDS)))]
    K = float(s0 * rng.uniform(0.4, 1.8))
    K2 = float(K * rng.uniform(1.0, 1.6))
    return kind, K, K2, build_payoff(kind, K, K2), terminal_payoff_fn(kind, K, K2)


# ---------------------------------------------------------------------------
# worked one- and two-period examples
# ---------------------------------------------------------------------------

class TestWorkedExamples:
    def setup_method(self):
        self.m1 = build_crr(2.0, 0.5, 1.0, 0.5, 1, 4.0)
        self.q1 = solve_martingale_measures(self.m1).designated()
        self.m2 = build_crr(2.0, 0.5, 1.0, 0.5, 2, 4.0)
        self.q2 = solve_martingale_measures(self.m2).designated()

    def test_one_period_call(self):
        p = price_direct(self.m1, self.q1, payoff_european_call(5.0))
        assert abs(p - 1.0) <= 1e-15
        rep = price_via_tests(self.m1, self.q1, payoff_european_call(5.0))
        assert abs(rep.price - 1.0) <= 1e-15
        assert rep.terms[0].power_alt == pytest.approx(2 / 3, abs=1e-15)
        assert rep.terms[0].power_base == pytest.approx(1 / 3, abs=1e-15)

    def test_one_period_digital_and_put(self):
        assert price_direct(self.m1, self.q1, payoff_digital(5.0)) == pytest.approx(
            1 / 3, abs=1e-15
        )
        assert price_direct(self.m1, self.q1, payoff_european_put(5.0)) == pytest.approx(
            2.0, abs=1e-15
        )

    def test_two_period_call_and_dynamics(self):
        call = payoff_european_call(5.0)
        assert price_direct(self.m2, self.q2, call) == pytest.approx(11 / 9, abs=1e-15)
        up = dynamic_price(self.m2, self.q2, call, PathState(1, (0,)))
        down = dynamic_price(self.m2, self.q2, call, PathState(1, (1,)))
        assert up == pytest.approx(11 / 3, abs=1e-14)
        assert down == 0.0

    def test_np_decomposition_fixture(self):
        dec = np_decomposition(self.m1, self.q1, payoff_european_call(5.0))
        assert dec.cutoff == pytest.approx(1.25, abs=1e-15)
        assert dec.priors.lambda0 == pytest.approx(5 / 9, abs=1e-15)
        assert dec.priors.lambda1 == pytest.approx(4 / 9, abs=1e-15)
        assert abs(dec.risk - 1 / 3) <= 1e-12
        assert dec.price == pytest.approx(1.0, abs=1e-15)

    def test_zero_strike_call_prices_the_stock(self):
        p = price_direct(self.m1, self.q1, payoff_european_call(0.0))
        assert p == pytest.approx(4.0, abs=1e-14)
        dec = np_decomposition(self.m1, self.q1, payoff_european_call(0.0))
        assert dec.cutoff == 0.0
        assert dec.priors.lambda0 == 0.0
        assert dec.risk == pytest.approx(0.0, abs=1e-14)
        assert dec.price == pytest.approx(4.0, abs=1e-14)


# ---------------------------------------------------------------------------
# the pricing theorem, randomized
# ---------------------------------------------------------------------------

class TestPricingTheorem:
    def test_powers_route_equals_direct_route(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(120):
            m = random_market(rng, max_steps=4)
            qs = solve_martingale_measures(m).designated()
            kind, K, K2, payoff, fn = random_payoff(rng, m.s0)
            direct = price_direct(m, qs, payoff)
            report = price_via_tests(m, qs, payoff)
            assert abs(direct - report.price) <= 1e-12
            assert abs(direct - brute_price(m, qs, fn)) <= 1e-12

    def test_barrier_payoff_agrees_on_both_routes(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(40):
            m = random_market(rng, max_steps=4)
            qs = solve_martingale_measures(m).designated()
            K = float(m.s0 * rng.uniform(0.5, 1.5))
            B = float(m.s0 * rng.uniform(1.2, 4.0))
            payoff = payoff_barrier_up_out(K, B)
            direct = price_direct(m, qs, payoff)
            report = price_via_tests(m, qs, payoff)
            oracle = brute_price(m, qs, lambda s: max(s - K, 0.0), barrier=B)
            assert abs(direct - report.price) <= 1e-12
            assert abs(direct - oracle) <= 1e-12

    def test_infinite_barrier_is_a_plain_call(self):
        m = build_crr(2.0, 0.5, 1.0, 0.5, 3, 4.0)
        qs = solve_martingale_measures(m).designated()
        a = price_direct(m, qs, payoff_barrier_up_out(5.0, math.inf))
        b = price_direct(m, qs, payoff_european_call(5.0))
        assert abs(a - b) <= 1e-15

    def test_put_call_parity(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(80):
            m = random_market(rng, max_steps=4)
            qs = solve_martingale_measures(m).designated()
            K = float(m.s0 * rng.uniform(0.4, 1.8))
            call = price_direct(m, qs, payoff_european_call(K))
            put = price_direct(m, qs, payoff_european_put(K))
            assert abs((call - put) - (m.s0 - K * m.discount)) <= 1e-12

    def test_straddle_is_call_plus_put(self):
        rng = np.random.default_rng(RNG_SEED)
        m = random_market(rng, max_steps=3)
        qs = solve_martingale_measures(m).designated()
        K = m.s0
        lhs = price_direct(m, qs, payoff_straddle(K))
        rhs = price_direct(m, qs, payoff_european_call(K)) + price_direct(
            m, qs, payoff_european_put(K)
        )
        assert abs(lhs - rhs) <= 1e-12

    def test_report_price_matches_power_combination(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(30):
            m = random_market(rng, max_steps=3)
            qs = solve_martingale_measures(m).designated()
            _, _, _, payoff, _ = random_payoff(rng, m.s0)
            rep = price_via_tests(m, qs, payoff)
            recombined = sum(
                t.coeff * rep.s0 * t.power_alt - rep.discount * t.strike * t.power_base
                for t in rep.terms
            )
            assert abs(rep.price - recombined) <= 1e-12


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

class TestDynamicPrice:
    def oracle(self, m, qs, payoff_fn, state):
        """E_Q[H | node] discounted back only over the remaining steps."""
        num = den = 0.0
        for w in brute_paths(m):
            if tuple(w[: state.t]) != state.moves:
                continue
            spot = m.s0
            for j, i in enumerate(w):
                spot *= m.returns[j][i][0] * (1.0 + m.bond_rates[j])
            pw = brute_prob(m, qs, w)
            num += pw * payoff_fn(spot)
            den += pw
        tail_bond = 1.0
        for r in m.bond_rates[state.t:]:
            tail_bond *= 1.0 + r
        return num / den / tail_bond

    def test_matches_conditional_expectation(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(40):
            m = random_market(rng, max_steps=4)
            if m.steps < 2:
                continue
            qs = solve_martingale_measures(m).designated()
            kind, K, K2, payoff, fn = random_payoff(rng, m.s0)
            t = int(rng.integers(1, m.steps))
            moves = tuple(
                int(rng.integers(0, len(m.returns[j]))) for j in range(t)
            )
            state = PathState(t, moves)
            got = dynamic_price(m, qs, payoff, state)
            assert abs(got - self.oracle(m, qs, fn, state)) <= 1e-12

    def test_terminal_node_is_intrinsic(self):
        m = build_crr(2.0, 0.5, 1.0, 0.5, 2, 4.0)
        qs = solve_martingale_measures(m).designated()
        call = payoff_european_call(5.0)
        assert dynamic_price(m, qs, call, PathState(2, (0, 0))) == pytest.approx(11.0)
        assert dynamic_price(m, qs, call, PathState(2, (1, 1))) == 0.0

    def test_root_state_recovers_the_price(self):
        rng = np.random.default_rng(RNG_SEED)
        m = random_market(rng, max_steps=3)
        qs = solve_martingale_measures(m).designated()
        call = payoff_european_call(m.s0)
        assert dynamic_price(m, qs, call, PathState(0, ())) == pytest.approx(
            price_direct(m, qs, call), abs=1e-13
        )

    def test_path_dependent_rejected(self):
        m = build_crr(2.0, 0.5, 1.0, 0.5, 2, 4.0)
        qs = solve_martingale_measures(m).designated()
        with pytest.raises(PathDependenceUnsupported):
            dynamic_price(m, qs, payoff_barrier_up_out(5.0, 10.0), PathState(1, (0,)))

    def test_tower_property(self):
        """Price at t is the q-average of prices at t+1, one bond step back."""
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(20):
            m = random_market(rng, max_steps=3)
            if m.steps < 2:
                continue
            qs = solve_martingale_measures(m).designated()
            _, _, _, payoff, _ = random_payoff(rng, m.s0)
            root = dynamic_price(m, qs, payoff, PathState(0, ()))
            step = (1.0 + m.bond_rates[0])
            avg = sum(
                float(qs[0][i]) * dynamic_price(m, qs, payoff, PathState(1, (i,)))
                for i in range(len(m.returns[0]))
            )
            assert abs(root - avg / step) <= 1e-12


# ---------------------------------------------------------------------------
# Neyman-Pearson decomposition
# ---------------------------------------------------------------------------

class TestNpDecomposition:
    def test_risk_identity_random_markets(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(60):
            m = random_market(rng, max_steps=3)
            qs = solve_martingale_measures(m).designated()
            K = float(m.s0 * rng.uniform(0.3, 2.0))
            dec = np_decomposition(m, qs, payoff_european_call(K))
            closed = (m.s0 - dec.price) / (m.s0 + K * m.discount)
            assert abs(dec.risk - closed) <= 1e-12
            direct = price_direct(m, qs, payoff_european_call(K))
            assert abs(dec.price - direct) <= 1e-12

    def test_risk_is_minimal_exhaustively(self):
        from lecam import induced_experiment

        rng = np.random.default_rng(RNG_SEED)
        checked = 0
        while checked < 25:
            m = random_market(rng, max_steps=2, max_support=3)
            sizes = 1
            for j in range(m.steps):
                sizes *= len(m.returns[j])
            if sizes > 12:
                continue
            qs = solve_martingale_measures(m).designated()
            K = float(m.s0 * rng.uniform(0.3, 2.0))
            dec = np_decomposition(m, qs, payoff_european_call(K))
            exp = induced_experiment(m, qs)
            for bits in itertools.product((0.0, 1.0), repeat=exp.size):
                t = RTest.from_vector(exp, bits)
                assert dec.risk <= bayes_risk(exp, "Q", "Q1", t, dec.priors) + 1e-12
            checked += 1

    def test_non_call_payoffs_rejected(self):
        m = build_crr(2.0, 0.5, 1.0, 0.5, 1, 4.0)
        qs = solve_martingale_measures(m).designated()
        for payoff in (payoff_european_put(5.0), payoff_digital(5.0),
                       payoff_straddle(5.0)):
            with pytest.raises(NotACall):
                np_decomposition(m, qs, payoff)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

class TestPriceBounds:
    def oracle_bounds(self, m, payoff_fn):
        sols = solve_martingale_measures(m)
        lo, hi = math.inf, -math.inf
        disc = m.discount
        for combo in itertools.product(*[s.vertices for s in sols.per_step]):
            qs = [np.array(v) for v in combo]
            total = 0.0
            for w in brute_paths(m):
                spot = m.s0
                for j, i in enumerate(w):
                    spot *= m.returns[j][i][0] * (1.0 + m.bond_rates[j])
                total += brute_prob(m, qs, w) * payoff_fn(spot)
            p = disc * total
            lo, hi = min(lo, p), max(hi, p)
        return lo, hi

    def test_trinomial_fixture(self):
        tri = LatticeMarket(
            1, 1.0, 1.0, (((1.5, 1 / 3), (1.0, 1 / 3), (0.5, 1 / 3)),), (0.0,)
        )
        lo, hi = price_bounds(tri, payoff_european_call(1.0))
        assert lo == 0.0
        assert hi == pytest.approx(0.25, abs=1e-15)

    def test_matches_vertex_enumeration_oracle(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(30):
            m = random_market(rng, max_steps=3)
            kind, K, K2, payoff, fn = random_payoff(rng, m.s0)
            lo, hi = price_bounds(m, payoff)
            olo, ohi = self.oracle_bounds(m, fn)
            assert abs(lo - olo) <= 1e-12
            assert abs(hi - ohi) <= 1e-12
            assert lo <= hi + 1e-15

    def test_complete_market_pins_the_price(self):
        m = build_crr(2.0, 0.5, 1.0, 0.5, 3, 4.0)
        qs = solve_martingale_measures(m).designated()
        call = payoff_european_call(5.0)
        lo, hi = price_bounds(m, call)
        p = price_direct(m, qs, call)
        assert lo == pytest.approx(p, abs=1e-13)
        assert hi == pytest.approx(p, abs=1e-13)

    def test_designated_price_sits_inside(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(20):
            m = random_market(rng, max_steps=3)
            qs = solve_martingale_measures(m).designated()
            _, _, _, payoff, _ = random_payoff(rng, m.s0)
            lo, hi = price_bounds(m, payoff)
            p = price_direct(m, qs, payoff)
            assert lo - 1e-12 <= p <= hi + 1e-12

    def test_path_dependent_rejected(self):
        m = build_crr(2.0, 0.5, 1.0, 0.5, 2, 4.0)
        with pytest.raises(PathDependenceUnsupported):
            price_bounds(m, payoff_barrier_up_out(5.0, 10.0))


# ---------------------------------------------------------------------------
# payoff plumbing
# ---------------------------------------------------------------------------

class TestPayoffs:
    def test_indicators_are_strict_at_the_strike(self):
        K = 5.0
        call = payoff_european_call(K).terms[0]
        put = payoff_european_put(K).terms[0]
        assert call.terminal(K) == 0.0
        assert call.terminal(K + 1e-9) == 1.0
        assert put.terminal(K) == 0.0
        assert put.terminal(K - 1e-9) == 1.0

    def test_strangle_orders_strikes(self):
        with pytest.raises(InvalidParams):
            payoff_strangle(6.0, 5.0)

    def test_negative_strike_rejected(self):
        with pytest.raises(InvalidParams):
            payoff_european_call(-1.0)

    def test_json_round_trip(self):
        rng = np.random.default_rng(RNG_SEED)
        m = random_market(rng, max_steps=3)
        qs = solve_martingale_measures(m).designated()
        for doc in (
            {"type": "call", "K": 5.0},
            {"type": "put", "K": 5.0},
            {"type": "digital", "K": 5.0},
            {"type": "straddle", "K": 5.0},
            {"type": "strangle", "K1": 4.0, "K2": 6.0},
            {"type": "barrier_up_out", "K": 5.0, "B": 20.0},
            {"type": "sum", "terms": [{"type": "call", "K": 4.0},
                                      {"type": "put", "K": 6.0}]},
        ):
            payoff = payoff_from_json(doc)
            back = payoff_from_json(payoff_to_json(payoff))
            assert abs(
                price_direct(m, qs, payoff) - price_direct(m, qs, back)
            ) <= 1e-15

    def test_malformed_payoff_raises(self):
        with pytest.raises(InvalidParams):
            payoff_from_json({"type": "call"})
        with pytest.raises(InvalidParams):
            payoff_from_json({"K": 5.0})
        with pytest.raises(InvalidParams):
            payoff_from_json({"type": "nope", "K": 5.0})
