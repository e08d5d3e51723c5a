"""Payoffs written as tests and their prices on lattice markets.

Every payoff handled here is a finite sum of terms

    (coeff * S_T - strike) * phi(path),

where ``phi`` is a randomized test of the price path with values in
``[0, 1]``.  For such payoffs the arbitrage price splits into test powers:

    price = sum over terms of
            coeff * s0 * E_{Q1}(phi)  -  discount * strike * E_Q(phi),

with ``Q1`` the measure whose density process is the normalized discounted
price.  ``price_via_tests`` computes exactly that decomposition on the
induced path experiment and must agree with the direct discounted
expectation ``price_direct`` to within 1e-12.

Tests of terminal type are kept structural (piecewise constant in ``S_T``
with explicit cuts) so that limit models can integrate them in closed form;
path-dependent tests (barriers) are opaque callables on the price path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import limits
from .errors import (
    InvalidParams,
    NotACall,
    PathDependenceUnsupported,
    SizeLimit,
)
from .experiments import BinaryPriors, Test, bayes_risk, neyman_pearson
from .lattice import (
    LatticeMarket,
    PathState,
    as_step_measures,
    complementary_market,
    enumerate_paths,
    induced_experiment,
    path_prices,
    path_probabilities,
    require_martingale,
    solve_martingale_measures,
    terminal_law,
)

ATOL = 1e-12


# ---------------------------------------------------------------------------
# tests and payoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TerminalTest:
    """Piecewise-constant test of the terminal price.

    ``cuts`` are strictly increasing breakpoints; ``open_values[i]`` is the
    value on the open interval between cuts ``i-1`` and ``i`` and
    ``point_values[i]`` the value exactly at cut ``i``.  All values must lie
    in ``[0, 1]``.
    """

    cuts: tuple[float, ...]
    open_values: tuple[float, ...]
    point_values: tuple[float, ...]

    def __post_init__(self) -> None:
        cuts = tuple(float(c) for c in self.cuts)
        opens = tuple(float(v) for v in self.open_values)
        points = tuple(float(v) for v in self.point_values)
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "open_values", opens)
        object.__setattr__(self, "point_values", points)
        if len(opens) != len(cuts) + 1 or len(points) != len(cuts):
            raise InvalidParams("terminal test needs len(cuts)+1 interval values")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise InvalidParams("cuts must be strictly increasing")
        for v in opens + points:
            if not 0.0 <= v <= 1.0:
                raise InvalidParams(f"test value {v!r} outside [0, 1]")

    def __call__(self, s: float) -> float:
        i = int(np.searchsorted(self.cuts, s, side="left"))
        if i < len(self.cuts) and s == self.cuts[i]:
            return self.point_values[i]
        return self.open_values[i]

    def eval_many(self, s: np.ndarray) -> np.ndarray:
        cuts = np.array(self.cuts)
        idx = np.searchsorted(cuts, s, side="left")
        out = np.array(self.open_values)[idx]
        for i, c in enumerate(self.cuts):
            out = np.where(s == c, self.point_values[i], out)
        return out


@dataclass(frozen=True)
class PayoffTerm:
    """One term ``(coeff * S_T - strike) * test``.

    Exactly one of ``terminal`` (structural, terminal-value only) and
    ``path_test`` (callable on the whole undiscounted price path) is set.
    """

    coeff: float
    strike: float
    terminal: TerminalTest | None = None
    path_test: Callable[[np.ndarray], float] | None = None
    label: str = "term"

    def __post_init__(self) -> None:
        if (self.terminal is None) == (self.path_test is None):
            raise InvalidParams("term needs exactly one of terminal / path_test")

    @property
    def terminal_only(self) -> bool:
        return self.terminal is not None

    def test_values(self, prices: np.ndarray) -> np.ndarray:
        """Evaluate the test on an ``(P, N+1)`` price-path matrix."""
        if self.terminal is not None:
            return self.terminal.eval_many(prices[:, -1])
        out = np.array([float(self.path_test(row)) for row in prices])
        if np.any((out < 0.0) | (out > 1.0)):
            raise InvalidParams(f"path test of {self.label!r} left [0, 1]")
        return out


@dataclass(frozen=True)
class Payoff:
    """A finite sum of test-shaped terms."""

    terms: tuple[PayoffTerm, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise InvalidParams("payoff needs at least one term")

    @property
    def terminal_only(self) -> bool:
        return all(t.terminal_only for t in self.terms)


def _indicator_above(threshold: float) -> TerminalTest:
    return TerminalTest((threshold,), (0.0, 1.0), (0.0,))


def _indicator_below(threshold: float) -> TerminalTest:
    return TerminalTest((threshold,), (1.0, 0.0), (0.0,))


def payoff_european_call(strike: float) -> Payoff:
    """``(S_T - K)+`` as ``(S_T - K) * 1{S_T > K}``."""
    if strike < 0.0:
        raise InvalidParams(f"strike must be nonnegative, got {strike!r}")
    term = PayoffTerm(1.0, strike, terminal=_indicator_above(strike), label="call")
    return Payoff((term,))


def payoff_european_put(strike: float) -> Payoff:
    """``(K - S_T)+`` as ``(-S_T + K) * 1{S_T < K}``."""
    if strike < 0.0:
        raise InvalidParams(f"strike must be nonnegative, got {strike!r}")
    term = PayoffTerm(-1.0, -strike, terminal=_indicator_below(strike), label="put")
    return Payoff((term,))


def payoff_straddle(strike: float) -> Payoff:
    """Call plus put at the same strike."""
    return Payoff(payoff_european_call(strike).terms + payoff_european_put(strike).terms)


def payoff_strangle(low: float, high: float) -> Payoff:
    """Put at ``low`` plus call at ``high``; equal strikes give a straddle."""
    if low > high:
        raise InvalidParams(f"need low <= high, got {low!r} > {high!r}")
    return Payoff(payoff_european_put(low).terms + payoff_european_call(high).terms)


def payoff_digital(strike: float) -> Payoff:
    """Pays one unit when ``S_T > K``: coefficient zero, strike minus one."""
    if strike < 0.0:
        raise InvalidParams(f"strike must be nonnegative, got {strike!r}")
    term = PayoffTerm(0.0, -1.0, terminal=_indicator_above(strike), label="digital")
    return Payoff((term,))


def payoff_barrier_up_out(strike: float, barrier: float) -> Payoff:
    """Call knocked out when the price path ever reaches ``barrier``.

    The monitoring is strict (``max_t S_t < B``) over all grid times, so an
    infinite barrier reduces to the plain call.
    """
    if strike < 0.0:
        raise InvalidParams(f"strike must be nonnegative, got {strike!r}")
    if not barrier > 0.0:
        raise InvalidParams(f"barrier must be positive, got {barrier!r}")

    def test(prices: np.ndarray) -> float:
        if float(np.max(prices)) >= barrier:
            return 0.0
        return 1.0 if prices[-1] > strike else 0.0

    test.params = {"K": strike, "B": barrier}
    term = PayoffTerm(1.0, strike, path_test=test, label="barrier_up_out")
    return Payoff((term,))


def payoff_from_json(doc: Mapping) -> Payoff:
    """Build a payoff from a plain dict, e.g. ``{"type": "call", "K": 5.0}``."""
    try:
        return _payoff_from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParams(f"payoff spec malformed: {exc}") from exc


def _payoff_from_json(doc: Mapping) -> Payoff:
    kind = doc["type"]
    if kind == "call":
        return payoff_european_call(float(doc["K"]))
    if kind == "put":
        return payoff_european_put(float(doc["K"]))
    if kind == "straddle":
        return payoff_straddle(float(doc["K"]))
    if kind == "strangle":
        return payoff_strangle(float(doc["K1"]), float(doc["K2"]))
    if kind == "digital":
        return payoff_digital(float(doc["K"]))
    if kind == "barrier_up_out":
        barrier = doc.get("B", math.inf)
        barrier = math.inf if barrier in (None, "inf") else float(barrier)
        return payoff_barrier_up_out(float(doc["K"]), barrier)
    if kind == "sum":
        terms: tuple[PayoffTerm, ...] = ()
        for sub in doc["terms"]:
            terms = terms + _payoff_from_json(sub).terms
        return Payoff(terms)
    raise InvalidParams(f"unknown payoff type {kind!r}")


def payoff_to_json(payoff: Payoff) -> dict:
    """Serialize back to the constructor vocabulary of ``payoff_from_json``.

    Composite payoffs built from the stock constructors (straddles,
    strangles, sums) come back as a ``sum`` of their call/put/digital legs.
    """
    docs = []
    for t in payoff.terms:
        if t.label == "call":
            docs.append({"type": "call", "K": t.strike})
        elif t.label == "put":
            docs.append({"type": "put", "K": -t.strike})
        elif t.label == "digital":
            docs.append({"type": "digital", "K": t.terminal.cuts[0]})
        elif t.label == "barrier_up_out":
            params = getattr(t.path_test, "params", None)
            if params is None:
                raise InvalidParams("barrier term lacks its parameters")
            b = params["B"]
            docs.append({"type": "barrier_up_out", "K": params["K"],
                         "B": "inf" if math.isinf(b) else b})
        else:
            raise InvalidParams(f"cannot serialize payoff term {t.label!r}")
    if len(docs) == 1:
        return docs[0]
    return {"type": "sum", "terms": docs}


# ---------------------------------------------------------------------------
# price reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TermPowers:
    label: str
    coeff: float
    strike: float
    power_alt: float    # E_{Q1}(phi)
    power_base: float   # E_Q(phi)


@dataclass(frozen=True)
class PriceReport:
    """Price together with the test powers realizing it.

    Invariant: ``price`` equals
    ``sum(coeff * s0 * power_alt - discount * strike * power_base)``.
    """

    price: float
    discount: float
    s0: float
    terms: tuple[TermPowers, ...]

    def to_json(self) -> dict:
        return {
            "price": self.price,
            "discount": self.discount,
            "s0": self.s0,
            "terms": [
                {
                    "label": t.label,
                    "coeff": t.coeff,
                    "strike": t.strike,
                    "power_alt": t.power_alt,
                    "power_base": t.power_base,
                }
                for t in self.terms
            ],
        }

    @staticmethod
    def csv_header() -> str:
        return "price,discount,powers_alt,powers_base"

    def csv_row(self, fmt: Callable[[float], str] = repr) -> str:
        alts = ";".join(fmt(t.power_alt) for t in self.terms)
        bases = ";".join(fmt(t.power_base) for t in self.terms)
        return f"{fmt(self.price)},{fmt(self.discount)},{alts},{bases}"


# ---------------------------------------------------------------------------
# pricing
# ---------------------------------------------------------------------------

def _terminal_value(m: LatticeMarket, payoff: Payoff,
                    step_measures: Sequence[np.ndarray],
                    max_states: int | None) -> float:
    values, probs = terminal_law(m, step_measures, max_states)
    s_T = m.s0 * m.bond_factor(m.steps) * values
    total = np.zeros_like(values)
    for term in payoff.terms:
        phi = term.terminal.eval_many(s_T)
        total += (term.coeff * s_T - term.strike) * phi
    return float(m.discount * (probs @ total))


def price_direct(m: LatticeMarket, q, payoff: Payoff,
                 max_paths: int | None = None,
                 max_states: int | None = None) -> float:
    """Exact discounted expectation of the payoff under ``q``.

    Terminal-value payoffs are priced on the grouped terminal law (so large
    recombining markets stay cheap); path-dependent payoffs enumerate paths
    up to the configured cap.
    """
    step_measures = as_step_measures(m, q)
    require_martingale(m, step_measures)
    if payoff.terminal_only:
        return _terminal_value(m, payoff, step_measures, max_states)
    paths = enumerate_paths(m, max_paths)
    prices = path_prices(m, paths)
    probs = path_probabilities(m, paths, step_measures)
    total = np.zeros(paths.shape[0])
    for term in payoff.terms:
        phi = term.test_values(prices)
        total += (term.coeff * prices[:, -1] - term.strike) * phi
    return float(m.discount * (probs @ total))


def price_via_tests(m: LatticeMarket, q, payoff: Payoff,
                    max_outcomes: int | None = None) -> PriceReport:
    """Price through the experiment: powers of each term's test.

    Evaluates every test on the induced path experiment and combines the
    powers ``E_{Q1}(phi)``, ``E_Q(phi)`` term by term.  Agrees with
    :func:`price_direct` to within 1e-12.
    """
    step_measures = as_step_measures(m, q)
    exp = induced_experiment(m, step_measures, max_outcomes)
    paths = np.array(exp.outcomes, dtype=np.int64).reshape(exp.size, m.steps)
    prices = path_prices(m, paths)
    base = exp.measure("Q")
    alt = exp.measure("Q1")
    disc = m.discount
    price = 0.0
    terms = []
    for term in payoff.terms:
        phi = term.test_values(prices)
        p_alt = float(phi @ alt)
        p_base = float(phi @ base)
        price += term.coeff * m.s0 * p_alt - disc * term.strike * p_base
        terms.append(TermPowers(term.label, term.coeff, term.strike, p_alt, p_base))
    return PriceReport(price=float(price), discount=disc, s0=m.s0, terms=tuple(terms))


def _call_strike(payoff: Payoff) -> float:
    if len(payoff.terms) != 1:
        raise NotACall("decomposition requires a single-term call payoff")
    term = payoff.terms[0]
    if (term.terminal is None or term.coeff != 1.0
            or term.terminal != _indicator_above(term.strike)):
        raise NotACall(f"payoff {term.label!r} is not a plain European call")
    if term.strike < 0.0:
        raise NotACall("call strike must be nonnegative")
    return term.strike


@dataclass(frozen=True)
class CallDecomposition:
    """Testing-problem view of a European call."""

    cutoff: float
    test: Test
    priors: BinaryPriors
    risk: float
    price: float


def np_decomposition(m: LatticeMarket, q, payoff: Payoff,
                     max_outcomes: int | None = None) -> CallDecomposition:
    """Write a call price as one minus a scaled minimal Bayes risk.

    The call's indicator is the likelihood-ratio test of ``Q`` against
    ``Q1`` at cutoff ``c = K * discount / s0``; with priors
    ``(c/(1+c), 1/(1+c))`` its Bayes risk satisfies

        risk = (s0 - price) / (s0 + K * discount),

    which is re-verified here against the experiment drain before returning.
    """
    strike = _call_strike(payoff)
    step_measures = as_step_measures(m, q)
    exp = induced_experiment(m, step_measures, max_outcomes)
    disc = m.discount
    c = strike * disc / m.s0
    test = neyman_pearson(exp, "Q", "Q1", c, gamma=0.0)
    priors = BinaryPriors.from_cutoff(c)
    vec = test.vector(exp)
    p_alt = float(vec @ exp.measure("Q1"))
    p_base = float(vec @ exp.measure("Q"))
    price = m.s0 * p_alt - disc * strike * p_base
    risk = bayes_risk(exp, "Q", "Q1", test, priors)
    closed = (m.s0 - price) / (m.s0 + strike * disc)
    if abs(risk - closed) > 1e-11:
        raise RuntimeError(
            f"Bayes-risk identity violated (risk={risk!r}, closed={closed!r})"
        )
    return CallDecomposition(cutoff=c, test=test, priors=priors,
                             risk=risk, price=float(price))


def dynamic_price(m: LatticeMarket, q, payoff: Payoff, state: PathState,
                  max_states: int | None = None) -> float:
    """Arbitrage price at an interior node, via the re-based market.

    Only terminal-value payoffs are supported: re-basing the market at a
    node preserves the terminal price but not the path seen so far.
    """
    if not payoff.terminal_only:
        raise PathDependenceUnsupported(
            "dynamic prices are only defined here for terminal-value payoffs"
        )
    state.validate(m)
    step_measures = as_step_measures(m, q)
    require_martingale(m, step_measures)
    if state.t == m.steps:
        spot = m.s0
        for j, i in enumerate(state.moves):
            spot *= m.returns[j][i][0] * (1.0 + m.bond_rates[j])
        total = 0.0
        for term in payoff.terms:
            total += (term.coeff * spot - term.strike) * term.terminal(spot)
        return float(total)
    rest = complementary_market(m, q, state)
    rest_measures = step_measures[state.t:]
    return price_direct(rest, rest_measures, payoff, max_states=max_states)


def price_bounds(m: LatticeMarket, payoff: Payoff,
                 max_states: int | None = None,
                 max_combos: int = 1 << 16) -> tuple[float, float]:
    """Range of prices over the closed per-step martingale polytopes.

    The price is multilinear in the per-step measures, so both extremes are
    attained at vertex combinations; these are enumerated exhaustively.
    Equal bounds mean the market prices the payoff completely.
    """
    if not payoff.terminal_only:
        raise PathDependenceUnsupported(
            "price bounds are implemented for terminal-value payoffs"
        )
    solutions = solve_martingale_measures(m)
    vertex_lists = [
        [np.array(v) for v in sol.vertices] for sol in solutions.per_step
    ]
    combos = 1
    for vl in vertex_lists:
        combos *= len(vl)
        if combos > max_combos:
            raise SizeLimit(f"vertex combinations exceed cap {max_combos}")
    lower = math.inf
    upper = -math.inf
    for combo in itertools.product(*vertex_lists):
        p = _terminal_value(m, payoff, list(combo), max_states)
        lower = min(lower, p)
        upper = max(upper, p)
    return float(lower), float(upper)
