"""Local perturbation families and lattice-to-lognormal convergence checks.

A tangent direction over a small finite base law ``P0`` is a function ``g``
with ``E(g) = 0``, ``E(g^2) = 1`` and ``g >= -C``; the perturbed laws
``P_theta = (1 + theta*g) . P0`` stay probability measures for
``0 <= theta < 1/C``.  Scaling the perturbation like ``sigma * sqrt(T/N)``
per step and compounding returns ``(1 + sigma*sqrt(T/N)*g) / (1 + rho*T/N)``
produces lattice markets whose log prices obey a local asymptotic normality
expansion.  The diagnostics here compute the *exact* finite-``N`` laws by
convolution (grouping equal per-step contributions, so state counts grow
polynomially) and report the distance from the Gaussian limit:

* under the real-world products: mean/variance against ``(-v/2, v)`` with
  ``v`` the integrated squared volatility, plus a CDF sup-distance;
* under the per-step martingale measures: means of the linear statistic and
  of ``log S`` against the integrated rate and ``integral(r - sigma^2/2)``
  — the measure-change counterpart of the limit law;
* call prices against the closed-form limit price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import limits
from .blackscholes import BSModel, StepFunction, limit_price_terminal, model_from_json
from .errors import (
    InvalidParams,
    InvalidTangent,
    LemmaHypothesisViolated,
    ThetaOutOfRange,
)
from .lattice import LatticeMarket, combine_additive_laws, count_distribution
from .pricing import Payoff, payoff_from_json, price_direct

ATOL = 1e-12


# ---------------------------------------------------------------------------
# tangent directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TangentPath:
    """A centered, normalized direction ``g`` over a finite base law.

    ``C`` bounds ``g`` from below on the support (``g >= -C``); the largest
    admissible local parameter is then ``1/C`` (exclusive).
    """

    probs: tuple[float, ...]
    g: tuple[float, ...]
    C: float

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        g = tuple(float(x) for x in self.g)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "C", float(self.C))
        if len(probs) != len(g) or not probs:
            raise InvalidTangent("probs and g must be nonempty and aligned")
        if any(p < 0.0 for p in probs) or abs(sum(probs) - 1.0) > ATOL:
            raise InvalidTangent("base law must be a probability vector")
        p = np.array(probs)
        garr = np.array(g)
        mean = float(p @ garr)
        second = float(p @ garr**2)
        if abs(mean) > ATOL:
            raise InvalidTangent(f"direction is not centered (mean {mean:.3e})")
        if abs(second - 1.0) > ATOL:
            raise InvalidTangent(f"direction is not normalized (second moment {second!r})")
        if not self.C > 0.0:
            raise InvalidTangent(f"lower bound C must be positive, got {self.C!r}")
        support = p > 0.0
        if np.any(garr[support] < -self.C):
            raise InvalidTangent(f"direction drops below -C = {-self.C!r} on the support")

    @property
    def theta_max(self) -> float:
        """Supremum of admissible local parameters (exclusive)."""
        return 1.0 / self.C

    def essential_infimum(self) -> float:
        p = np.array(self.probs)
        return float(np.min(np.array(self.g)[p > 0.0]))


def make_tangent(probs: Sequence[float], g: Sequence[float],
                 C: float | None = None) -> TangentPath:
    """Validate a direction; ``C`` defaults to the essential infimum bound."""
    if C is None:
        p = np.array([float(x) for x in probs])
        garr = np.array([float(x) for x in g])
        if p.shape != garr.shape or p.size == 0:
            raise InvalidTangent("probs and g must be nonempty and aligned")
        support = p > 0.0
        low = float(np.min(garr[support])) if support.any() else 0.0
        if low >= 0.0:
            raise InvalidTangent("a centered direction must take negative values")
        C = -low
    return TangentPath(tuple(probs), tuple(g), C)


def crr_tangent(a: float, b: float) -> TangentPath:
    """Two-point direction: up with probability ``b/(a+b)`` and value
    ``sqrt(a/b)``, down with value ``-sqrt(b/a)``."""
    if not (a > 0.0 and b > 0.0):
        raise InvalidTangent(f"need a, b > 0, got a={a!r}, b={b!r}")
    root = math.sqrt(a * b)
    return make_tangent((b / (a + b), a / (a + b)), (a / root, -b / root))


def symmetric_trinomial_tangent(probs: Sequence[float]) -> TangentPath:
    """Three-point direction with ``g = (x, y, -x)`` solved from the moment
    equations for the given base probabilities."""
    probs = tuple(float(p) for p in probs)
    if len(probs) != 3 or any(p <= 0.0 for p in probs):
        raise InvalidTangent("need three strictly positive probabilities")
    a, b, c = probs
    x = 1.0 / math.sqrt(a + c + (c - a) ** 2 / b)
    y = x * (c - a) / b
    return make_tangent(probs, (x, y, -x))


def path_measure(path: TangentPath, theta: float) -> np.ndarray:
    """The perturbed law ``(1 + theta*g) . P0`` for ``0 <= theta < 1/C``."""
    if not 0.0 <= theta < path.theta_max:
        raise ThetaOutOfRange(
            f"theta={theta!r} outside [0, {path.theta_max!r}) for C={path.C!r}"
        )
    p = np.array(path.probs)
    out = p * (1.0 + theta * np.array(path.g))
    return out


def one_period_mm(path: TangentPath, sigma: float, rho: float) -> np.ndarray:
    """The unique one-period martingale measure ``P_{rho/sigma}``.

    For returns ``(1 + sigma*g) / (1 + rho)`` the measure ``P_theta`` with
    ``theta = rho/sigma`` reprices the asset exactly; this requires
    ``essinf g > -sigma/rho`` and ``rho/sigma < 1/C``.  The identity
    ``E_theta[(1 + sigma*g)/(1 + rho)] = 1`` is re-verified to 1e-12.
    """
    if not sigma > 0.0:
        raise InvalidParams(f"sigma must be positive, got {sigma!r}")
    if rho < 0.0:
        raise InvalidParams(f"rho must be nonnegative, got {rho!r}")
    if rho > 0.0 and path.essential_infimum() <= -sigma / rho:
        raise LemmaHypothesisViolated(
            f"essinf g = {path.essential_infimum()!r} <= -sigma/rho = {-sigma / rho!r}"
        )
    theta = rho / sigma
    if theta >= path.theta_max:
        raise ThetaOutOfRange(
            f"theta = rho/sigma = {theta!r} >= 1/C = {path.theta_max!r}"
        )
    q = path_measure(path, theta)
    g = np.array(path.g)
    lhs = float(q @ ((1.0 + sigma * g) / (1.0 + rho)))
    if abs(lhs - 1.0) > ATOL:
        raise RuntimeError(f"one-period martingale identity failed: {lhs!r}")
    return q


# ---------------------------------------------------------------------------
# discretization schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Per-step volatilities and rates for an ``N``-step grid on ``[0, T]``.

    ``sigmas[j]`` is the un-scaled volatility of step ``j`` (the per-step
    perturbation is ``sigmas[j] * sqrt(T/N)``); ``rhos[j]`` the un-scaled
    simple rate (per-step rate ``rhos[j] * T/N``).  The limit functions are
    kept alongside so diagnostics can compute their integrals.  Optional
    bounds are validated when given.
    """

    N: int
    horizon: float
    sigmas: tuple[float, ...]
    rhos: tuple[float, ...]
    limit_sigma: StepFunction
    limit_rate: StepFunction
    sigma_low: float | None = None
    sigma_high: float | None = None
    rate_high: float | None = None

    def __post_init__(self) -> None:
        if self.N < 1:
            raise InvalidParams(f"N must be >= 1, got {self.N}")
        if not self.horizon > 0.0:
            raise InvalidParams(f"horizon must be positive, got {self.horizon!r}")
        sigmas = tuple(float(s) for s in self.sigmas)
        rhos = tuple(float(r) for r in self.rhos)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "rhos", rhos)
        if len(sigmas) != self.N or len(rhos) != self.N:
            raise InvalidParams("need one sigma and one rho per step")
        if any(s <= 0.0 for s in sigmas):
            raise InvalidParams("volatilities must be strictly positive")
        if any(r < 0.0 for r in rhos):
            raise InvalidParams("rates must be nonnegative")
        if self.sigma_low is not None and any(s < self.sigma_low for s in sigmas):
            raise InvalidParams(f"some sigma drops below the bound {self.sigma_low!r}")
        if self.sigma_high is not None and any(s > self.sigma_high for s in sigmas):
            raise InvalidParams(f"some sigma exceeds the bound {self.sigma_high!r}")
        if self.rate_high is not None and any(r > self.rate_high for r in rhos):
            raise InvalidParams(f"some rho exceeds the bound {self.rate_high!r}")
        if abs(self.limit_sigma.horizon - self.horizon) > 1e-12:
            raise InvalidParams("limit sigma horizon does not match the grid")
        if abs(self.limit_rate.horizon - self.horizon) > 1e-12:
            raise InvalidParams("limit rate horizon does not match the grid")

    @property
    def dt(self) -> float:
        return self.horizon / self.N

    def step_vol(self, j: int) -> float:
        """Per-step volatility ``sigma_j * sqrt(T/N)``."""
        return self.sigmas[j] * math.sqrt(self.dt)

    def step_rate(self, j: int) -> float:
        """Per-step simple rate ``rho_j * T/N``."""
        return self.rhos[j] * self.dt

    def sigma_l2_gap(self) -> float:
        """``integral (sigma_N - sigma)^2`` over ``[0, T]`` (step vs limit)."""
        edges = sorted(
            {0.0, self.horizon}
            | {j * self.dt for j in range(1, self.N)}
            | set(self.limit_sigma.ends)
        )
        total = 0.0
        for a, b in zip(edges, edges[1:]):
            mid = 0.5 * (a + b)
            j = min(int(mid / self.dt), self.N - 1)
            diff = self.sigmas[j] - self.limit_sigma.value_at(mid)
            total += diff * diff * (b - a)
        return total

    @classmethod
    def from_limits(cls, limit_sigma: StepFunction, limit_rate: StepFunction,
                    N: int, **bounds) -> "Schedule":
        """Sample the limit functions at step midpoints.

        Rates are mapped through ``rho = (N/T) * (exp(r*T/N) - 1)`` so the
        bond product matches the continuously compounded bank account at
        every ``N`` exactly (for grid-aligned rate pieces).
        """
        horizon = limit_sigma.horizon
        if abs(limit_rate.horizon - horizon) > 1e-12:
            raise InvalidParams("sigma and rate schedules disagree on the horizon")
        dt = horizon / N
        sigmas = []
        rhos = []
        for j in range(N):
            mid = (j + 0.5) * dt
            sigmas.append(limit_sigma.value_at(mid))
            r = limit_rate.value_at(mid)
            rhos.append((math.exp(r * dt) - 1.0) / dt)
        return cls(N=N, horizon=horizon, sigmas=tuple(sigmas), rhos=tuple(rhos),
                   limit_sigma=limit_sigma, limit_rate=limit_rate, **bounds)


@dataclass(frozen=True)
class DiscreteModel:
    """A lattice market built from a tangent direction and a schedule,
    together with its designated per-step martingale measures."""

    market: LatticeMarket
    measures: tuple[tuple[float, ...], ...]
    thetas: tuple[float, ...]


def build_discrete_model(path: TangentPath, schedule: Schedule,
                         s0: float = 1.0) -> DiscreteModel:
    """Market with step returns ``(1 + sigma_j*sqrt(T/N)*g) / (1 + rho_j*T/N)``.

    Raises :class:`~lecam.errors.ThetaOutOfRange` when ``N`` is too small for
    the given volatility (a return value would hit zero).
    """
    returns = []
    rates = []
    measures = []
    thetas = []
    g = np.array(path.g)
    for j in range(schedule.N):
        vol = schedule.step_vol(j)
        rate = schedule.step_rate(j)
        if vol * path.C >= 1.0:
            raise ThetaOutOfRange(
                f"step volatility {vol!r} >= 1/C = {path.theta_max!r}; increase N"
            )
        values = (1.0 + vol * g) / (1.0 + rate)
        returns.append(tuple(zip(values.tolist(), path.probs)))
        rates.append(rate)
        q = one_period_mm(path, vol, rate)
        measures.append(tuple(q.tolist()))
        thetas.append(rate / vol)
    market = LatticeMarket(
        steps=schedule.N,
        horizon=schedule.horizon,
        s0=s0,
        returns=tuple(returns),
        bond_rates=tuple(rates),
    )
    return DiscreteModel(market=market, measures=tuple(measures), thetas=tuple(thetas))


# ---------------------------------------------------------------------------
# exact finite-N laws
# ---------------------------------------------------------------------------

def _grid_steps(schedule: Schedule, t: float | None) -> int:
    if t is None:
        return schedule.N
    steps = t / schedule.dt
    n = round(steps)
    if abs(steps - n) > 1e-9 or not 0 < n <= schedule.N:
        raise InvalidParams(f"time {t!r} is not a positive grid point")
    return int(n)


def _statistic_laws(path: TangentPath, schedule: Schedule, n: int,
                    measure_of: Callable[[int], np.ndarray],
                    stats: Sequence[Callable[[int, np.ndarray], np.ndarray]],
                    max_states: int | None = None,
                    ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact laws of additive statistics of the first ``n`` steps.

    ``measure_of(j)`` is the per-step law; each entry of ``stats`` maps
    ``(step index, g values)`` to per-outcome contributions.  Steps with
    identical ``(sigma, rho)`` share one convolution class.
    """
    classes: dict[tuple[float, float], list[int]] = {}
    for j in range(n):
        classes.setdefault((schedule.sigmas[j], schedule.rhos[j]), []).append(j)
    g = np.array(path.g)
    per_stat_laws: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in stats]
    for (_, _), members in classes.items():
        qs = [measure_of(j) for j in members]
        counts, probs = count_distribution(qs, max_states)
        for si, stat in enumerate(stats):
            contrib = stat(members[0], g)
            per_stat_laws[si].append((counts @ contrib, probs))
    return [combine_additive_laws(laws, max_states) for laws in per_stat_laws]


def _moments(values: np.ndarray, probs: np.ndarray) -> tuple[float, float]:
    mean = float(probs @ values)
    var = float(probs @ (values - mean) ** 2)
    return mean, var


def _cdf_sup_distance(values: np.ndarray, probs: np.ndarray,
                      mean: float, var: float, grid_points: int = 1000) -> float:
    """Sup over a fixed grid of |exact CDF - Gaussian CDF|."""
    sd = math.sqrt(var)
    grid = np.linspace(mean - 8.0 * sd, mean + 8.0 * sd, grid_points)
    order = np.argsort(values)
    cum = np.cumsum(probs[order])
    idx = np.searchsorted(values[order], grid, side="right")
    exact = np.where(idx > 0, cum[np.minimum(idx, len(cum)) - 1], 0.0)
    exact = np.where(idx == 0, 0.0, exact)
    from scipy.special import ndtr
    target = ndtr((grid - mean) / sd)
    return float(np.max(np.abs(exact - target)))


@dataclass(frozen=True)
class LanReport:
    """Exact law of ``log S`` under the real-world products vs its limit."""

    N: int
    t: float
    noether_max: float       # max_j sigma_j * sqrt(T/N)
    riemann_gap: float       # |T/N * sum sigma_j^2 - integral sigma^2|
    mean: float
    var: float
    mean_gap: float          # vs -(1/2) integral sigma^2
    var_gap: float           # vs integral sigma^2
    cdf_sup_distance: float
    states: int


def lan_diagnostics(path: TangentPath, schedule: Schedule,
                    t: float | None = None,
                    max_states: int | None = None) -> LanReport:
    """Compare the exact law of ``log S_t`` under ``P0``-products with the
    Gaussian local expansion."""
    n = _grid_steps(schedule, t)
    t_val = n * schedule.dt
    base = np.array(path.probs)

    def log_s(j: int, g: np.ndarray) -> np.ndarray:
        return np.log(1.0 + schedule.step_vol(j) * g)

    (law,) = _statistic_laws(path, schedule, n, lambda j: base, [log_s], max_states)
    values, probs = law
    v_limit = schedule.limit_sigma.integral_sq(t_val)
    mean, var = _moments(values, probs)
    noether = max(schedule.step_vol(j) for j in range(n))
    riemann = abs(sum(schedule.step_vol(j) ** 2 for j in range(n)) - v_limit)
    return LanReport(
        N=schedule.N,
        t=t_val,
        noether_max=noether,
        riemann_gap=riemann,
        mean=mean,
        var=var,
        mean_gap=abs(mean + 0.5 * v_limit),
        var_gap=abs(var - v_limit),
        cdf_sup_distance=_cdf_sup_distance(values, probs, -0.5 * v_limit, v_limit),
        states=len(values),
    )


@dataclass(frozen=True)
class ThirdLemmaReport:
    """Exact laws under the designated martingale measures vs their limits.

    ``z`` is the linear statistic ``sum sigma_j sqrt(T/N) g(x_j)``; its limit
    mean is the integrated rate.  ``log S`` has limit mean
    ``integral (r - sigma^2/2)``; both share the limit variance
    ``integral sigma^2``.  ``alpha`` is the accumulated squared local
    parameter ``T/N * sum theta_j^2`` (reported, no limit asserted).
    """

    N: int
    t: float
    z_mean: float
    z_mean_gap: float
    z_var: float
    z_var_gap: float
    logs_mean: float
    logs_mean_gap: float
    logs_var: float
    logs_var_gap: float
    alpha: float
    cdf_sup_distance: float
    states: int


def third_lemma_check(path: TangentPath, schedule: Schedule,
                      t: float | None = None,
                      max_states: int | None = None) -> ThirdLemmaReport:
    """Exact measure-changed laws against the shifted Gaussian limit."""
    n = _grid_steps(schedule, t)
    t_val = n * schedule.dt

    def measure_of(j: int) -> np.ndarray:
        return one_period_mm(path, schedule.step_vol(j), schedule.step_rate(j))

    def z_stat(j: int, g: np.ndarray) -> np.ndarray:
        return schedule.step_vol(j) * g

    def log_s(j: int, g: np.ndarray) -> np.ndarray:
        return np.log(1.0 + schedule.step_vol(j) * g)

    (z_law, logs_law) = _statistic_laws(
        path, schedule, n, measure_of, [z_stat, log_s], max_states
    )
    r_limit = schedule.limit_rate.integral(t_val)
    v_limit = schedule.limit_sigma.integral_sq(t_val)
    z_mean, z_var = _moments(*z_law)
    s_mean, s_var = _moments(*logs_law)
    alpha = schedule.dt * sum(
        (schedule.rhos[j] / schedule.sigmas[j]) ** 2 for j in range(n)
    )
    logs_values, logs_probs = logs_law
    return ThirdLemmaReport(
        N=schedule.N,
        t=t_val,
        z_mean=z_mean,
        z_mean_gap=abs(z_mean - r_limit),
        z_var=z_var,
        z_var_gap=abs(z_var - v_limit),
        logs_mean=s_mean,
        logs_mean_gap=abs(s_mean - (r_limit - 0.5 * v_limit)),
        logs_var=s_var,
        logs_var_gap=abs(s_var - v_limit),
        alpha=alpha,
        cdf_sup_distance=_cdf_sup_distance(
            logs_values, logs_probs, r_limit - 0.5 * v_limit, v_limit
        ),
        states=len(logs_values),
    )


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    p_n: float
    p_limit: float
    abs_gap: float
    noether_max: float
    var_gap: float


def schedule_family(bs: BSModel) -> Callable[[int], Schedule]:
    """Schedules sampling the model's volatility and rate at every ``N``."""
    def family(N: int) -> Schedule:
        return Schedule.from_limits(bs.sigma, bs.rate, N)
    return family


def convergence_study(path: TangentPath, family: Callable[[int], Schedule],
                      payoff: Payoff, bs: BSModel, Ns: Sequence[int],
                      max_states: int | None = None) -> list[ConvergenceRow]:
    """Exact lattice prices along ``Ns`` against the closed-form limit.

    Each row carries the price gap plus the step-size statistic and the
    variance gap of ``log S`` under the designated martingale measures, the
    two quantities that control the Gaussian limit.
    """
    if not Ns:
        raise InvalidParams("need at least one lattice size")
    p_limit = limit_price_terminal(bs, payoff)
    rows = []
    for N in Ns:
        schedule = family(int(N))
        model = build_discrete_model(path, schedule, s0=bs.s0)
        p_n = price_direct(model.market, list(map(np.array, model.measures)), payoff,
                           max_states=max_states)
        report = third_lemma_check(path, schedule, max_states=max_states)
        rows.append(ConvergenceRow(
            N=int(N),
            p_n=p_n,
            p_limit=p_limit,
            abs_gap=abs(p_n - p_limit),
            noether_max=max(schedule.step_vol(j) for j in range(schedule.N)),
            var_gap=report.logs_var_gap,
        ))
    return rows


@dataclass(frozen=True)
class StudySpec:
    """A convergence study: tangent direction, limit model, payoff, sizes."""

    path: TangentPath
    bs: BSModel
    payoff: Payoff
    Ns: tuple[int, ...]
    threshold: float | None = None

    def family(self) -> Callable[[int], Schedule]:
        return schedule_family(self.bs)


def tangent_from_json(doc: Mapping) -> TangentPath:
    kind = doc.get("type", "custom")
    if kind == "crr":
        return crr_tangent(float(doc["a"]), float(doc["b"]))
    if kind == "symmetric_trinomial":
        return symmetric_trinomial_tangent([float(p) for p in doc["probs"]])
    if kind == "custom":
        c = doc.get("C")
        return make_tangent(
            [float(p) for p in doc["probs"]],
            [float(x) for x in doc["g"]],
            None if c is None else float(c),
        )
    raise InvalidParams(f"unknown tangent type {kind!r}")


def study_from_json(doc: Mapping) -> StudySpec:
    """Build a study from a plain dict.

    Expected shape::

        {"tangent": {"type": "crr", "a": 1.0, "b": 1.0},
         "bs": {"s0": 100.0, "T": 1.0, "sigma": {"const": 0.2},
                "rate": {"const": 0.0}},
         "payoff": {"type": "call", "K": 100.0},
         "Ns": [16, 64, 256],
         "threshold": 0.02}
    """
    try:
        path = tangent_from_json(doc["tangent"])
        bs = model_from_json(doc["bs"])
        payoff = payoff_from_json(doc["payoff"])
        Ns = tuple(int(n) for n in doc["Ns"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParams(f"study spec malformed: {exc}") from exc
    threshold = doc.get("threshold")
    return StudySpec(path=path, bs=bs, payoff=payoff, Ns=Ns,
                     threshold=None if threshold is None else float(threshold))
