"""Pricing on finite lattice markets through binary statistical tests.

Discounted prices on an arbitrage-free lattice are likelihood-ratio
processes between two measures on path space; every European claim price
splits into powers of a randomized test between them.  The package builds
that dictionary explicitly for finite markets, takes it to the Gaussian
limit (Black-Scholes), and quantifies the gap at finite lattice sizes.
"""

from .errors import (
    LecamError,
    InvalidParams,
    AbsoluteContinuityViolation,
    SizeLimit,
    NoArbitrageViolation,
    InvalidState,
    NotACall,
    PathDependenceUnsupported,
    UnsupportedTest,
    InvalidTangent,
    ThetaOutOfRange,
    LemmaHypothesisViolated,
)
from .experiments import (
    FiniteExperiment,
    Test,
    Partition,
    BinaryPriors,
    likelihood_ratio,
    power,
    neyman_pearson,
    bayes_risk,
    min_bayes_risk,
    product,
    restrict,
    complementary,
    experiment_from_json,
    experiment_to_json,
)
from .lattice import (
    LatticeMarket,
    PathState,
    StepSolution,
    MartingaleMeasureSet,
    CriterionReport,
    build_crr,
    market_from_json,
    market_to_json,
    solve_martingale_measures,
    is_complete,
    enumerate_paths,
    path_prices,
    path_probabilities,
    terminal_law,
    terminal_log_law,
    discounted_likelihood_process,
    induced_experiment,
    verify_representation,
    complementary_market,
    verify_mm_criterion,
    image_experiment_check,
)
from .pricing import (
    Payoff,
    PayoffTerm,
    TerminalTest,
    PriceReport,
    CallDecomposition,
    payoff_european_call,
    payoff_european_put,
    payoff_digital,
    payoff_straddle,
    payoff_strangle,
    payoff_barrier_up_out,
    payoff_from_json,
    payoff_to_json,
    price_direct,
    price_via_tests,
    dynamic_price,
    np_decomposition,
    price_bounds,
)
from .blackscholes import (
    StepFunction,
    BSModel,
    GaussianBinaryExperiment,
    normal_cdf,
    bs_call_price,
    limit_price_via_np,
    limit_price_terminal,
    model_from_json,
)
from .lan import (
    TangentPath,
    Schedule,
    DiscreteModel,
    LanReport,
    ThirdLemmaReport,
    ConvergenceRow,
    StudySpec,
    make_tangent,
    crr_tangent,
    symmetric_trinomial_tangent,
    path_measure,
    one_period_mm,
    build_discrete_model,
    lan_diagnostics,
    third_lemma_check,
    schedule_family,
    convergence_study,
    tangent_from_json,
    study_from_json,
)

__version__ = "0.1.0"

__all__ = [
    "LecamError", "InvalidParams", "AbsoluteContinuityViolation", "SizeLimit",
    "NoArbitrageViolation", "InvalidState", "NotACall",
    "PathDependenceUnsupported", "UnsupportedTest", "InvalidTangent",
    "ThetaOutOfRange", "LemmaHypothesisViolated",
    "FiniteExperiment", "Test", "Partition", "BinaryPriors",
    "likelihood_ratio", "power", "neyman_pearson", "bayes_risk",
    "min_bayes_risk", "product", "restrict", "complementary",
    "experiment_from_json", "experiment_to_json",
    "LatticeMarket", "PathState", "StepSolution", "MartingaleMeasureSet",
    "CriterionReport", "build_crr", "market_from_json", "market_to_json",
    "solve_martingale_measures", "is_complete", "enumerate_paths",
    "path_prices", "path_probabilities", "terminal_law", "terminal_log_law",
    "discounted_likelihood_process", "induced_experiment",
    "verify_representation", "complementary_market", "verify_mm_criterion",
    "image_experiment_check",
    "Payoff", "PayoffTerm", "TerminalTest", "PriceReport", "CallDecomposition",
    "payoff_european_call", "payoff_european_put", "payoff_digital",
    "payoff_straddle", "payoff_strangle", "payoff_barrier_up_out",
    "payoff_from_json", "payoff_to_json", "price_direct", "price_via_tests",
    "dynamic_price", "np_decomposition", "price_bounds",
    "StepFunction", "BSModel", "GaussianBinaryExperiment", "normal_cdf",
    "bs_call_price", "limit_price_via_np", "limit_price_terminal",
    "model_from_json",
    "TangentPath", "Schedule", "DiscreteModel", "LanReport",
    "ThirdLemmaReport", "ConvergenceRow", "StudySpec", "make_tangent",
    "crr_tangent", "symmetric_trinomial_tangent", "path_measure",
    "one_period_mm", "build_discrete_model", "lan_diagnostics",
    "third_lemma_check", "schedule_family", "convergence_study",
    "tangent_from_json", "study_from_json",
]
