"""Strength sweeps, crossing-point searches, and Monte Carlo photon counting.

Every sweep row is computed analytically from the instrument model and the
estimation machinery; rows are independent, so grids may be evaluated
concurrently.  Monte Carlo counting runs draw from per-run generators seeded
by (seed, run index), which keeps concurrent execution deterministic and
order-independent.
"""

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .algebra import (
    QubitState,
    born_probability,
    expectation,
    make_linear_polarization,
    make_stokes,
    real_cross_correlation,
)
from .analysis import (
    EstimateTable,
    optimal_error,
    ozawa_error,
    symmetric_error_probability,
    two_level_conditional_average,
    two_level_optimal_error,
    two_level_ozawa_error,
    conditional_average,
)
from .exceptions import InvalidInputError, UnresolvableOutcomeError
from .instrument import (
    M1_VALUES,
    OUTCOMES,
    OutcomeDistribution,
    SetupParams,
    V_HV_DEFAULT,
    V_PM_DEFAULT,
    outcome_probabilities,
    pm_error_probability,
    pm_marginal_povm,
    sequential_povm,
)

STRATEGY_EIGEN = "eigenvalue-assignment"
STRATEGY_OPT_M1 = "optimal-m1"
STRATEGY_OPT_M1M2 = "optimal-m1m2"
ALL_STRATEGIES = frozenset((STRATEGY_EIGEN, STRATEGY_OPT_M1, STRATEGY_OPT_M1M2))

DEFAULT_INPUT_ANGLE_DEG = 67.5
BISECTION_TOL_DEG = 0.01

CROSSING_SIGN_FLIP = "aopt[m1=-1] zero crossing"
CROSSING_BRANCH_SWAP = "aopt[m1=-1 m2=+1] overtakes aopt[m1=+1 m2=+1]"


def default_theta_grid() -> tuple[float, ...]:
    """0 to 22.5 degrees in 0.5 degree steps (46 points)."""
    return tuple(0.5 * i for i in range(46))


@dataclass(frozen=True)
class SweepConfig:
    """Grid, instrument visibilities, input preparation, and strategy set."""

    theta_grid: tuple[float, ...] = ()
    v_pm: float = V_PM_DEFAULT
    v_hv: float = V_HV_DEFAULT
    input_angle_deg: float = DEFAULT_INPUT_ANGLE_DEG
    strategies: frozenset[str] = ALL_STRATEGIES

    def __post_init__(self):
        grid = tuple(float(t) for t in self.theta_grid) or default_theta_grid()
        for theta in grid:
            SetupParams(theta, self.v_pm, self.v_hv)  # range validation
        strategies = frozenset(self.strategies)
        if not strategies or not strategies <= ALL_STRATEGIES:
            raise InvalidInputError(f"strategies must be a non-empty subset of {sorted(ALL_STRATEGIES)}")
        object.__setattr__(self, "theta_grid", grid)
        object.__setattr__(self, "strategies", strategies)

    def setup(self, theta_deg: float) -> SetupParams:
        return SetupParams(theta_deg, self.v_pm, self.v_hv)


@dataclass(frozen=True)
class SweepRow:
    """All quantities tracked per strength setting.

    Conditional averages are ``None`` for unresolvable outcomes, the error
    fields are ``None`` for strategies that were not requested.
    """

    theta_deg: float
    p_error: float
    probs: OutcomeDistribution
    a_opt_m1: Mapping[int, float | None]
    a_opt_m1m2: Mapping[tuple[int, int], float | None]
    eps_sq_eigen: float | None
    eps_sq_opt_m1: float | None
    eps_sq_opt_m1m2: float | None


def row_as_dict(row: SweepRow) -> dict[str, float | None]:
    """Flat single-row view with one canonical key order."""
    return {
        "theta_deg": row.theta_deg,
        "p_error": row.p_error,
        "p_pp": row.probs[(1, 1)],
        "p_pm": row.probs[(1, -1)],
        "p_mp": row.probs[(-1, 1)],
        "p_mm": row.probs[(-1, -1)],
        "aopt_m1_plus": row.a_opt_m1[1],
        "aopt_m1_minus": row.a_opt_m1[-1],
        "aopt_pp": row.a_opt_m1m2[(1, 1)],
        "aopt_pm": row.a_opt_m1m2[(1, -1)],
        "aopt_mp": row.a_opt_m1m2[(-1, 1)],
        "aopt_mm": row.a_opt_m1m2[(-1, -1)],
        "eps_eigen": row.eps_sq_eigen,
        "eps_opt_m1": row.eps_sq_opt_m1,
        "eps_opt_m1m2": row.eps_sq_opt_m1m2,
    }


def analytic_row(
    params: SetupParams,
    input_angle_deg: float = DEFAULT_INPUT_ANGLE_DEG,
    strategies: frozenset[str] = ALL_STRATEGIES,
) -> SweepRow:
    """One deterministic sweep row straight from the instrument model."""
    state = make_linear_polarization(input_angle_deg)
    target = make_stokes("PM")
    marginal = pm_marginal_povm(params)
    sequential = sequential_povm(params)

    def estimates(povm):
        table = {}
        for element in povm.elements:
            c = real_cross_correlation(state, element, target.op)
            p = born_probability(state, element)
            try:
                table[element.label] = conditional_average(c, p, outcome=element.label)
            except UnresolvableOutcomeError:
                table[element.label] = None
        return table

    eps_eigen = eps_opt_m1 = eps_opt_m1m2 = None
    if STRATEGY_EIGEN in strategies:
        eigen_table = EstimateTable({m1: float(m1) for m1 in M1_VALUES})
        eps_eigen = ozawa_error(state, marginal, target, eigen_table).epsilon_sq
    if STRATEGY_OPT_M1 in strategies:
        eps_opt_m1 = optimal_error(state, marginal, target)[1].epsilon_sq
    if STRATEGY_OPT_M1M2 in strategies:
        eps_opt_m1m2 = optimal_error(state, sequential, target)[1].epsilon_sq

    return SweepRow(
        theta_deg=params.theta_deg,
        p_error=pm_error_probability(params),
        probs=outcome_probabilities(params, state),
        a_opt_m1=estimates(marginal),
        a_opt_m1m2=estimates(sequential),
        eps_sq_eigen=eps_eigen,
        eps_sq_opt_m1=eps_opt_m1,
        eps_sq_opt_m1m2=eps_opt_m1m2,
    )


def run_sweep(config: SweepConfig) -> list[SweepRow]:
    """One row per grid point, fully analytic and deterministic."""
    return [
        analytic_row(config.setup(theta), config.input_angle_deg, config.strategies)
        for theta in config.theta_grid
    ]


@dataclass(frozen=True)
class Crossing:
    """A named root in theta; ``theta_deg`` is None when no sign change exists."""

    description: str
    theta_deg: float | None


def _bisect(f: Callable[[float], float], lo: float, hi: float, f_lo: float) -> float:
    while hi - lo > BISECTION_TOL_DEG:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _first_root(f: Callable[[float], float], grid: tuple[float, ...]) -> float | None:
    values = [f(theta) for theta in grid]
    for i, value in enumerate(values):
        if value == 0.0:
            return grid[i]
        if i and (value < 0.0) != (values[i - 1] < 0.0):
            return _bisect(f, grid[i - 1], grid[i], values[i - 1])
    return None


def find_crossings(config: SweepConfig) -> list[Crossing]:
    """Bracketed, bisected roots of the two characteristic estimate curves.

    The first root is where the conditional averages for m1 = -1 change sign
    (the prior bias and the measurement evidence balance).  The second is
    where the m2 = +1 estimates of the two m1 branches cross; it is located
    through the pole-free product form c(-1,+1) P(+1,+1) - c(+1,+1) P(-1,+1),
    which shares its zeros with the estimate difference.
    """
    state = make_linear_polarization(config.input_angle_deg)
    target = make_stokes("PM")

    def sequential_terms(theta: float) -> dict[tuple[int, int], tuple[float, float]]:
        povm = sequential_povm(config.setup(theta))
        return {
            element.label: (
                real_cross_correlation(state, element, target.op),
                born_probability(state, element),
            )
            for element in povm.elements
        }

    def branch_estimate(theta: float) -> float:
        # The (-1, -1) outcome keeps a probability bounded away from zero over
        # the whole strength range, so the ratio has no pole.
        c, p = sequential_terms(theta)[(-1, -1)]
        return c / p

    def branch_swap_gap(theta: float) -> float:
        terms = sequential_terms(theta)
        c_mp, p_mp = terms[(-1, 1)]
        c_pp, p_pp = terms[(1, 1)]
        return c_mp * p_pp - c_pp * p_mp

    grid = tuple(sorted(config.theta_grid))
    # The swap gap vanishes identically at zero strength; scan above it.
    swap_grid = tuple(theta for theta in grid if theta > 0.0)
    return [
        Crossing(CROSSING_SIGN_FLIP, _first_root(branch_estimate, grid)),
        Crossing(CROSSING_BRANCH_SWAP, _first_root(branch_swap_gap, swap_grid)),
    ]


@dataclass(frozen=True)
class CountRecord:
    """Per-outcome photon counts for the input-state run and the two
    eigenstate calibration runs, plus everything needed to reproduce them."""

    setup: SetupParams
    input_angle_deg: float
    n_photons: int
    rng_seed: int
    counts_psi: Mapping[tuple[int, int], float]
    counts_plus: Mapping[tuple[int, int], float]
    counts_minus: Mapping[tuple[int, int], float]

    def __post_init__(self):
        if self.n_photons < 1:
            raise InvalidInputError(f"n_photons must be >= 1, got {self.n_photons!r}")
        for name in ("counts_psi", "counts_plus", "counts_minus"):
            counts = dict(getattr(self, name))
            if set(counts) != set(OUTCOMES):
                raise InvalidInputError(f"{name} must cover exactly the four outcomes")
            if any(not math.isfinite(v) or v < 0 for v in counts.values()):
                raise InvalidInputError(f"{name} must be non-negative and finite")
            object.__setattr__(self, name, counts)

    def runs(self) -> dict[str, Mapping[tuple[int, int], float]]:
        return {"psi": self.counts_psi, "plus": self.counts_plus, "minus": self.counts_minus}


def monte_carlo_counts(
    setup: SetupParams,
    input_angle_deg: float = DEFAULT_INPUT_ANGLE_DEG,
    n_photons: int = 1_000_000,
    rng_seed: int = 0,
) -> CountRecord:
    """Multinomial photon counts for the three runs of one strength setting.

    Run index 0 is the prepared input state, 1 and 2 are the P and M
    eigenstate calibrations; each run draws from its own generator seeded by
    (rng_seed, run index).
    """
    if n_photons < 1:
        raise InvalidInputError(f"n_photons must be >= 1, got {n_photons!r}")
    if rng_seed < 0:
        raise InvalidInputError(f"rng_seed must be non-negative, got {rng_seed!r}")
    states = (
        make_linear_polarization(input_angle_deg),
        make_linear_polarization(45.0),
        make_linear_polarization(-45.0),
    )
    draws = []
    for run_index, state in enumerate(states):
        distribution = outcome_probabilities(setup, state)
        pvals = np.array([distribution[outcome] for outcome in OUTCOMES])
        rng = np.random.default_rng((int(rng_seed), run_index))
        counts = rng.multinomial(int(n_photons), pvals / pvals.sum())
        draws.append({outcome: int(k) for outcome, k in zip(OUTCOMES, counts)})
    return CountRecord(
        setup=setup,
        input_angle_deg=float(input_angle_deg),
        n_photons=int(n_photons),
        rng_seed=int(rng_seed),
        counts_psi=draws[0],
        counts_plus=draws[1],
        counts_minus=draws[2],
    )


def estimate_from_counts(
    record: CountRecord, strategies: frozenset[str] = ALL_STRATEGIES
) -> SweepRow:
    """Run the estimation pipeline on measured frequencies.

    Eigenstate weights of the input come from the known preparation angle, as
    in a calibrated experiment; outcome and confusion probabilities come from
    the counts.  Outcomes with no counts are marked unresolvable and excluded
    from the optimal-error sums without affecting the others.
    """
    n = record.n_photons
    frequencies = {}
    for name, counts in record.runs().items():
        total = sum(counts.values())
        if abs(total - n) > 1e-6 * max(1.0, n):
            raise InvalidInputError(
                f"counts for run {name!r} sum to {total!r}, expected n_photons={n}"
            )
        frequencies[name] = {outcome: counts[outcome] / n for outcome in OUTCOMES}

    mean_a = math.sin(math.radians(2.0 * record.input_angle_deg))
    p_plus_psi = 0.5 * (1.0 + mean_a)
    p_minus_psi = 0.5 * (1.0 - mean_a)

    p_psi = frequencies["psi"]
    eigen_probs = {m: (frequencies["plus"][m], frequencies["minus"][m]) for m in OUTCOMES}

    def marginal(table: Mapping[tuple[int, int], float]) -> dict[int, float]:
        return {m1: sum(p for (a, _), p in table.items() if a == m1) for m1 in M1_VALUES}

    pm1_psi = marginal(p_psi)
    pm1_plus = marginal(frequencies["plus"])
    pm1_minus = marginal(frequencies["minus"])
    eigen_probs_m1 = {m1: (pm1_plus[m1], pm1_minus[m1]) for m1 in M1_VALUES}

    def conditional(outcomes, probs, eigen) -> dict:
        table = {}
        for m in outcomes:
            given_plus, given_minus = eigen[m]
            try:
                table[m] = two_level_conditional_average(
                    given_plus, given_minus, p_plus_psi, p_minus_psi, probs[m], outcome=m
                )
            except UnresolvableOutcomeError:
                table[m] = None
        return table

    eps_eigen = eps_opt_m1 = eps_opt_m1m2 = None
    if STRATEGY_EIGEN in strategies:
        symmetric = symmetric_error_probability(pm1_plus[-1], pm1_minus[1])
        if symmetric is not None:
            eps_eigen = 4.0 * symmetric
        else:
            eigen_table = EstimateTable({m1: float(m1) for m1 in M1_VALUES})
            eps_eigen = two_level_ozawa_error(
                pm1_psi, eigen_probs_m1, p_plus_psi, p_minus_psi, eigen_table
            ).epsilon_sq
    if STRATEGY_OPT_M1 in strategies:
        eps_opt_m1 = two_level_optimal_error(
            pm1_psi, eigen_probs_m1, p_plus_psi, p_minus_psi
        )[1].epsilon_sq
    if STRATEGY_OPT_M1M2 in strategies:
        eps_opt_m1m2 = two_level_optimal_error(
            p_psi, eigen_probs, p_plus_psi, p_minus_psi
        )[1].epsilon_sq

    return SweepRow(
        theta_deg=record.setup.theta_deg,
        p_error=0.5 * (pm1_plus[-1] + pm1_minus[1]),
        probs=OutcomeDistribution(p_psi),
        a_opt_m1=conditional(M1_VALUES, pm1_psi, eigen_probs_m1),
        a_opt_m1m2=conditional(OUTCOMES, p_psi, eigen_probs),
        eps_sq_eigen=eps_eigen,
        eps_sq_opt_m1=eps_opt_m1,
        eps_sq_opt_m1m2=eps_opt_m1m2,
    )


def bootstrap_standard_errors(
    record: CountRecord, n_resamples: int = 200, rng_seed: int = 0
) -> dict[str, float]:
    """Multinomial-bootstrap standard errors for the estimated row fields.

    Counts are resampled from the empirical frequencies of each run; fields
    that come back unresolvable in any resample are omitted from the result.
    """
    if n_resamples < 2:
        raise InvalidInputError("need at least two resamples for a standard error")
    n = record.n_photons
    frequencies = {
        name: np.array([counts[o] for o in OUTCOMES]) / sum(counts.values())
        for name, counts in record.runs().items()
    }
    rng = np.random.default_rng((int(rng_seed),))
    samples: dict[str, list[float]] = {}
    for _ in range(int(n_resamples)):
        resampled = {}
        for name, pvals in frequencies.items():
            draw = rng.multinomial(n, pvals / pvals.sum())
            resampled[name] = {o: int(k) for o, k in zip(OUTCOMES, draw)}
        row = estimate_from_counts(
            CountRecord(
                setup=record.setup,
                input_angle_deg=record.input_angle_deg,
                n_photons=n,
                rng_seed=record.rng_seed,
                counts_psi=resampled["psi"],
                counts_plus=resampled["plus"],
                counts_minus=resampled["minus"],
            )
        )
        for key, value in row_as_dict(row).items():
            samples.setdefault(key, []).append(value)
    return {
        key: float(np.std(values, ddof=1))
        for key, values in samples.items()
        if all(v is not None for v in values)
    }
