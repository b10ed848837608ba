"""Estimation machinery for a dichotomic target observable measured through
an arbitrary qubit POVM.

Two independent routes to every outcome/observable correlation are kept
separate on purpose.  The direct route multiplies operators
(:func:`seqpol.algebra.real_cross_correlation`).  The reconstruction route
uses only probabilities measured on two variations of the input state,

    |+> ~ (1 + lam A)|psi>,   |-> ~ (1 - lam A)|psi>,

via the weighted difference

    Re <psi| E A |psi> = [w_plus P(m|+) - w_minus P(m|-)] / (4 lam),
    w_pm = 1 +- 2 lam <A> + lam^2 <A^2>.

For a two-level system, lam = 1 turns the variations into the eigenstates of
the target, so the whole reconstruction runs on eigenstate calibration data.
Conditional averages Re<psi|E A|psi> / <psi|E|psi> are the error-minimizing
value assignments; they coincide with real parts of weak values and may lie
far outside the eigenvalue range when the conditioning outcome is unlikely.
That possibility is exactly the failure of a joint positive probability for
outcome and eigenvalue, which :func:`quasi_probability` makes visible.
"""

import math
from dataclasses import dataclass
from typing import Hashable, Mapping

import numpy as np

from .algebra import (
    DichotomicObservable,
    PovmSet,
    QubitState,
    born_probability,
    expectation,
    real_cross_correlation,
)
from .exceptions import DegenerateBranchError, InvalidInputError, UnresolvableOutcomeError

# Below this probability an outcome is reported as unresolvable instead of
# producing a huge finite estimate; divergent conditional averages are real
# physics, but feeding them onward would be numerically meaningless.
P_FLOOR = 1e-9

# Tolerance for the error-decomposition identity carried by every report.
DECOMPOSITION_TOL = 1e-9

# Entries of a quasi-probability table below this count as genuinely negative.
NEGATIVITY_TOL = 1e-10


@dataclass(frozen=True)
class ReconstructionConfig:
    """Input-state variation parameter; ``lam = 1`` is the eigenstate method."""

    lam: float

    def __post_init__(self):
        if not isinstance(self.lam, (int, float)) or not math.isfinite(self.lam):
            raise InvalidInputError(f"lam must be finite, got {self.lam!r}")
        if self.lam == 0.0:
            raise InvalidInputError("lam must be nonzero")
        object.__setattr__(self, "lam", float(self.lam))


def _require_probability(value: float, name: str) -> float:
    if not isinstance(value, (int, float)) or not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def _require_sign(value: int, name: str) -> int:
    if value not in (1, -1):
        raise InvalidInputError(f"{name} must be +1 or -1, got {value!r}")
    return int(value)


def variation_states(
    psi: QubitState, observable: DichotomicObservable, config: ReconstructionConfig
) -> tuple[QubitState, QubitState]:
    """Normalized states proportional to (1 +- lam A)|psi>.

    For ``lam = 1`` and a dichotomic observable these are its +1 and -1
    eigenstates (up to global phase).  A branch whose normalization
    ``1 +- 2 lam <A> + lam^2 <A^2>`` is not strictly positive raises
    :class:`DegenerateBranchError`.
    """
    lam = config.lam
    mean = expectation(psi, observable.op)
    mean_square = expectation(psi, observable.op @ observable.op)
    states = []
    for sign in (1, -1):
        weight = 1.0 + 2.0 * sign * lam * mean + lam * lam * mean_square
        if weight <= 1e-12:
            raise DegenerateBranchError(
                f"variation branch {sign:+d} has vanishing normalization {weight!r}"
            )
        if psi.is_pure:
            branch = psi.vector + sign * lam * (observable.op @ psi.vector)
            states.append(QubitState.pure(branch / np.linalg.norm(branch)))
        else:
            kernel = np.eye(2) + sign * lam * observable.op
            rho = kernel @ psi.density @ kernel
            states.append(QubitState.mixed(rho / np.trace(rho).real))
    return states[0], states[1]


def reconstruct_correlation(
    p_plus: float,
    p_minus: float,
    mean_a: float,
    mean_a2: float,
    config: ReconstructionConfig,
) -> float:
    """Re <psi| E A |psi> from outcome probabilities on the two variation states.

    ``p_plus`` and ``p_minus`` are the probabilities of the same outcome on
    the + and - variation branches; ``mean_a`` and ``mean_a2`` are the first
    two moments of the target observable in the original state.
    """
    p_plus = _require_probability(p_plus, "p_plus")
    p_minus = _require_probability(p_minus, "p_minus")
    lam = config.lam
    w_plus = 1.0 + 2.0 * lam * mean_a + lam * lam * mean_a2
    w_minus = 1.0 - 2.0 * lam * mean_a + lam * lam * mean_a2
    return (w_plus * p_plus - w_minus * p_minus) / (4.0 * lam)


def conditional_average(correlation: float, p_m: float, outcome: Hashable = None) -> float:
    """Error-minimizing value assignment Re<psi|E A|psi> / <psi|E|psi>.

    May lie outside [-1, +1].  Raises :class:`UnresolvableOutcomeError` when
    the outcome probability is at or below ``P_FLOOR``.
    """
    if p_m <= P_FLOOR:
        raise UnresolvableOutcomeError(
            f"outcome probability {p_m!r} is below the resolvable floor", outcome=outcome
        )
    return correlation / p_m


def two_level_conditional_average(
    p_m_given_plus: float,
    p_m_given_minus: float,
    p_plus_psi: float,
    p_minus_psi: float,
    p_m_psi: float,
    outcome: Hashable = None,
) -> float:
    """Conditional average built from eigenstate-run and direct-run statistics.

    The numerator combines the outcome probabilities measured on the two
    eigenstate inputs with the eigenstate weights of the actual input state.
    The denominator is the outcome probability measured directly on the input
    state; it is an independent quantity, not the sum of the numerator terms,
    which is what lets the result leave the eigenvalue range.
    """
    p_m_given_plus = _require_probability(p_m_given_plus, "p_m_given_plus")
    p_m_given_minus = _require_probability(p_m_given_minus, "p_m_given_minus")
    p_plus_psi = _require_probability(p_plus_psi, "p_plus_psi")
    p_minus_psi = _require_probability(p_minus_psi, "p_minus_psi")
    if p_m_psi <= P_FLOOR:
        raise UnresolvableOutcomeError(
            f"outcome probability {p_m_psi!r} is below the resolvable floor", outcome=outcome
        )
    return (p_m_given_plus * p_plus_psi - p_m_given_minus * p_minus_psi) / p_m_psi


def classical_conditional_average(m1: int, p_error: float, mean_a: float) -> float:
    """Bayesian update of the target expectation from the commuting outcome alone.

    Interpolates between the prior expectation (random outcome, error
    probability 1/2) and the outcome value itself (error-free measurement),
    and always stays inside [-1, +1].
    """
    m1 = _require_sign(m1, "m1")
    if not math.isfinite(p_error) or not 0.0 <= p_error <= 0.5:
        raise InvalidInputError(f"p_error must lie in [0, 1/2], got {p_error!r}")
    if not math.isfinite(mean_a) or abs(mean_a) > 1.0:
        raise InvalidInputError(f"mean_a must lie in [-1, 1], got {mean_a!r}")
    contrast = 1.0 - 2.0 * p_error
    denominator = m1 + contrast * mean_a
    if abs(denominator) <= 1e-12:
        raise DegenerateBranchError(
            f"conditional average for m1={m1:+d} is undefined: vanishing denominator"
        )
    return m1 * (contrast * m1 + mean_a) / denominator


def sequential_conditional_average(
    m1: int, m2: int, p_error: float, mean_a: float, p_joint: float
) -> float:
    """Conditional average for a joint outcome of the sequential measurement.

    Because the HV readout is fully random for PM eigenstate inputs, m2 enters
    only through the measured joint probability in the denominator; unlikely
    readouts therefore amplify the estimate.
    """
    m1 = _require_sign(m1, "m1")
    _require_sign(m2, "m2")
    if not math.isfinite(p_error) or not 0.0 <= p_error <= 0.5:
        raise InvalidInputError(f"p_error must lie in [0, 1/2], got {p_error!r}")
    if not math.isfinite(mean_a) or abs(mean_a) > 1.0:
        raise InvalidInputError(f"mean_a must lie in [-1, 1], got {mean_a!r}")
    if p_joint <= P_FLOOR:
        raise UnresolvableOutcomeError(
            f"joint probability {p_joint!r} is below the resolvable floor", outcome=(m1, m2)
        )
    return (m1 * (1.0 - 2.0 * p_error) + mean_a) / (4.0 * p_joint)


def symmetric_error_probability(
    p_flip_plus: float, p_flip_minus: float, tol: float = 1e-9
) -> float | None:
    """The single error probability if eigenstate confusion is symmetric.

    ``p_flip_plus`` is the probability of outcome -1 for a +1 eigenstate input
    and ``p_flip_minus`` the probability of +1 for a -1 eigenstate.  Returns
    ``None`` when they differ by more than ``tol``, in which case the general
    probability-based error evaluation must be used instead.
    """
    p_flip_plus = _require_probability(p_flip_plus, "p_flip_plus")
    p_flip_minus = _require_probability(p_flip_minus, "p_flip_minus")
    if abs(p_flip_plus - p_flip_minus) >= tol:
        return None
    return 0.5 * (p_flip_plus + p_flip_minus)


@dataclass(frozen=True)
class EstimateTable:
    """Outcome-value assignments; ``None`` marks an unresolvable outcome."""

    assignments: Mapping[Hashable, float | None]

    def __post_init__(self):
        table = {}
        for label, value in dict(self.assignments).items():
            if value is not None:
                value = float(value)
                if not math.isfinite(value):
                    raise InvalidInputError(f"assignment for outcome {label!r} must be finite")
            table[label] = value
        if not table:
            raise InvalidInputError("an estimate table needs at least one outcome")
        object.__setattr__(self, "assignments", table)

    def __getitem__(self, label) -> float | None:
        return self.assignments[label]

    def labels(self) -> tuple[Hashable, ...]:
        return tuple(self.assignments)


@dataclass(frozen=True)
class ErrorReport:
    """Squared measurement error and its variance decomposition.

    ``epsilon_sq`` always satisfies

        epsilon_sq = mean_square - estimate_variance + residual

    within ``DECOMPOSITION_TOL``; construction fails otherwise.
    ``estimate_variance`` sums (correlation^2 / probability) over resolvable
    outcomes and ``residual`` collects the squared deviation of the actual
    assignments from the optimal ones.  Outcomes whose probability is at or
    below ``P_FLOOR`` contribute their raw error terms to ``residual`` and
    their probability to ``excluded_probability``.
    """

    epsilon_sq: float
    mean_square: float
    variance_initial: float
    estimate_variance: float
    residual: float
    excluded_probability: float = 0.0

    def __post_init__(self):
        recomposed = self.mean_square - self.estimate_variance + self.residual
        if not math.isfinite(self.epsilon_sq) or abs(self.epsilon_sq - recomposed) > DECOMPOSITION_TOL:
            raise InvalidInputError(
                "error decomposition does not reconcile: "
                f"epsilon_sq={self.epsilon_sq!r} vs recomposed={recomposed!r}"
            )
        if self.excluded_probability < 0.0:
            raise InvalidInputError("excluded probability cannot be negative")


def _error_report(
    mean_square: float,
    variance_initial: float,
    terms: list[tuple[float, float, float]],
    excluded_probability: float = 0.0,
) -> ErrorReport:
    """Assemble a report from (assigned value, probability, correlation) rows."""
    epsilon_sq = mean_square
    estimate_variance = 0.0
    residual = 0.0
    for assigned, p, c in terms:
        epsilon_sq += assigned * assigned * p - 2.0 * assigned * c
        if p > P_FLOOR:
            pivot = c / p
            estimate_variance += pivot * c
            residual += (assigned - pivot) ** 2 * p
        else:
            # No stable optimal pivot exists; keep the identity exact by
            # booking the raw error terms against the residual.
            residual += assigned * assigned * p - 2.0 * assigned * c
            excluded_probability += p
    return ErrorReport(
        epsilon_sq=epsilon_sq,
        mean_square=mean_square,
        variance_initial=variance_initial,
        estimate_variance=estimate_variance,
        residual=residual,
        excluded_probability=excluded_probability,
    )


def _check_nonnegative(report: ErrorReport) -> ErrorReport:
    if report.epsilon_sq < -DECOMPOSITION_TOL:
        raise InvalidInputError(
            f"squared error {report.epsilon_sq!r} is negative beyond tolerance"
        )
    return report


def _require_coverage(assignments: EstimateTable, povm: PovmSet) -> None:
    if set(assignments.labels()) != set(povm.labels()):
        raise InvalidInputError("assignment table must cover exactly the POVM outcome set")


def ozawa_error(
    state: QubitState,
    povm: PovmSet,
    observable: DichotomicObservable,
    assignments: EstimateTable,
) -> ErrorReport:
    """Operator-based squared error of an outcome-value assignment.

    Evaluates <A^2> + sum_m A_m^2 P(m) - 2 sum_m A_m Re<psi|E_m A|psi> and
    reports the decomposition into prior moment, estimate variance, and
    residual mis-assignment.
    """
    _require_coverage(assignments, povm)
    if any(value is None for value in assignments.assignments.values()):
        raise InvalidInputError("every outcome needs a finite assignment for error evaluation")
    mean = expectation(state, observable.op)
    mean_square = expectation(state, observable.op @ observable.op)
    terms = []
    for element in povm.elements:
        p = born_probability(state, element)
        c = real_cross_correlation(state, element, observable.op)
        terms.append((assignments[element.label], p, c))
    return _check_nonnegative(
        _error_report(mean_square, mean_square - mean * mean, terms)
    )


def optimal_error(
    state: QubitState, povm: PovmSet, observable: DichotomicObservable
) -> tuple[EstimateTable, ErrorReport]:
    """Best value assignment per outcome and the resulting minimal error.

    Outcomes with probability at or below ``P_FLOOR`` get a ``None`` estimate;
    their probability is surfaced as ``excluded_probability`` in the report
    and they contribute nothing to the estimate variance.
    """
    mean = expectation(state, observable.op)
    mean_square = expectation(state, observable.op @ observable.op)
    assignments: dict[Hashable, float | None] = {}
    estimate_variance = 0.0
    excluded = 0.0
    for element in povm.elements:
        p = born_probability(state, element)
        c = real_cross_correlation(state, element, observable.op)
        if p > P_FLOOR:
            best = c / p
            assignments[element.label] = best
            estimate_variance += best * c
        else:
            assignments[element.label] = None
            excluded += p
    report = _check_nonnegative(
        ErrorReport(
            epsilon_sq=mean_square - estimate_variance,
            mean_square=mean_square,
            variance_initial=mean_square - mean * mean,
            estimate_variance=estimate_variance,
            residual=0.0,
            excluded_probability=excluded,
        )
    )
    return EstimateTable(assignments), report


def two_level_ozawa_error(
    outcome_probs: Mapping[Hashable, float],
    eigenstate_probs: Mapping[Hashable, tuple[float, float]],
    p_plus_psi: float,
    p_minus_psi: float,
    assignments: EstimateTable,
) -> ErrorReport:
    """Squared error evaluated purely from measured probabilities.

    ``outcome_probs`` holds P(m|psi) from the direct run;
    ``eigenstate_probs`` holds (P(m|+), P(m|-)) from the eigenstate
    calibration runs; the eigenstate weights of the input complete the
    correlation reconstruction.  Sampling noise can push the plug-in estimate
    slightly negative, so unlike :func:`ozawa_error` no sign gate is applied.
    """
    p_plus_psi = _require_probability(p_plus_psi, "p_plus_psi")
    p_minus_psi = _require_probability(p_minus_psi, "p_minus_psi")
    if set(assignments.labels()) != set(outcome_probs) or set(outcome_probs) != set(
        eigenstate_probs
    ):
        raise InvalidInputError("probability tables and assignments must share one outcome set")
    terms = []
    for label, p in outcome_probs.items():
        assigned = assignments[label]
        if assigned is None:
            raise InvalidInputError("every outcome needs a finite assignment for error evaluation")
        given_plus, given_minus = eigenstate_probs[label]
        c = given_plus * p_plus_psi - given_minus * p_minus_psi
        terms.append((assigned, _require_probability(p, f"P({label!r})"), c))
    mean = p_plus_psi - p_minus_psi
    return _error_report(1.0, 1.0 - mean * mean, terms)


def two_level_optimal_error(
    outcome_probs: Mapping[Hashable, float],
    eigenstate_probs: Mapping[Hashable, tuple[float, float]],
    p_plus_psi: float,
    p_minus_psi: float,
) -> tuple[EstimateTable, ErrorReport]:
    """Probability-based counterpart of :func:`optimal_error`."""
    p_plus_psi = _require_probability(p_plus_psi, "p_plus_psi")
    p_minus_psi = _require_probability(p_minus_psi, "p_minus_psi")
    if set(outcome_probs) != set(eigenstate_probs):
        raise InvalidInputError("probability tables must share one outcome set")
    mean = p_plus_psi - p_minus_psi
    assignments: dict[Hashable, float | None] = {}
    estimate_variance = 0.0
    excluded = 0.0
    for label, p in outcome_probs.items():
        p = _require_probability(p, f"P({label!r})")
        given_plus, given_minus = eigenstate_probs[label]
        c = given_plus * p_plus_psi - given_minus * p_minus_psi
        if p > P_FLOOR:
            best = c / p
            assignments[label] = best
            estimate_variance += best * c
        else:
            assignments[label] = None
            excluded += p
    report = ErrorReport(
        epsilon_sq=1.0 - estimate_variance,
        mean_square=1.0,
        variance_initial=1.0 - mean * mean,
        estimate_variance=estimate_variance,
        residual=0.0,
        excluded_probability=excluded,
    )
    return EstimateTable(assignments), report


@dataclass(frozen=True)
class QuasiProbabilityTable:
    """Joint quasi-probabilities Re <psi| E_m Pi_a |psi> over (a, outcome).

    Both marginals reproduce ordinary probabilities, but individual entries
    may be negative; ``negativity_present`` flags entries below
    ``-NEGATIVITY_TOL``.  Negativity in an outcome's column is equivalent to
    its conditional average leaving the eigenvalue range.
    """

    entries: Mapping[tuple[int, Hashable], float]
    negativity_present: bool

    def outcome_marginal(self, label) -> float:
        return self.entries[(1, label)] + self.entries[(-1, label)]

    def eigenvalue_marginal(self, a: int) -> float:
        return sum(value for (sign, _), value in self.entries.items() if sign == a)


def quasi_probability(
    state: QubitState, povm: PovmSet, observable: DichotomicObservable
) -> QuasiProbabilityTable:
    """Quasi-probability table of outcomes against target eigenvalues."""
    entries: dict[tuple[int, Hashable], float] = {}
    projectors = ((1, observable.projector_plus), (-1, observable.projector_minus))
    for element in povm.elements:
        for a, projector in projectors:
            value = float(np.trace(state.density @ element.op @ projector).real)
            entries[(a, element.label)] = value
    negativity = min(entries.values()) < -NEGATIVITY_TOL
    return QuasiProbabilityTable(entries=entries, negativity_present=negativity)
