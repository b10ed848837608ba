"""Four-outcome model of a variable-strength PM measurement with HV readout.

The first stage splits the photon by polarization and distinguishes diagonal
(P) from anti-diagonal (M) light through path interference; a half-wave-plate
angle ``theta`` tunes the contrast from zero (no measurement) to full
(projective) at 22.5 degrees.  A projective H-versus-V readout follows on each
path.  Outcomes are labelled ``(m1, m2)`` with m1 = +1 for the P path and
m2 = +1 for H.  In the ideal instrument the outcome effects are rank-one
projectors onto

    (m2 = +1):  (cos(2 theta) |H> + m1 sin(2 theta) |V>) / sqrt(2)
    (m2 = -1):  (sin(2 theta) |H> + m1 cos(2 theta) |V>) / sqrt(2)

Two calibration numbers model the imperfections:

* ``v_pm``, the interferometer visibility.  Limited interference contrast
  dephases the HV coherences, so each effect keeps its HV-diagonal entries and
  has its off-diagonal entries scaled by ``v_pm``.  This is the minimal model
  that reproduces the calibrated eigenstate error probability
  ``(1 - v_pm * sin(4 theta)) / 2`` exactly.
* ``v_hv``, the readout visibility, acting as a symmetric classical confusion
  of m2: a fraction ``(1 - v_hv) / 2`` of each effect is swapped with its
  m2-flipped partner.

Both visibilities are treated as strength-independent.  The beam-splitter
asymmetry of a real apparatus is assumed compensated upstream and is not
modelled here, nor are dark counts or detector-efficiency asymmetries.
"""

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .algebra import PovmElement, PovmSet, QubitState, born_probability
from .exceptions import InvalidInputError

V_PM_DEFAULT = 0.93
V_HV_DEFAULT = 0.9976
THETA_MAX_DEG = 22.5

# Canonical outcome order used everywhere: (m1, m2) = (+,+), (+,-), (-,+), (-,-).
OUTCOMES = ((1, 1), (1, -1), (-1, 1), (-1, -1))
M1_VALUES = (1, -1)

_SQRT2 = math.sqrt(2.0)


def _require_theta(theta_deg: float) -> float:
    if not isinstance(theta_deg, (int, float)) or not math.isfinite(theta_deg):
        raise InvalidInputError(f"theta_deg must be finite, got {theta_deg!r}")
    if not 0.0 <= theta_deg <= THETA_MAX_DEG:
        raise InvalidInputError(
            f"theta_deg must lie in [0, {THETA_MAX_DEG}] degrees, got {theta_deg!r}"
        )
    return float(theta_deg)


def _require_outcome(outcome) -> tuple[int, int]:
    try:
        m1, m2 = outcome
    except (TypeError, ValueError):
        raise InvalidInputError(f"outcome must be an (m1, m2) pair, got {outcome!r}") from None
    if m1 not in (1, -1) or m2 not in (1, -1):
        raise InvalidInputError(f"outcome components must be +1 or -1, got {outcome!r}")
    return (int(m1), int(m2))


@dataclass(frozen=True)
class SetupParams:
    """Instrument settings: measurement strength and the two visibilities."""

    theta_deg: float
    v_pm: float = V_PM_DEFAULT
    v_hv: float = V_HV_DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "theta_deg", _require_theta(self.theta_deg))
        for name in ("v_pm", "v_hv"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite, got {value!r}")
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, float(value))


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probability table over the four sequential outcomes."""

    probs: Mapping[tuple[int, int], float]

    def __post_init__(self):
        table = {}
        for outcome, p in dict(self.probs).items():
            outcome = _require_outcome(outcome)
            p = float(p)
            if not math.isfinite(p) or p < 0.0:
                raise InvalidInputError(f"probability of outcome {outcome} must be >= 0, got {p!r}")
            table[outcome] = p
        if set(table) != set(OUTCOMES):
            raise InvalidInputError("distribution must cover exactly the four sequential outcomes")
        if abs(sum(table.values()) - 1.0) > 1e-9:
            raise InvalidInputError("outcome probabilities must sum to one")
        object.__setattr__(self, "probs", table)

    def __getitem__(self, outcome) -> float:
        return self.probs[_require_outcome(outcome)]

    def marginal_m1(self) -> dict[int, float]:
        """Probabilities of the first outcome alone."""
        return {m1: sum(p for (a, _), p in self.probs.items() if a == m1) for m1 in M1_VALUES}


def ideal_outcome_vector(theta_deg: float, outcome) -> np.ndarray:
    """Sub-normalized state vector of an ideal outcome; squared norm is 1/2."""
    theta_deg = _require_theta(theta_deg)
    m1, m2 = _require_outcome(outcome)
    two_theta = math.radians(2.0 * theta_deg)
    c, s = math.cos(two_theta), math.sin(two_theta)
    if m2 == 1:
        amplitudes = (c, m1 * s)
    else:
        amplitudes = (s, m1 * c)
    return np.array(amplitudes, dtype=np.complex128) / _SQRT2


def sequential_povm(params: SetupParams) -> PovmSet:
    """The four-outcome POVM of the imperfect instrument.

    Ideal rank-one effects are dephased in the HV basis by ``v_pm`` and then
    mixed across m2 by the readout confusion ``(1 - v_hv) / 2``.  Both steps
    preserve completeness and positivity.
    """
    dephased = {}
    for outcome in OUTCOMES:
        vec = ideal_outcome_vector(params.theta_deg, outcome)
        effect = np.outer(vec, vec.conj())
        effect[0, 1] *= params.v_pm
        effect[1, 0] *= params.v_pm
        dephased[outcome] = effect
    keep = (1.0 + params.v_hv) / 2.0
    swap = (1.0 - params.v_hv) / 2.0
    elements = []
    for m1, m2 in OUTCOMES:
        op = keep * dephased[(m1, m2)] + swap * dephased[(m1, -m2)]
        elements.append(PovmElement(label=(m1, m2), op=op))
    return PovmSet(tuple(elements))


def pm_marginal_povm(params: SetupParams) -> PovmSet:
    """Two-outcome POVM for m1 alone, ignoring the HV readout.

    Both elements commute with the PM Stokes operator for every setting.
    """
    seq = sequential_povm(params)
    summed = {m1: np.zeros((2, 2), dtype=np.complex128) for m1 in M1_VALUES}
    for element in seq.elements:
        summed[element.label[0]] = summed[element.label[0]] + element.op
    return PovmSet(tuple(PovmElement(label=m1, op=summed[m1]) for m1 in M1_VALUES))


def pm_error_probability(params: SetupParams) -> float:
    """Probability that m1 disagrees with a P or M eigenstate input.

    Equals ``(1 - v_pm * sin(4 theta)) / 2`` and, by construction of the
    imperfection model, the probability of the m1 = -1 marginal effect on a
    P-polarized input.
    """
    return 0.5 * (1.0 - params.v_pm * math.sin(math.radians(4.0 * params.theta_deg)))


def outcome_probabilities(params: SetupParams, state: QubitState) -> OutcomeDistribution:
    """Distribution of the four sequential outcomes for a given input state."""
    povm = sequential_povm(params)
    return OutcomeDistribution(
        {element.label: born_probability(state, element) for element in povm.elements}
    )
