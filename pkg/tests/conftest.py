import math

import numpy as np
import pytest

from seqpol import (
    DichotomicObservable,
    PovmElement,
    PovmSet,
    QubitState,
)

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def psi_67_5():
    from seqpol import make_linear_polarization

    return make_linear_polarization(67.5)


def random_pure_state(rng) -> QubitState:
    vec = rng.normal(size=2) + 1j * rng.normal(size=2)
    return QubitState.pure(vec / np.linalg.norm(vec))


def random_mixed_state(rng) -> QubitState:
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = g @ g.conj().T
    return QubitState.mixed(rho / np.trace(rho).real)


def random_state(rng) -> QubitState:
    return random_pure_state(rng) if rng.random() < 0.5 else random_mixed_state(rng)


def random_dichotomic(rng) -> DichotomicObservable:
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    op = np.array(
        [[n[2], n[0] - 1j * n[1]], [n[0] + 1j * n[1], -n[2]]], dtype=complex
    )
    return DichotomicObservable.from_operator(op)


def random_binary_povm(rng) -> PovmSet:
    """Unsharp two-outcome POVM along a random direction."""
    direction = random_dichotomic(rng)
    u, v = rng.uniform(0.0, 1.0, size=2)
    first = u * direction.projector_plus + v * direction.projector_minus
    second = np.eye(2) - first
    return PovmSet((PovmElement("first", first), PovmElement("second", second)))


def random_povm(rng) -> PovmSet:
    """Either a random unsharp binary POVM or a random instrument POVM."""
    from seqpol import SetupParams, sequential_povm

    if rng.random() < 0.5:
        return random_binary_povm(rng)
    params = SetupParams(
        theta_deg=rng.uniform(0.0, 22.5),
        v_pm=rng.uniform(0.0, 1.0),
        v_hv=rng.uniform(0.0, 1.0),
    )
    return sequential_povm(params)
