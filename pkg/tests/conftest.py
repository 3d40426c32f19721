"""Shared fixtures and helpers for the steercert test suite.

Heavy certification solves (minutes each at cutoff 15) are computed once in
session-scoped fixtures and shared between the unit suites and the
acceptance criteria.  Hours-scale solves are gated behind the
``STEERCERT_EXTENDED=1`` environment variable.
"""

import math
import os

import numpy as np
import pytest

from steercert import certify, fock, gaussian, povm, stats

EXTENDED = os.environ.get("STEERCERT_EXTENDED", "") == "1"

requires_extended = pytest.mark.skipif(
    not EXTENDED, reason="extended tier (set STEERCERT_EXTENDED=1)"
)


def lossy_state(source: str, squeezing_db: float, eta: float, noise_snu: float = 0.0):
    """Source state after the symmetric loss/noise channel."""
    s = gaussian.db_to_parameter(-abs(squeezing_db))
    if source == "tms":
        state = gaussian.tms_covariance(s)
    elif source == "sms":
        state = gaussian.split_sms_covariance(s)
    else:
        raise ValueError(source)
    if eta < 1.0 or noise_snu > 0.0:
        state = gaussian.apply_loss_noise(state, gaussian.ChannelParams(eta, noise_snu))
    return state


def bob_half_range(state) -> float:
    return 5.0 * math.sqrt(gaussian.largest_variance(state))


def build_scenario(
    state,
    cutoff: int,
    num_outcomes_alice: int = 8,
    period_q: float = 3.0,
    num_outcomes_bob: int = 16,
    num_settings_bob: int = 2,
    half_range: float | None = None,
):
    """Measurement sets, assemblage and joint table for one configuration."""
    if half_range is None:
        half_range = bob_half_range(state)
    alice = povm.alice_measurements(
        povm.PeriodicBinning(period_q, num_outcomes_alice), cutoff
    )
    bob = povm.bob_measurements(
        num_settings_bob, povm.IntervalBinning(half_range, num_outcomes_bob), cutoff
    )
    rho, deficit = fock.gaussian_to_fock(state, cutoff)
    assemblage = stats.assemblage_from_state(rho, alice)
    dist = stats.assemblage_to_joint(assemblage, bob)
    return {
        "alice": alice,
        "bob": bob,
        "rho": rho,
        "deficit": deficit,
        "assemblage": assemblage,
        "dist": dist,
    }


@pytest.fixture(scope="session")
def small_scenario():
    """Cheap but non-trivial scenario: TMS -4 dB, eta = 1, cutoff 6."""
    state = lossy_state("tms", -4.0, 1.0)
    return build_scenario(
        state, cutoff=6, num_outcomes_alice=2, num_outcomes_bob=4
    )


@pytest.fixture(scope="session")
def small_result(small_scenario):
    sc = small_scenario
    return certify.pguess_probabilities(sc["dist"], sc["alice"], sc["bob"], 0)
