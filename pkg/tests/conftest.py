import numpy as np
import pytest

from divswitch import (
    ClaimModel,
    ClaimSource,
    Exponential,
    GridSpec,
    ModelSpec,
    NeverSwitch,
    SurvivorPenalty,
    ValueTable1D,
    ZeroPenalty,
)


@pytest.fixture
def two_company_claims():
    """Example-1 claim structure: two independent exponential sources."""
    return ClaimModel(
        (
            ClaimSource(2.4, (1.0, 0.0), Exponential(3.0)),
            ClaimSource(2.0, (0.0, 1.0), Exponential(3.5)),
        )
    )


@pytest.fixture
def small_model(two_company_claims):
    """Example-1 parameters, zero penalty, no switching: fast to solve."""
    return ModelSpec(
        2,
        (1.08, 0.674),
        0.11,
        (1.0, 1.0),
        two_company_claims,
        ZeroPenalty(),
        NeverSwitch(-50.0),
    )


@pytest.fixture
def small_grid():
    return GridSpec(1 / 10, (14, 22), (1.08, 0.674))


@pytest.fixture
def survivor_model(two_company_claims):
    """Survivor reward with fixed affine tables (no 1-d solves needed)."""
    v1 = ValueTable1D((0.0, 1.0, 8.0), (0.6, 1.7, 8.8), 1.0)
    v2 = ValueTable1D((0.0, 1.0, 8.0), (0.3, 1.4, 8.5), 1.0)
    return ModelSpec(
        2,
        (1.08, 0.674),
        0.11,
        (1.0, 1.0),
        two_company_claims,
        SurvivorPenalty((v1, v2)),
        NeverSwitch(-50.0),
    )


@pytest.fixture
def no_claim_model_1d():
    return ModelSpec(
        1, (2.0,), 0.5, (1.0,), ClaimModel(()), ZeroPenalty(), NeverSwitch(-100.0)
    )


def random_monotone_pair(rng, shape, scale=1.0):
    w1 = rng.normal(0.0, scale, size=shape)
    w2 = w1 + np.abs(rng.normal(0.0, scale, size=shape))
    return w1, w2
