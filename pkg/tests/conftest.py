import numpy as np
import pytest

from momentmix.moments import MixtureParams, MomentTable


@pytest.fixture
def worked_moments() -> MomentTable:
    """Bivariate k=2 instance used across the recovery tests."""
    table = MomentTable(2)
    for c, v in enumerate([-0.25, 2.75, -1.0, 22.75, -6.5, 322.75], start=1):
        table.set((c, 0), v)
    for c, v in enumerate([2.5, 16.125, 74.5, 490.5625, 2921.25], start=1):
        table.set((0, c), v)
    table.set((1, 1), 0.8125)
    table.set((2, 1), 7.75)
    return table


@pytest.fixture
def worked_truth() -> MixtureParams:
    return MixtureParams(
        [0.25, 0.75],
        [[-1.0, -2.0], [0.0, 4.0]],
        [[[1.0, 0.5], [0.5, 2.0]], [[3.0, 0.25], [0.25, 3.5]]],
    )


def match_components(weights, means, varis, expected):
    """True when the component triples equal `expected` up to relabeling."""
    import itertools

    k = len(weights)
    for perm in itertools.permutations(range(k)):
        ok = all(
            abs(weights[perm[i]] - ew) <= 1e-3
            and abs(means[perm[i]] - em) <= 1e-3
            and abs(varis[perm[i]] - ev) <= 1e-3
            for i, (ew, em, ev) in enumerate(expected)
        )
        if ok:
            return True
    return False


@pytest.fixture
def component_matcher():
    return match_components
