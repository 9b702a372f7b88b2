import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csspa.model import DomainError, FeasibleSet
from csspa.projections import project, project_orthant

DIM = 4
vec = arrays(np.float64, DIM, elements=st.floats(-50, 50))

SETS = [
    FeasibleSet.box([-1.0, -2.0, 0.0, -10.0], [1.0, 2.0, 0.5, 10.0]),
    FeasibleSet.l2_ball([0.5, -0.5, 1.0, 0.0], 2.0),
    FeasibleSet.whole_space(DIM),
    FeasibleSet.nonneg_orthant(DIM),
]


def test_examples():
    assert project(FeasibleSet.box(-10, 10, dim=1), [12.0]).tolist() == [10.0]
    np.testing.assert_allclose(project(FeasibleSet.l2_ball([0, 0], 1.0), [3.0, 4.0]), [0.6, 0.8])
    inside = np.array([0.1, -0.3])
    np.testing.assert_array_equal(project(FeasibleSet.l2_ball([0, 0], 1.0), inside), inside)
    np.testing.assert_array_equal(project_orthant([-1.0, 2.0]), [0.0, 2.0])


def test_ball_center_maps_to_center():
    c = np.array([1.0, 2.0])
    np.testing.assert_array_equal(project(FeasibleSet.l2_ball(c, 0.5), c), c)


def test_errors():
    with pytest.raises(DomainError):
        project(FeasibleSet.box(-1, 1, dim=2), [0.0])
    with pytest.raises(DomainError):
        project(FeasibleSet.box(-1, 1, dim=2), [np.nan, 0.0])


def test_input_not_modified():
    p = np.array([5.0, 5.0, 5.0, 5.0])
    project(SETS[0], p)
    assert p.tolist() == [5.0] * 4


@settings(max_examples=200, deadline=None)
@given(p=vec, q=vec)
def test_properties(p, q):
    for s in SETS:
        pp, pq = project(s, p), project(s, q)
        assert s.contains(pp, atol=1e-12)
        np.testing.assert_allclose(project(s, pp), pp, rtol=0, atol=1e-12)
        assert np.linalg.norm(pp - pq) <= np.linalg.norm(p - q) + 1e-12
        # optimality against a feasible competitor
        assert np.linalg.norm(p - pp) <= np.linalg.norm(p - pq) + 1e-12
