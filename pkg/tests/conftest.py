import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pearl.ot_align import GwConfig, TransportPlan, constant_offset, gw_cost_matrix
from pearl.trajectory import TrajectorySegment, TrajectorySet

settings.register_profile(
    "numeric",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("numeric")


def make_segment(rng, horizon=3, state_dim=2, action_dim=2):
    return TrajectorySegment(
        states=rng.normal(size=(horizon, state_dim)),
        actions=rng.normal(size=(horizon, action_dim)),
    )


def make_set(rng, count=4, horizon=3, state_dim=2, action_dim=2):
    segs = [make_segment(rng, horizon, state_dim, action_dim) for _ in range(count)]
    return TrajectorySet.from_segments(segs)


def sharp_config(c_s, c_t, p, q, mult=0.003):
    """A low-blur alignment config scaled to the instance's own cost range.

    Regularization is pinned to a small fraction of the median first-iteration
    linearized cost, which keeps the coupling close to a permutation on
    isometric instances. Log-domain scaling keeps the tiny regularizer stable.
    """
    plan0 = TransportPlan(values=np.outer(p, q), row_marginal=p, col_marginal=q)
    cost0 = gw_cost_matrix(constant_offset(c_s, c_t, p, q), c_s, c_t, plan0)
    reg = mult * float(np.median(cost0[cost0 > 0]))
    return GwConfig(entropic_reg=reg, log_domain=True)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_set(rng):
    return make_set(rng)
