import numpy as np
import pytest

from proxtomo import ParallelGeometry, Projector, assemble_dense, build_staggered_partition
from proxtomo.estimators import (SagaState, SvrgState, full_gradient,
                                 init_svrg_state, refresh_policy,
                                 refresh_svrg_state, saga_estimate_update,
                                 sgd_estimate, svrg_estimate)


@pytest.fixture
def setup():
    geom = ParallelGeometry.uniform(6, 7)
    proj = Projector(geom, 4, 4)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 4))
    data = rng.standard_normal((6, 7))
    return geom, proj, x, data, rng


def test_full_gradient_matches_dense_normal_equations(setup):
    geom, proj, x, data, rng = setup
    dense = assemble_dense(geom, 4, 4)
    want = (dense.T @ (dense @ x.ravel() - data.ravel())).reshape(4, 4)
    got = full_gradient(x, proj, data)
    assert np.abs(got - want).max() <= 1e-12 * max(1.0, np.abs(want).max())


def test_full_gradient_zero_at_least_squares_solution(setup):
    geom, proj, x, data, rng = setup
    dense = assemble_dense(geom, 4, 4)
    solution, *_ = np.linalg.lstsq(dense, data.ravel(), rcond=None)
    grad = full_gradient(solution.reshape(4, 4), proj, data)
    assert np.linalg.norm(grad) <= 1e-8


def test_full_gradient_zero_on_consistent_data(setup):
    geom, proj, x, data, rng = setup
    consistent = proj.forward(x)
    assert np.linalg.norm(full_gradient(x, proj, consistent)) <= 1e-12


def test_full_gradient_partition_sum_agrees(setup):
    geom, proj, x, data, rng = setup
    mono = full_gradient(x, proj, data)
    for n in (2, 3, 6):
        part = build_staggered_partition(6, n)
        split = full_gradient(x, proj, data, part)
        assert np.linalg.norm(split - mono) <= 1e-10 * np.linalg.norm(mono)


def test_sgd_single_subset_is_full_gradient_bitwise(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 1)
    assert np.array_equal(sgd_estimate(x, 0, proj, data, part),
                          full_gradient(x, proj, data))


def test_sgd_unbiased_by_enumeration(setup):
    geom, proj, x, data, rng = setup
    full = full_gradient(x, proj, data)
    for n in (2, 3, 6):
        part = build_staggered_partition(6, n)
        mean = np.mean([sgd_estimate(x, i, proj, data, part) for i in range(n)],
                       axis=0)
        assert np.linalg.norm(mean - full) <= 1e-10 * np.linalg.norm(full)


class ScalarBlocks:
    """Stub operator over a single unknown: row i of A is the scalar a_i."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.shape = (1, 1)

    def forward(self, x, subset=None):
        idx = np.arange(len(self.weights)) if subset is None else np.asarray(subset)
        return self.weights[idx, None] * x[0, 0]

    def adjoint(self, rows, subset=None):
        idx = np.arange(len(self.weights)) if subset is None else np.asarray(subset)
        return np.array([[float(self.weights[idx] @ rows[:, 0])]])


def test_sgd_scalar_two_block_toy():
    # A = [[1], [2]], x = 1, b = 0: estimates {2*1*1, 2*2*2} = {2, 8}, mean 5
    proj = ScalarBlocks([1.0, 2.0])
    part = build_staggered_partition(2, 2)
    x = np.array([[1.0]])
    data = np.zeros((2, 1))
    estimates = [float(sgd_estimate(x, i, proj, data, part)[0, 0]) for i in range(2)]
    assert estimates == [2.0, 8.0]
    full = float(full_gradient(x, proj, data)[0, 0])
    assert full == 5.0
    assert np.mean(estimates) == pytest.approx(full, rel=1e-10)


def test_sgd_index_validation(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 3)
    with pytest.raises(ValueError):
        sgd_estimate(x, 3, proj, data, part)
    with pytest.raises(ValueError):
        sgd_estimate(x, -1, proj, data, part)


def test_saga_estimate_with_current_table_is_full_gradient(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 3)
    table = np.stack([
        proj.adjoint(proj.forward(x, s) - data[list(s), :], s)
        for s in part.subsets
    ])
    full = full_gradient(x, proj, data)
    for i in range(3):
        state = SagaState(table=table.copy(), running_sum=table.sum(axis=0))
        estimate = saga_estimate_update(x, i, state, proj, data, part)
        assert np.linalg.norm(estimate - full) <= 1e-10 * np.linalg.norm(full)


def test_saga_single_subset_tracks_full_gradient_bitwise(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 1)
    state = SagaState.zeros(1, (4, 4))
    for _ in range(4):
        point = rng.standard_normal((4, 4))
        estimate = saga_estimate_update(point, 0, state, proj, data, part)
        assert np.array_equal(estimate, full_gradient(point, proj, data))


def test_saga_scalar_toy_enumeration():
    # zero table, zero sum: drawing i gives 2 * a_i * (a_i * 1 - 0) + 0
    proj = ScalarBlocks([1.0, 2.0])
    part = build_staggered_partition(2, 2)
    x = np.array([[1.0]])
    data = np.zeros((2, 1))
    estimates = []
    for i in range(2):
        state = SagaState.zeros(2, (1, 1))
        estimates.append(float(saga_estimate_update(x, i, state, proj, data,
                                                    part)[0, 0]))
    assert estimates == [2.0, 8.0]
    assert np.mean(estimates) == pytest.approx(5.0, rel=1e-12)


def test_saga_unbiased_for_any_fixed_table(setup):
    geom, proj, x, data, rng = setup
    full = full_gradient(x, proj, data)
    for n in (2, 3, 6):
        part = build_staggered_partition(6, n)
        table = rng.standard_normal((n, 4, 4))
        mean = np.mean([
            saga_estimate_update(x, i, SagaState(table.copy(), table.sum(axis=0)),
                                 proj, data, part)
            for i in range(n)
        ], axis=0)
        assert np.linalg.norm(mean - full) <= 1e-10 * np.linalg.norm(full)


def test_saga_running_sum_stays_consistent_over_many_updates(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 3)
    state = SagaState.zeros(3, (4, 4))
    for _ in range(1000):
        point = rng.standard_normal((4, 4))
        saga_estimate_update(point, int(rng.integers(3)), state, proj, data, part)
    assert state.sum_drift() <= 1e-8


def test_saga_table_memory_warning():
    with pytest.warns(ResourceWarning):
        SagaState.zeros(600, (256, 256))


def test_svrg_zero_variance_at_snapshot(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 3)
    state = init_svrg_state(x, proj, data, refresh_period=3)
    estimates = [svrg_estimate(x, i, state, proj, data, part) for i in range(3)]
    for estimate in estimates:
        assert np.array_equal(estimate, state.full_grad)
    variance = np.var(np.stack(estimates), axis=0).sum()
    assert variance <= 1e-20 * np.sum(state.full_grad ** 2)


def test_svrg_single_subset_is_full_gradient(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 1)
    point = rng.standard_normal((4, 4))
    state = init_svrg_state(point, proj, data, refresh_period=1)
    assert np.array_equal(svrg_estimate(point, 0, state, proj, data, part),
                          full_gradient(point, proj, data))


def test_svrg_unbiased_by_enumeration(setup):
    geom, proj, x, data, rng = setup
    full = full_gradient(x, proj, data)
    for n in (2, 3, 6):
        part = build_staggered_partition(6, n)
        state = init_svrg_state(rng.standard_normal((4, 4)), proj, data,
                                refresh_period=n)
        mean = np.mean([svrg_estimate(x, i, state, proj, data, part)
                        for i in range(n)], axis=0)
        assert np.linalg.norm(mean - full) <= 1e-10 * np.linalg.norm(full)


def test_svrg_stale_state_rejected(setup):
    geom, proj, x, data, rng = setup
    part = build_staggered_partition(6, 3)
    state = init_svrg_state(x, proj, data, refresh_period=3)
    state.iterations_since_refresh = 4
    with pytest.raises(ValueError, match="stale"):
        svrg_estimate(x, 0, state, proj, data, part)


def test_svrg_state_requires_exactly_one_schedule(setup):
    geom, proj, x, data, rng = setup
    with pytest.raises(ValueError):
        SvrgState(snapshot=x, full_grad=x)
    with pytest.raises(ValueError):
        SvrgState(snapshot=x, full_grad=x, refresh_period=3,
                  refresh_probability=0.1)


def test_refresh_policy_deterministic_schedule(setup):
    geom, proj, x, data, rng = setup
    state = init_svrg_state(x, proj, data, refresh_period=5)
    assert not refresh_policy(state)
    state.iterations_since_refresh = 4
    assert not refresh_policy(state)
    state.iterations_since_refresh = 5
    assert refresh_policy(state)


def test_refresh_policy_loopless_rate(setup):
    geom, proj, x, data, rng = setup
    state = init_svrg_state(x, proj, data, refresh_probability=0.1)
    stream = np.random.default_rng(123)
    draws = sum(refresh_policy(state, stream) for _ in range(100000))
    # binomial: mean 0.1, three sigma ~ 0.0028
    assert abs(draws / 100000 - 0.1) <= 0.005


def test_refresh_updates_snapshot_and_gradient(setup):
    geom, proj, x, data, rng = setup
    state = init_svrg_state(x, proj, data, refresh_period=3)
    state.iterations_since_refresh = 3
    new_point = rng.standard_normal((4, 4))
    refresh_svrg_state(state, new_point, proj, data)
    assert np.array_equal(state.snapshot, new_point)
    assert np.array_equal(state.full_grad, full_gradient(new_point, proj, data))
    assert state.iterations_since_refresh == 0
    # the stored full gradient matches the subset sum at refresh time
    part = build_staggered_partition(6, 3)
    split = full_gradient(new_point, proj, data, part)
    assert np.linalg.norm(split - state.full_grad) \
        <= 1e-10 * np.linalg.norm(state.full_grad)
