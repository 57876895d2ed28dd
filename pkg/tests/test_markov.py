"""Temperature, IPF normalization, and saturation-time Markov maps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2n2.aggregation import Stochasticity, TransitionMatrix
from m2n2.errors import ContractError, ConvergenceError, ValidationError
from m2n2.markov import (
    MarkovParams,
    apply_temperature,
    chain_states,
    ipf_normalize,
    markov_map,
)

from oracles import chain_reference, sinkhorn_reference, temperature_reference


def row_stochastic(rng, n, dtype=np.float64):
    a = rng.random((n, n)).astype(dtype) + 0.05
    a /= a.sum(axis=1, keepdims=True)
    return a


def as_tm(a, n_side=None, kind=Stochasticity.ROW):
    n = a.shape[0]
    if n_side is None:
        n_side = int(np.sqrt(n))
        assert n_side * n_side == n
        h, w = n_side, n_side
    else:
        h, w = n_side
    return TransitionMatrix(data=a, h=h, w=w, stochasticity=kind)


def doubly_stochastic(rng, n):
    tm = ipf_normalize(as_tm(row_stochastic(rng, n)))
    return tm


# -- params -------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"temperature": 0.0}, {"temperature": -1.0},
    {"tau": 0.0}, {"tau": 1.0}, {"tau": 1.5},
    {"max_iters": 0}, {"ipf_tolerance": 0.0}, {"ipf_max_rounds": 0},
])
def test_params_validation(kw):
    with pytest.raises(ValidationError):
        MarkovParams(**kw)


def test_params_defaults():
    p = MarkovParams()
    assert p.temperature == 0.65
    assert p.tau == 0.3
    assert p.max_iters == 1000


# -- temperature --------------------------------------------------------------

def test_temperature_identity():
    rng = np.random.default_rng(0)
    a = row_stochastic(rng, 16)
    out = apply_temperature(as_tm(a), 1.0)
    assert np.abs(out.data - a).max() <= 1e-6


def test_temperature_uniform_fixed_point():
    a = np.full((4, 4), 0.25)
    for t in (0.5, 0.65, 2.0):
        out = apply_temperature(as_tm(a, (2, 2)), t)
        assert np.allclose(out.data, 0.25, atol=1e-9)


def test_temperature_closed_form():
    # [0.8, 0.2] at T=0.5 -> p^2 renormalized = [0.9412, 0.0588]
    a = np.array([[0.8, 0.2], [0.5, 0.5]])
    out = apply_temperature(as_tm(a, (1, 2)), 0.5)
    assert np.allclose(out.data[0], [0.94117647, 0.05882353], atol=1e-8)
    assert np.allclose(out.data[1], [0.5, 0.5], atol=1e-12)


def test_temperature_matches_power_rule():
    rng = np.random.default_rng(1)
    a = row_stochastic(rng, 9)
    for t in (0.5, 0.65, 2.0):
        out = apply_temperature(as_tm(a, (3, 3)), t)
        expect = np.vstack([temperature_reference(r, t) for r in a])
        assert np.abs(out.data - expect).max() <= 1e-12


def test_temperature_sharpens_and_flattens():
    a = np.array([[0.7, 0.2, 0.1]] * 3)
    tm = as_tm(a, (1, 3))
    sharp = apply_temperature(tm, 0.5).data[0]
    flat = apply_temperature(tm, 4.0).data[0]
    assert sharp[0] > 0.7 > flat[0]
    assert sharp[2] < 0.1 < flat[2]


def test_temperature_rejects_nonpositive():
    a = np.full((2, 2), 0.5)
    for t in (0.0, -0.3):
        with pytest.raises(ValidationError):
            apply_temperature(as_tm(a, (1, 2)), t)


def test_temperature_epsilon_floor_handles_zeros():
    a = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    out = apply_temperature(as_tm(a, (1, 2)), 0.65)
    assert np.isfinite(out.data).all()
    assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


# -- IPF ----------------------------------------------------------------------

def test_ipf_uniform_unchanged():
    a = np.full((4, 4), 0.25)
    out = ipf_normalize(as_tm(a, (2, 2)))
    assert out.stochasticity is Stochasticity.DOUBLY
    assert np.allclose(out.data, 0.25, atol=1e-9)


def test_ipf_2x2_matches_sinkhorn():
    a = np.array([[0.6, 0.4], [0.5, 0.5]])
    out = ipf_normalize(as_tm(a, (1, 2)))
    ref = sinkhorn_reference(a, tol=1e-12)
    assert np.abs(out.data - ref).max() <= 1e-4


def test_ipf_sums_within_tolerance():
    rng = np.random.default_rng(2)
    a = row_stochastic(rng, 16)
    out = ipf_normalize(as_tm(a))
    assert np.abs(out.data.sum(axis=1) - 1).max() <= 1e-3
    assert np.abs(out.data.sum(axis=0) - 1).max() <= 1e-3


def test_ipf_matches_sinkhorn_oracle():
    rng = np.random.default_rng(3)
    for n in (4, 16):
        raw = row_stochastic(rng, n)
        tempered = apply_temperature(as_tm(raw, (1, n)), 0.65)
        out = ipf_normalize(tempered)
        ref = sinkhorn_reference(tempered.data.astype(np.float64), tol=1e-12)
        assert np.abs(out.data - ref).max() <= 1e-4


def test_ipf_rejects_bad_input():
    with pytest.raises(ValidationError):
        ipf_normalize(as_tm(np.array([[0.0, 0.0], [0.5, 0.5]]), (1, 2)))  # zero row
    with pytest.raises(ValidationError):
        ipf_normalize(as_tm(np.array([[0.5, -0.5], [0.5, 0.5]]), (1, 2)))
    # a matrix with zero entries but positive row/col sums is fine
    out = ipf_normalize(as_tm(np.eye(2), (1, 2)))
    assert np.array_equal(out.data, np.eye(2))


def test_ipf_convergence_error_reports_residual():
    rng = np.random.default_rng(4)
    a = row_stochastic(rng, 16)
    params = MarkovParams(ipf_tolerance=1e-12, ipf_max_rounds=1)
    with pytest.raises(ConvergenceError) as exc:
        ipf_normalize(as_tm(a), params)
    assert exc.value.residual > 0


def test_ipf_preserves_mass_under_iteration():
    # row sums exact to fp rounding so 1000-step chains keep total mass
    rng = np.random.default_rng(5)
    out = doubly_stochastic(rng, 16)
    assert np.abs(out.data.sum(axis=1, dtype=np.float64) - 1).max() < 1e-12


# -- markov map ---------------------------------------------------------------

def test_uniform_matrix_saturates_immediately():
    n = 9
    a = np.full((n, n), 1.0 / n)
    tm = as_tm(a, (3, 3), Stochasticity.DOUBLY)
    grid = markov_map(tm, start_cell=4)
    assert grid.values[1, 1] == 0.0
    assert grid.crossing[1, 1] == 0
    others = np.ones((3, 3), bool)
    others[1, 1] = False
    # p_1 is exactly uniform: ratio 1 > tau, crossing at t=1, interpolated at tau
    assert np.all(grid.crossing[others] == 1)
    assert np.allclose(grid.values[others], MarkovParams().tau, atol=1e-12)
    assert grid.saturated.all()


def test_identity_matrix_never_saturates():
    # white-box: bypass positivity by building the matrix directly
    n = 4
    tm = as_tm(np.eye(n), (2, 2), Stochasticity.DOUBLY)
    params = MarkovParams(max_iters=50)
    grid = markov_map(tm, start_cell=0, params=params)
    assert grid.values[0, 0] == 0.0
    assert grid.saturated[0, 0]
    rest = grid.values.ravel()[1:]
    assert np.all(rest == params.max_iters)
    assert not grid.saturated.ravel()[1:].any()


def test_requires_doubly_stochastic():
    rng = np.random.default_rng(6)
    a = row_stochastic(rng, 4)
    with pytest.raises(ContractError):
        markov_map(as_tm(a, (2, 2)), 0)


def test_start_cell_bounds():
    rng = np.random.default_rng(7)
    tm = doubly_stochastic(rng, 4)
    for bad in (-1, 4):
        with pytest.raises(ValidationError):
            markov_map(tm, bad)


@pytest.mark.parametrize("n_side", [4, 8])
def test_chain_oracle_agreement(n_side):
    rng = np.random.default_rng(8)
    n = n_side * n_side
    tm = ipf_normalize(apply_temperature(as_tm(row_stochastic(rng, n)), 0.65))
    params = MarkovParams()
    for start in (0, n // 2, n - 1):
        grid = markov_map(tm, start, params)
        vals, crossings = chain_reference(
            tm.data.astype(np.float64), start, params.tau, params.max_iters)
        assert np.array_equal(grid.crossing.ravel(), crossings)
        assert np.abs(grid.values.ravel() - vals).max() <= 1e-5


def test_synthetic_two_region_ordering():
    # in-region cells saturate strictly before out-region cells
    from m2n2.aggregation import aggregate
    from m2n2.tensor_io import SyntheticSpec, generate_synthetic_stack

    part = np.zeros((4, 4), int)
    part[:, 2:] = 1
    spec = SyntheticSpec(h=4, w=4, partition=part, in_region_mass=0.8)
    tm = ipf_normalize(apply_temperature(aggregate(generate_synthetic_stack(spec)), 0.65))
    grid = markov_map(tm, start_cell=0)
    inside = part == 0
    assert grid.values[inside].max() < grid.values[~inside].min()
    vals, crossings = chain_reference(tm.data.astype(np.float64), 0, 0.3, 1000)
    assert np.abs(grid.values.ravel() - vals).max() <= 1e-5


def test_interpolated_values_bracketed():
    rng = np.random.default_rng(9)
    tm = doubly_stochastic(rng, 16)
    grid = markov_map(tm, 3)
    sat = grid.saturated
    t = grid.crossing[sat].astype(float)
    v = grid.values[sat]
    assert np.all(v >= np.maximum(t - 1, 0) - 1e-12)
    assert np.all(v <= t + 1e-12)


def test_mass_preserved_each_step():
    rng = np.random.default_rng(10)
    tm = doubly_stochastic(rng, 16)
    states = chain_states(tm, 0, steps=[0, 1, 5, 20])
    for t, p in states.items():
        assert abs(float(p.sum(dtype=np.float64)) - 1.0) <= 1e-6


def test_entropy_increases_from_onehot():
    rng = np.random.default_rng(11)
    tm = doubly_stochastic(rng, 16)
    states = chain_states(tm, 0, steps=[1])
    p1 = states[1].ravel()
    assert not np.any(p1 == 1.0)  # strictly positive matrix spreads the mass
    assert (p1 > 0).all()


def test_converges_to_uniform():
    rng = np.random.default_rng(12)
    n = 16
    tm = doubly_stochastic(rng, n)
    params = MarkovParams()
    states = chain_states(tm, 0, steps=[10 * n])
    p = states[10 * n].astype(np.float64)
    assert p.max() - p.min() < 10 * params.ipf_tolerance


def test_chain_states_rejects_bad_steps():
    rng = np.random.default_rng(13)
    tm = doubly_stochastic(rng, 4)
    with pytest.raises(ValidationError):
        chain_states(tm, 0, steps=[-1])


@given(st.integers(0, 15), st.integers(0, 2 ** 16))
@settings(max_examples=20, deadline=None)
def test_saturation_monotone_property(start, seed):
    # crossing step never exceeds max_iters; saturated implies finite value
    rng = np.random.default_rng(seed)
    tm = doubly_stochastic(rng, 16)
    grid = markov_map(tm, start)
    assert (grid.values >= 0).all()
    assert grid.values[grid.saturated].max() <= 1000
    assert np.all(grid.values[~grid.saturated] == 1000)


def test_float32_large_matrix_path():
    # matrices above the f64 cell cutoff are stored f32 but the chain still runs
    from m2n2.markov import F64_CELL_LIMIT

    rng = np.random.default_rng(14)
    n = 100  # under the limit; check dtype policy boundary explicitly
    tempered = apply_temperature(as_tm(row_stochastic(rng, n), (10, 10)), 0.65)
    assert tempered.data.dtype == (np.float64 if n <= F64_CELL_LIMIT else np.float32)
    out = ipf_normalize(tempered)
    grid = markov_map(out, 0)
    assert grid.values.dtype == np.float64
    assert grid.saturated.all()
