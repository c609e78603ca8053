import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from arbstyle.errors import NonFiniteError, ShapeError
from arbstyle.optim import AdamState, adam_update


def run(params, grads_seq, **hyper):
    state = AdamState.create(params, **hyper)
    for grads in grads_seq:
        params, state = adam_update(params, grads, state)
    return params, state


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(-5, 5))
def test_matches_scalar_oracle(gs, p0):
    params, state = run({"w": np.array([p0])}, [{"w": np.array([g])} for g in gs])
    ref, p = oracles.ScalarAdam(), p0
    for g in gs:
        p = ref.step(p, g)
    assert state.step == len(gs)
    assert params["w"][0] == pytest.approx(p, rel=1e-12, abs=1e-12)


def test_zero_gradients_leave_parameters_fixed():
    p0 = np.array([1.0, -2.0, 3.0])
    params, _ = run({"w": p0}, [{"w": np.zeros(3)}] * 5)
    np.testing.assert_array_equal(params["w"], p0)


@given(st.lists(st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3), min_size=1, max_size=8))
def test_first_step_is_signed_learning_rate(gs):
    g = np.array(gs)
    params, _ = run({"w": np.zeros_like(g)}, [{"w": g}], lr=0.01)
    np.testing.assert_allclose(params["w"], -0.01 * np.sign(g), rtol=1e-5)


def test_inputs_are_not_mutated():
    params = {"a": np.ones(3), "b": np.zeros(2)}
    state = AdamState.create(params)
    before = {k: v.copy() for k, v in params.items()}
    new, new_state = adam_update(params, {"a": np.ones(3)}, state)
    for k in params:
        np.testing.assert_array_equal(params[k], before[k])
    assert state.step == 0 and np.all(state.m["a"] == 0)
    # only named gradients move
    np.testing.assert_array_equal(new["b"], params["b"])
    assert new_state.step == 1 and not np.array_equal(new["a"], params["a"])


def test_non_finite_gradient_names_parameter():
    params = {"good": np.ones(2), "bad": np.ones(2)}
    state = AdamState.create(params)
    with pytest.raises(NonFiniteError) as info:
        adam_update(params, {"good": np.ones(2), "bad": np.array([1.0, np.nan])}, state)
    assert info.value.name == "bad" and "bad" in str(info.value)


def test_shape_and_name_checks():
    params = {"w": np.ones(2)}
    state = AdamState.create(params)
    with pytest.raises(ShapeError):
        adam_update(params, {"w": np.ones(3)}, state)
    with pytest.raises(KeyError):
        adam_update(params, {"v": np.ones(2)}, state)


def test_float32_parameters_stay_float32():
    params, state = run({"w": np.ones(4, dtype=np.float32)}, [{"w": np.ones(4, dtype=np.float32)}])
    assert params["w"].dtype == np.float32 and state.m["w"].dtype == np.float32
