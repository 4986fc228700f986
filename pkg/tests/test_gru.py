"""Recurrent encoder: forward semantics and exact backpropagation.

Every analytic gradient is checked against central finite differences
(step 1e-5, double precision, relative error <= 1e-4).
"""

from __future__ import annotations

import numpy as np
import pytest

from threatkg.errors import ContractError, ShapeError
from threatkg.gru import (
    GATE_NAMES,
    GruLayer,
    GruParams,
    bigru_backward,
    bigru_forward,
    bigru_forward_cached,
    gru_backward,
    gru_forward,
)

from conftest import FD_RTOL, fd_gradient, rel_err

D, H = 3, 4


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# --------------------------------------------------------------------------
# Forward semantics
# --------------------------------------------------------------------------


def test_single_step_matches_hand_rolled_equations(rng):
    params = GruParams.init(D, H, rng)
    x = rng.normal(size=(1, D))
    h, _ = gru_forward(params, x)

    z = sigmoid(params.w_z @ x[0] + params.b_z)  # h_prev = 0
    r = sigmoid(params.w_r @ x[0] + params.b_r)
    c = np.tanh(params.w_c @ x[0] + params.u_c @ (r * 0.0) + params.b_c)
    expected = (1.0 - z) * 0.0 + z * c
    np.testing.assert_allclose(h[0], expected, atol=1e-12)


def test_two_step_recurrence(rng):
    params = GruParams.init(D, H, rng)
    x = rng.normal(size=(2, D))
    h, _ = gru_forward(params, x)

    h0 = h[0]
    z = sigmoid(params.w_z @ x[1] + params.u_z @ h0 + params.b_z)
    r = sigmoid(params.w_r @ x[1] + params.u_r @ h0 + params.b_r)
    c = np.tanh(params.w_c @ x[1] + params.u_c @ (r * h0) + params.b_c)
    np.testing.assert_allclose(h[1], (1.0 - z) * h0 + z * c, atol=1e-12)


def test_zero_input_zero_bias_is_fixed_point():
    # with b = 0 and x = 0: z = r = 1/2, c = tanh(u_c (h/2)); from h0 = 0
    # the candidate is 0, so the state never leaves the origin.
    params = GruParams.zeros(D, H)
    h, _ = gru_forward(params, np.zeros((5, D)))
    np.testing.assert_allclose(h, 0.0, atol=0)


def test_states_are_bounded(rng):
    params = GruParams.init(D, H, rng)
    h, _ = gru_forward(params, rng.normal(size=(20, D)) * 10)
    # h is a convex combination of 0 and tanh values, hence in (-1, 1)
    assert np.all(np.abs(h) < 1.0)


def test_forward_shape_validation(rng):
    params = GruParams.init(D, H, rng)
    with pytest.raises(ShapeError):
        gru_forward(params, np.zeros((4, D + 1)))
    with pytest.raises(ShapeError):
        gru_forward(params, np.zeros(D))


def test_bigru_output_layout(rng):
    layer = GruLayer.init(D, H, rng)
    x = rng.normal(size=(6, D))
    out = bigru_forward(layer, x)
    assert out.shape == (6, 2 * H)

    h_fwd, _ = gru_forward(layer.forward, x)
    h_bwd, _ = gru_forward(layer.backward, x[::-1])
    np.testing.assert_allclose(out[:, :H], h_fwd, atol=0)
    np.testing.assert_allclose(out[:, H:], h_bwd[::-1], atol=0)


def test_bigru_reversal_symmetry(rng):
    # running a layer with swapped directions on reversed input mirrors
    # the original output (forward block <-> backward block, time flipped)
    layer = GruLayer.init(D, H, rng)
    swapped = GruLayer(forward=layer.backward, backward=layer.forward)
    x = rng.normal(size=(5, D))
    out = bigru_forward(layer, x)
    mirrored = bigru_forward(swapped, x[::-1])
    np.testing.assert_allclose(out[:, :H], mirrored[::-1, H:], atol=0)
    np.testing.assert_allclose(out[:, H:], mirrored[::-1, :H], atol=0)


def test_bigru_rejects_nonfinite(rng):
    layer = GruLayer.init(D, H, rng)
    bad = np.zeros((3, D))
    bad[1, 0] = np.nan
    with pytest.raises(ShapeError):
        bigru_forward(layer, bad)


# --------------------------------------------------------------------------
# Backward pass vs finite differences
# --------------------------------------------------------------------------


def quadratic_loss(h: np.ndarray) -> float:
    """A smooth scalar readout with a dense, position-dependent gradient."""
    T, W = h.shape
    weights = np.linspace(0.5, 1.5, T * W).reshape(T, W)
    return float(np.sum(weights * h * h))


def quadratic_upstream(h: np.ndarray) -> np.ndarray:
    T, W = h.shape
    weights = np.linspace(0.5, 1.5, T * W).reshape(T, W)
    return 2.0 * weights * h


def test_single_direction_gradients_match_fd(rng):
    params = GruParams.init(D, H, rng)
    x = rng.normal(size=(5, D))

    h, cache = gru_forward(params, x)
    grads, d_inputs = gru_backward(params, cache, quadratic_upstream(h))

    for name in GATE_NAMES:
        tensor = getattr(params, name)

        def loss_at(_arr, _name=name):
            out, _ = gru_forward(params, x)
            return quadratic_loss(out)

        numeric = fd_gradient(loss_at, tensor)
        assert rel_err(getattr(grads, name), numeric) <= FD_RTOL, name

    numeric_inputs = fd_gradient(lambda a: quadratic_loss(gru_forward(params, x)[0]), x)
    assert rel_err(d_inputs, numeric_inputs) <= FD_RTOL


def test_bigru_gradients_match_fd_all_tensors(rng):
    layer = GruLayer.init(D, H, rng)
    x = rng.normal(size=(4, D))

    out, cache = bigru_forward_cached(layer, x)
    grads, d_inputs = bigru_backward(layer, cache, quadratic_upstream(out))
    assert set(grads) == set(layer.parameters())

    tensors = layer.parameters()
    for name, tensor in tensors.items():

        def loss_at(_arr, _name=name):
            return quadratic_loss(bigru_forward(layer, x))

        numeric = fd_gradient(loss_at, tensor)
        assert rel_err(grads[name], numeric) <= FD_RTOL, name

    numeric_inputs = fd_gradient(lambda a: quadratic_loss(bigru_forward(layer, x)), x)
    assert rel_err(d_inputs, numeric_inputs) <= FD_RTOL


def test_gradients_accumulate_over_long_sequence(rng):
    # T = 12 exercises genuine backpropagation through time, not just the
    # per-step chain rule.
    layer = GruLayer.init(2, 3, rng)
    x = rng.normal(size=(12, 2))
    out, cache = bigru_forward_cached(layer, x)
    grads, _ = bigru_backward(layer, cache, quadratic_upstream(out))
    numeric = fd_gradient(
        lambda a: quadratic_loss(bigru_forward(layer, x)), layer.forward.u_c
    )
    assert rel_err(grads["gru.fwd.u_c"], numeric) <= FD_RTOL


def test_t_equals_one_gradients(rng):
    layer = GruLayer.init(D, H, rng)
    x = rng.normal(size=(1, D))
    out, cache = bigru_forward_cached(layer, x)
    grads, d_inputs = bigru_backward(layer, cache, quadratic_upstream(out))
    numeric = fd_gradient(lambda a: quadratic_loss(bigru_forward(layer, x)), x)
    assert rel_err(d_inputs, numeric) <= FD_RTOL
    # recurrent weights receive zero gradient when there is no history
    np.testing.assert_allclose(grads["gru.fwd.u_z"], 0.0, atol=1e-12)
    np.testing.assert_allclose(grads["gru.bwd.u_z"], 0.0, atol=1e-12)


def test_backward_contract_checks(rng):
    params = GruParams.init(D, H, rng)
    other = GruParams.init(D, H, rng)
    x = rng.normal(size=(3, D))
    h, cache = gru_forward(params, x)
    with pytest.raises(ContractError):
        gru_backward(other, cache, np.zeros_like(h))
    with pytest.raises(ShapeError):
        gru_backward(params, cache, np.zeros((3, H + 1)))

    layer = GruLayer.init(D, H, rng)
    out, bicache = bigru_forward_cached(layer, x)
    with pytest.raises(ShapeError):
        bigru_backward(layer, bicache, np.zeros((3, H)))
    with pytest.raises(ContractError):
        bigru_backward(GruLayer.init(D, H, rng), bicache, np.zeros_like(out))


# --------------------------------------------------------------------------
# Parameter plumbing
# --------------------------------------------------------------------------


def test_parameter_dict_layout(rng):
    layer = GruLayer.init(D, H, rng)
    params = layer.parameters()
    assert sorted(params) == sorted(
        f"gru.{direction}.{name}" for direction in ("fwd", "bwd") for name in GATE_NAMES
    )
    assert params["gru.fwd.w_z"].shape == (H, D)
    assert params["gru.fwd.u_c"].shape == (H, H)
    assert params["gru.bwd.b_r"].shape == (H,)
    # live views: updating through the dict moves the layer
    params["gru.fwd.b_z"][:] = 7.0
    np.testing.assert_allclose(layer.forward.b_z, 7.0)


def test_from_parameters_round_trip(rng):
    layer = GruLayer.init(D, H, rng)
    rebuilt = GruLayer.from_parameters(layer.parameters())
    x = rng.normal(size=(4, D))
    np.testing.assert_allclose(
        bigru_forward(rebuilt, x), bigru_forward(layer, x), atol=0
    )


def test_init_is_seeded(rng):
    a = GruLayer.init(D, H, np.random.default_rng(9))
    b = GruLayer.init(D, H, np.random.default_rng(9))
    for name, tensor in a.parameters().items():
        np.testing.assert_array_equal(tensor, b.parameters()[name])


def test_layer_dims(rng):
    layer = GruLayer.init(D, H, rng)
    assert layer.input_dim == D
    assert layer.hidden_dim == H
    assert layer.output_dim == 2 * H
