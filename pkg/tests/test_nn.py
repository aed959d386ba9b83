import numpy as np
import numpy.testing as npt
import pytest

from costq import nn
from costq.errors import TrainingDiverged


def constant_head_net(n_features, value, advantages):
    """Net whose heads ignore the input: zero weights, biases set directly.

    With all weights zero the trunk output is constant, so V and A equal the
    head biases for every input row.
    """
    params = nn.init_params(n_features, len(advantages), hidden_sizes=(4, 4, 4),
                            rng=np.random.default_rng(0))
    for block in params.blocks():
        block[...] = 0.0
    params.value.bias[:] = value
    params.advantage.bias[:] = advantages
    return params


def random_net(rng, n_features, n_actions, hidden_sizes):
    """Network with random weights AND biases.

    Zero biases (the training default) can leave pre-activations exactly on
    the ReLU kink, where the subgradient and finite differences legitimately
    disagree; continuous random biases make that a measure-zero event.
    """
    params = nn.init_params(n_features, n_actions, hidden_sizes, rng)
    for layer in [*params.hidden, params.value, params.advantage]:
        layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
    return params


def finite_difference_gradients(params, x, actions, targets, h=1e-6):
    """Central-difference gradient of the batch MSE loss, parameter by parameter."""

    def loss():
        q = nn.forward(params, x)
        diff = q[np.arange(len(actions)), actions] - targets
        return float(np.mean(diff * diff))

    grads = []
    for block in params.blocks():
        g = np.zeros_like(block)
        flat = block.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = loss()
            flat[i] = original - h
            down = loss()
            flat[i] = original
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


class ScalarAdam:
    """Independent reference of the bias-corrected Adam recurrence on one scalar."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = 0.0
        self.v = 0.0
        self.t = 0

    def step(self, param, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------- forward

def test_forward_dueling_identity_case():
    params = constant_head_net(2, value=0.0, advantages=[0.0, 0.0])
    q = nn.forward(params, np.zeros((3, 4)))
    npt.assert_array_equal(q, np.zeros((3, 2)))


def test_forward_zero_mean_advantages():
    params = constant_head_net(2, value=1.0, advantages=[1.0, -1.0])
    q = nn.forward(params, np.zeros((1, 4)))
    npt.assert_allclose(q, [[2.0, 0.0]], atol=1e-15)


def test_forward_combination_arithmetic():
    params = constant_head_net(2, value=-0.5, advantages=[0.3, 0.1, -0.4])
    q = nn.forward(params, np.zeros((1, 4)))
    npt.assert_allclose(q, [[-0.2, -0.4, -0.9]], atol=1e-15)


def test_forward_rejects_bad_width():
    params = nn.init_params(3, 4, (4, 4, 4), np.random.default_rng(0))
    with pytest.raises(ValueError, match="expected"):
        nn.forward(params, np.zeros((2, 5)))


def test_forward_deterministic_bitwise():
    rng = np.random.default_rng(5)
    params = nn.init_params(4, 6, (16, 8, 8), rng)
    x = rng.normal(size=(10, 8))
    first = nn.forward(params, x)
    second = nn.forward(params, x)
    assert np.array_equal(first, second)


def test_dueling_zero_mean_property():
    rng = np.random.default_rng(42)
    params = nn.init_params(5, 7, (16, 8, 8), rng)
    x = rng.normal(size=(1000, 10))
    q, v, _ = nn.forward_components(params, x)
    residual = np.abs((q - v).mean(axis=1))
    assert residual.max() < 1e-10


# ---------------------------------------------------------------- backward

def test_backward_mse_derivative_single_unit():
    # one row, prediction 0.5, target 0: upstream dQ = 2*(0.5-0) = 1.0
    params = constant_head_net(1, value=0.5, advantages=[0.0])
    x = np.zeros((1, 2))
    _, cache = nn.forward_cached(params, x)
    loss, grads = nn.loss_and_gradients(params, x, np.array([0]), np.array([0.0]))
    npt.assert_allclose(loss, 0.25)
    # gradient reaches the value-head bias with exactly that upstream value
    npt.assert_allclose(grads.blocks[7], [1.0])


def test_backward_zero_at_minimum():
    rng = np.random.default_rng(1)
    params = nn.init_params(3, 4, (8, 8, 8), rng)
    x = rng.normal(size=(6, 6))
    actions = rng.integers(4, size=6)
    q = nn.forward(params, x)
    targets = q[np.arange(6), actions]
    loss, grads = nn.loss_and_gradients(params, x, actions, targets)
    assert loss == 0.0
    for block in grads.blocks:
        npt.assert_array_equal(block, np.zeros_like(block))


def test_backward_rejects_non_finite_target():
    rng = np.random.default_rng(2)
    params = nn.init_params(2, 3, (4, 4, 4), rng)
    with pytest.raises(ValueError, match="non-finite"):
        nn.backward(params, np.zeros((1, 4)), np.array([0]), np.array([np.nan]))


def test_backward_matches_finite_differences_small_net():
    rng = np.random.default_rng(99)
    params = random_net(rng, 2, 2, (4, 4, 4))
    x = rng.normal(size=(8, 4))
    actions = rng.integers(2, size=8)
    targets = rng.normal(size=8)
    _, grads = nn.loss_and_gradients(params, x, actions, targets)
    numeric = finite_difference_gradients(params, x, actions, targets)
    for analytic, fd in zip(grads.blocks, numeric):
        err = np.abs(analytic - fd) / np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(fd)))
        assert err.max() < 1e-5


# ---------------------------------------------------------------- clipping

def test_clip_below_threshold_unchanged():
    g = nn.GradientSet([np.array([0.3, 0.4])])  # norm 0.5
    before = g.blocks[0].copy()
    nn.clip_gradient_norm(g, 1.0)
    npt.assert_array_equal(g.blocks[0], before)


def test_clip_scaling_arithmetic():
    g = nn.GradientSet([np.array([3.0]), np.array([4.0])])  # norm 5
    nn.clip_gradient_norm(g, 1.0)
    npt.assert_allclose(g.blocks[0], [0.6])
    npt.assert_allclose(g.blocks[1], [0.8])


def test_clip_zero_vector():
    g = nn.GradientSet([np.zeros(4)])
    nn.clip_gradient_norm(g, 1.0)
    npt.assert_array_equal(g.blocks[0], np.zeros(4))


def test_clip_norm_and_direction_property():
    rng = np.random.default_rng(3)
    for _ in range(50):
        blocks = [rng.normal(size=s) * rng.uniform(0.1, 10)
                  for s in [(3, 2), (2,), (4,)]]
        g = nn.GradientSet([b.copy() for b in blocks])
        nn.clip_gradient_norm(g, 1.0)
        assert g.global_norm() <= 1.0 + 1e-12
        flat_before = np.concatenate([b.ravel() for b in blocks])
        flat_after = np.concatenate([b.ravel() for b in g.blocks])
        norm_b = np.linalg.norm(flat_before)
        if norm_b > 0:
            cosine = flat_before @ flat_after / (norm_b * np.linalg.norm(flat_after))
            assert abs(cosine - 1.0) < 1e-12


# ---------------------------------------------------------------- adam

def test_adam_zero_gradient_is_stationary(small_net):
    adam = nn.AdamState.for_params(small_net)
    before = [b.copy() for b in small_net.blocks()]
    nn.adam_step(small_net, adam, nn.GradientSet.zeros_like(small_net), lr=0.01)
    assert adam.step_count == 1
    for b, ref in zip(small_net.blocks(), before):
        npt.assert_array_equal(b, ref)


def test_adam_first_step_magnitude():
    # scalar g=1 at t=1: bias correction gives m_hat/sqrt(v_hat) ~= 1,
    # so the parameter moves by ~lr
    params = constant_head_net(1, value=0.0, advantages=[0.0])
    adam = nn.AdamState.for_params(params)
    g = nn.GradientSet.zeros_like(params)
    g.blocks[7][:] = 1.0  # value-head bias
    before = params.value.bias.copy()
    nn.adam_step(params, adam, g, lr=0.001)
    delta = params.value.bias[0] - before[0]
    npt.assert_allclose(delta, -0.001, rtol=1e-6)


def test_adam_matches_scalar_reference():
    params = constant_head_net(1, value=0.2, advantages=[0.0])
    adam = nn.AdamState.for_params(params)
    oracle = ScalarAdam()
    value = 0.2
    rng = np.random.default_rng(11)
    for _ in range(25):
        grad = float(rng.normal())
        value = oracle.step(value, grad, lr=0.01)
        g = nn.GradientSet.zeros_like(params)
        g.blocks[7][:] = grad
        nn.adam_step(params, adam, g, lr=0.01)
        npt.assert_allclose(params.value.bias[0], value, rtol=1e-12, atol=1e-15)


def test_adam_two_small_steps_differ_from_one_double_step():
    # moments evolve between the steps, so the updates do not merge
    def run(grads):
        params = constant_head_net(1, value=0.0, advantages=[0.0])
        adam = nn.AdamState.for_params(params)
        for grad in grads:
            g = nn.GradientSet.zeros_like(params)
            g.blocks[7][:] = grad
            nn.adam_step(params, adam, g, lr=0.01)
        return params.value.bias[0]

    assert run([1.0, 1.0]) != run([2.0])


def test_adam_rejects_non_finite_gradient(small_net):
    adam = nn.AdamState.for_params(small_net)
    g = nn.GradientSet.zeros_like(small_net)
    g.blocks[0][0, 0] = np.inf
    with pytest.raises(TrainingDiverged, match="hidden1.weight"):
        nn.adam_step(small_net, adam, g, lr=0.01)


# ---------------------------------------------------------------- soft update

def test_soft_update_full_copy(small_net):
    target = nn.init_params(3, 5, (8, 6, 4), np.random.default_rng(77))
    nn.soft_update(target, small_net, rho=1.0)
    for t, o in zip(target.blocks(), small_net.blocks()):
        npt.assert_array_equal(t, o)


def test_soft_update_noop(small_net):
    target = nn.init_params(3, 5, (8, 6, 4), np.random.default_rng(77))
    before = [b.copy() for b in target.blocks()]
    nn.soft_update(target, small_net, rho=0.0)
    for t, ref in zip(target.blocks(), before):
        npt.assert_array_equal(t, ref)


def test_soft_update_default_factor():
    # target 0, online 1, rho=0.1 (the reference update factor) -> 0.1
    target = constant_head_net(1, value=0.0, advantages=[0.0])
    online = constant_head_net(1, value=1.0, advantages=[0.0])
    nn.soft_update(target, online, rho=0.1)
    npt.assert_allclose(target.value.bias, [0.1])


def test_soft_update_affine_exact(small_net):
    rng = np.random.default_rng(31)
    target = nn.init_params(3, 5, (8, 6, 4), rng)
    snapshot = [b.copy() for b in target.blocks()]
    rho = 0.37
    nn.soft_update(target, small_net, rho)
    for t, phi0, theta in zip(target.blocks(), snapshot, small_net.blocks()):
        npt.assert_array_equal(t, (1.0 - rho) * phi0 + rho * theta)
