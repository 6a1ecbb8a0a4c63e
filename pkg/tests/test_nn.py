import numpy as np
import pytest

from iris import nn

TINY = nn.NetConfig(in_channels=4, channels=2, actions=3, dilations=(1, 2, 4), kernel_depth=1)


def tiny_setup(seed, dims=(1, 4, 4)):
    """Random net and batch with pre-activations pushed off the ReLU kinks.

    Finite differences at h=1e-3 are only trustworthy when no ReLU input sits
    within the perturbation radius of zero, so draws are rejected until every
    pre-activation clears a margin.
    """
    rng = np.random.default_rng(seed)
    for attempt in range(500):
        params = nn.init_params(seed * 1000 + attempt, TINY)
        for w, b in params.tensors:
            b += rng.normal(0.0, 0.3, size=b.shape)
        state = rng.normal(size=(TINY.in_channels, *dims))
        _, _, cache = nn.forward(params, state)
        margin = min(float(np.abs(pre).min()) for pre in cache.pre_relu.values())
        if margin > 1e-2:
            break
    else:
        raise RuntimeError("could not find a kink-free configuration")
    actions = rng.integers(0, TINY.actions, size=dims)
    adv = rng.normal(size=dims)
    ret = rng.normal(size=dims)
    return params, state, actions, adv, ret


def losses(params, state, actions, adv, ret):
    pol, val, _ = nn.forward(params, state)
    n = actions.size
    chosen = pol.reshape(TINY.actions, -1)[actions.ravel(), np.arange(n)]
    policy_loss = float(-(np.log(np.clip(chosen, 1e-300, None)) * adv.ravel()).mean())
    value_loss = float(((ret - val) ** 2).mean())
    return policy_loss, value_loss


def numeric_grads(loss_fn, params, rng, per_tensor=8, h=1e-3):
    out = []
    for w, b in params.tensors:
        pair = []
        for arr in (w, b):
            flat = arr.ravel()
            idx = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
            g = {}
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn()
                flat[i] = orig - h
                down = loss_fn()
                flat[i] = orig
                g[int(i)] = (up - down) / (2 * h)
            pair.append(g)
        out.append(pair)
    return out


def max_rel_error(analytic, numeric):
    worst = 0.0
    for (dw, db), (nw, nb) in zip(analytic, numeric):
        for g, num in ((dw, nw), (db, nb)):
            flat = g.ravel()
            for i, val in num.items():
                err = abs(flat[i] - val) / max(1e-6, abs(flat[i]), abs(val))
                worst = max(worst, err)
    return worst


@pytest.mark.parametrize("seed", range(5))
def test_policy_loss_gradients_match_finite_differences(seed):
    params, state, actions, adv, ret = tiny_setup(seed)
    assert params.param_count() <= 5000
    _, val, cache = nn.forward(params, state)
    # returns equal to the value estimate silence the value-loss gradient
    analytic = nn.backward(params, cache, actions, adv, val.copy())
    rng = np.random.default_rng(seed + 1000)
    numeric = numeric_grads(
        lambda: losses(params, state, actions, adv, ret)[0], params, rng
    )
    assert max_rel_error(analytic, numeric) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_value_loss_gradients_match_finite_differences(seed):
    params, state, actions, adv, ret = tiny_setup(seed)
    _, _, cache = nn.forward(params, state)
    analytic = nn.backward(params, cache, actions, np.zeros_like(adv), ret)
    rng = np.random.default_rng(seed + 2000)
    numeric = numeric_grads(
        lambda: losses(params, state, actions, adv, ret)[1], params, rng
    )
    assert max_rel_error(analytic, numeric) < 1e-4


def test_combined_loss_with_entropy_gradients():
    params, state, actions, adv, ret = tiny_setup(11)
    coef = 0.01
    _, _, cache = nn.forward(params, state)
    analytic = nn.backward(params, cache, actions, adv, ret, entropy_coef=coef)

    def combined():
        pol, val, _ = nn.forward(params, state)
        pl, vl = losses(params, state, actions, adv, ret)
        ent = float(-(pol * np.log(np.clip(pol, 1e-300, None))).sum(axis=0).mean())
        return pl + vl - coef * ent

    rng = np.random.default_rng(99)
    numeric = numeric_grads(combined, params, rng, per_tensor=5)
    assert max_rel_error(analytic, numeric) < 1e-4


def test_forward_shapes_and_softmax():
    params = nn.init_params(0, TINY)
    state = np.random.default_rng(0).normal(size=(4, 1, 6, 7))
    policy, value, cache = nn.forward(params, state)
    assert policy.shape == (3, 1, 6, 7)
    assert value.shape == (1, 6, 7)
    np.testing.assert_allclose(policy.sum(axis=0), 1.0, atol=1e-12)
    assert (policy > 0).all()


def test_forward_rejects_wrong_channel_count():
    params = nn.init_params(0, TINY)
    with pytest.raises(ValueError):
        nn.forward(params, np.zeros((3, 1, 4, 4)))


def test_for_dims_picks_flat_kernel():
    assert nn.NetConfig.for_dims((1, 64, 64)).kernel_depth == 1
    assert nn.NetConfig.for_dims((16, 64, 64)).kernel_depth == 3


def test_full_config_is_3d_capable():
    cfg = nn.NetConfig(in_channels=4, channels=2, actions=6)
    params = nn.init_params(1, cfg)
    state = np.random.default_rng(1).normal(size=(4, 4, 5, 5))
    policy, value, _ = nn.forward(params, state)
    assert policy.shape == (6, 4, 5, 5)
    assert value.shape == (4, 5, 5)


def test_init_deterministic():
    a = nn.init_params(7, TINY)
    b = nn.init_params(7, TINY)
    for (wa, ba), (wb, bb) in zip(a.tensors, b.tensors):
        np.testing.assert_array_equal(wa, wb)
        np.testing.assert_array_equal(ba, bb)


def test_checkpoint_roundtrip(tmp_path):
    params = nn.init_params(3, TINY)
    path = tmp_path / "net.ckpt"
    nn.save_checkpoint(params, path, step=17, seed=3, extra={"note": "x"})
    loaded, meta = nn.load_checkpoint(path)
    assert meta["step"] == 17
    assert loaded.cfg == params.cfg
    for (wa, ba), (wb, bb) in zip(params.tensors, loaded.tensors):
        np.testing.assert_array_equal(wa, wb)
        np.testing.assert_array_equal(ba, bb)


def test_policy_value_losses_consistent():
    params, state, actions, adv, ret = tiny_setup(21)
    _, _, cache = nn.forward(params, state)
    pl, vl = nn.policy_value_losses(cache, actions, adv, ret)
    pl2, vl2 = losses(params, state, actions, adv, ret)
    assert pl == pytest.approx(pl2, rel=1e-12)
    assert vl == pytest.approx(vl2, rel=1e-12)
