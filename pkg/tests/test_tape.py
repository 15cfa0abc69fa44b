import numpy as np
import pytest

from intrinsics4d import tape as tp


def test_linear_map_adjoint():
    rng = np.random.default_rng(1)
    t = tp.Tape()
    w = t.leaf(rng.normal(size=(3, 4)), "W")
    x = rng.normal(size=(4, 1))
    y = tp.matmul(w, x)
    g = rng.normal(size=(3, 1))
    grads = t.backward(y, g)
    assert np.allclose(grads["W"], g @ x.T)


def test_zero_output_grad_gives_zero_gradients():
    t = tp.Tape()
    a = t.leaf(np.arange(5.0), "a")
    y = tp.texp(tp.mul(a, a))
    grads = t.backward(y, np.zeros(5))
    assert np.all(grads["a"] == 0.0)


def test_backward_is_linear_in_output_grad():
    rng = np.random.default_rng(2)
    t = tp.Tape()
    a = t.leaf(rng.normal(size=6), "a")
    y = tp.tanh(tp.mul(a, 0.7))
    g = rng.normal(size=6)
    g1 = t.backward(y, g)
    g3 = t.backward(y, 3.0 * g)
    assert np.allclose(3.0 * g1["a"], g3["a"])


def test_gradient_of_sum_equals_sum_of_gradients():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=4)

    def grad_of(fn):
        t = tp.Tape()
        a = t.leaf(vals, "a")
        return t.backward(fn(a), np.asarray(1.0))["a"]

    f1 = lambda a: tp.tsum(tp.mul(a, a))
    f2 = lambda a: tp.tsum(tp.tsin(a))
    both = lambda a: tp.add(tp.tsum(tp.mul(a, a)), tp.tsum(tp.tsin(a)))
    assert np.allclose(grad_of(both), grad_of(f1) + grad_of(f2))


def test_recording_then_discarding_leaves_params_bit_identical():
    vals = np.linspace(-1, 1, 7)
    before = vals.copy()
    t = tp.Tape()
    a = t.leaf(vals, "a")
    y = tp.tsum(tp.sigmoid(tp.mul(a, 3.0)))
    t.backward(y, np.asarray(1.0))
    del t, y, a
    assert np.array_equal(vals, before)


def test_shape_mismatch_rejected():
    t = tp.Tape()
    a = t.leaf(np.ones(3), "a")
    y = tp.mul(a, 2.0)
    with pytest.raises(ValueError):
        t.backward(y, np.ones(4))


def test_shared_parent_accumulation():
    t = tp.Tape()
    a = t.leaf(np.ones(3), "a")
    y = tp.tsum(tp.add(a, a))
    assert np.allclose(t.backward(y, np.asarray(1.0))["a"], 2.0)


def test_take_rows_scatter_adjoint():
    t = tp.Tape()
    table = t.leaf(np.arange(10.0).reshape(5, 2), "tab")
    rows = tp.take_rows(table, np.array([0, 3, 3, 4]))
    y = tp.tsum(tp.mul(rows, np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])))
    g = t.backward(y, np.asarray(1.0))["tab"]
    expected = np.zeros((5, 2))
    expected[0] = 1
    expected[3] = 5  # duplicate gathers accumulate
    expected[4] = 4
    assert np.allclose(g, expected)


def test_overlay_routes_gradients():
    t = tp.Tape()
    base = t.leaf(np.zeros((4, 2)), "base")
    vals = t.leaf(np.ones((2, 2)), "vals")
    out = tp.overlay(base, np.array([1, 3]), vals)
    g = t.backward(out, np.ones((4, 2)))
    assert np.allclose(g["base"], [[1, 1], [0, 0], [1, 1], [0, 0]])
    assert np.allclose(g["vals"], np.ones((2, 2)))


def test_select_and_clip_subgradients():
    t = tp.Tape()
    a = t.leaf(np.array([-2.0, 0.5, 2.0]), "a")
    y = tp.tsum(tp.clip(a, -1.0, 1.0))
    g = t.backward(y, np.asarray(1.0))["a"]
    assert np.allclose(g, [0.0, 1.0, 0.0])


def test_finite_diff_exact_quadratic():
    params = {"x": np.random.default_rng(4).normal(size=8)}

    def fn(t, pv):
        return tp.tsum(tp.mul(pv["x"], pv["x"]))

    err = tp.finite_diff_check(fn, params, probes=8, eps=1e-4)
    assert err < 1e-8


def test_finite_diff_zero_probes_warns():
    with pytest.warns(UserWarning):
        err = tp.finite_diff_check(lambda t, pv: tp.tsum(pv["x"]), {"x": np.ones(2)}, probes=0)
    assert err == 0.0


@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_finite_diff_rejects_nan():
    def fn(t, pv):
        return tp.tlog(tp.tsum(pv["x"]))

    with pytest.raises(tp.GradientNaNError):
        tp.finite_diff_check(fn, {"x": np.array([-1.0, 0.0])}, probes=2)


def test_composite_elementwise_chain_matches_fd():
    rng = np.random.default_rng(5)
    params = {"x": rng.normal(size=12) * 0.5}
    probe_vec = rng.normal(size=12)

    def fn(t, pv):
        x = pv["x"]
        h = tp.tanh(tp.reshape(x, (3, 4)))
        z = tp.mul(tp.sigmoid(h), tp.texp(tp.clip(h, -1.0, 1.0)))
        v = tp.normalize(tp.reshape(z, (12,)) + 0.2)
        return tp.add(tp.dot(v, probe_vec), tp.tsum(tp.softplus(v)))

    err = tp.finite_diff_check(fn, params, probes=12, eps=1e-5)
    assert err < 1e-6


def test_atan2_and_arccos_grads():
    rng = np.random.default_rng(6)
    params = {"y": rng.uniform(0.2, 0.8, 4), "x": rng.uniform(0.3, 0.9, 4)}

    def fn(t, pv):
        return tp.add(
            tp.tsum(tp.arctan2(pv["y"], pv["x"])),
            tp.tsum(tp.arccos(tp.clip(tp.mul(pv["y"], 0.5), -0.9, 0.9))),
        )

    assert tp.finite_diff_check(fn, params, probes=8, eps=1e-6) < 1e-7
