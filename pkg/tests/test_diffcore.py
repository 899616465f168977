import numpy as np
import pytest

from mitgnn import diffcore as dc
from mitgnn.errors import NumericError, ShapeError


def matmul_oracle(a, b):
    # element-wise triple loop, no numpy matmul
    n, k = a.shape
    _, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def test_matmul_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 4))
    out = dc.matmul(dc.Tensor(np.eye(4)), dc.Tensor(x))
    np.testing.assert_array_equal(out.value, x)


def test_matmul_transpose_identity_vs_triple_loop():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    ab = dc.matmul(dc.Tensor(a), dc.Tensor(b)).value
    np.testing.assert_allclose(ab, matmul_oracle(a, b), atol=1e-12)
    # (AB)^T == B^T A^T
    btat = dc.matmul(dc.Tensor(b.T.copy()), dc.Tensor(a.T.copy())).value
    np.testing.assert_allclose(ab.T, btat, atol=1e-12)
    np.testing.assert_allclose(btat, matmul_oracle(b.T, a.T), atol=1e-12)


def test_shape_errors_name_both_shapes():
    a = dc.Tensor(np.zeros((2, 3)))
    b = dc.Tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeError, match=r"\(2, 3\) x \(2, 3\)"):
        dc.matmul(a, b)
    c = dc.Tensor(np.zeros((3, 2)))
    with pytest.raises(ShapeError, match=r"\(2, 3\) vs \(3, 2\)"):
        dc.add(a, c)


def test_mean_rows_of_equal_rows_is_that_row():
    row = np.array([1.5, -2.0, 0.25])
    x = dc.Tensor(np.vstack([row, row]))
    np.testing.assert_array_equal(dc.mean_rows(x).value[0], row)


def test_leaky_relu_values():
    x = dc.Tensor([[2.0, -1.0, 0.0]])
    y = dc.leaky_relu(x, 0.2).value[0]
    np.testing.assert_allclose(y, [2.0, -0.2, 0.0], atol=0)


def test_leaky_relu_slope_bounds():
    with pytest.raises(ValueError):
        dc.leaky_relu(dc.Tensor([[1.0]]), 1.0)


def test_softmax_examples():
    equal = dc.softmax_rows(dc.Tensor([[3.0, 3.0, 3.0, 3.0]]))
    np.testing.assert_allclose(equal.value[0], [0.25] * 4, atol=1e-15)
    single = dc.softmax_rows(dc.Tensor([[-7.3]]))
    assert single.value[0, 0] == 1.0
    # logits (0, ln 3): e^0 / (e^0 + 3) = 0.25
    pair = dc.softmax_rows(dc.Tensor([[0.0, np.log(3.0)]]))
    np.testing.assert_allclose(pair.value[0], [0.25, 0.75], atol=1e-14)


def test_softmax_rows_sum_to_one_and_positive():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = dc.Tensor(rng.normal(scale=30.0, size=(6, 5)))
        s = dc.softmax_rows(x).value
        assert (s > 0.0).all()
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_l2_normalize_basics():
    out = dc.l2_normalize_rows(dc.Tensor([[3.0, 4.0]])).value[0]
    np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-15)
    zero = dc.l2_normalize_rows(dc.Tensor([[0.0, 0.0]])).value[0]
    np.testing.assert_array_equal(zero, [0.0, 0.0])


def test_l2_normalize_idempotent():
    rng = np.random.default_rng(6)
    for _ in range(20):
        x = dc.Tensor(rng.normal(size=(5, 4)) * rng.uniform(0.1, 50))
        once = dc.l2_normalize_rows(x).value
        twice = dc.l2_normalize_rows(dc.Tensor(once)).value
        np.testing.assert_allclose(twice, once, atol=1e-12)


def test_dropout_mask():
    rng = np.random.default_rng(7)
    ones = dc.dropout_mask((3, 3), 0.0, rng)
    np.testing.assert_array_equal(ones.value, np.ones((3, 3)))
    mask = dc.dropout_mask((1000, 1000), 0.5, rng).value
    assert set(np.unique(mask)) == {0.0, 2.0}
    kept = (mask > 0).mean()
    assert abs(kept - 0.5) < 0.01  # 1e6 entries, law of large numbers
    with pytest.raises(ValueError):
        dc.dropout_mask((2, 2), 1.0, rng)


def test_log_sigmoid_values():
    x = np.array([[-30.0, -1.0, 0.0, 1.0, 30.0]])
    out = dc.log_sigmoid(dc.Tensor(x)).value[0]
    # moderate values against the direct formula
    np.testing.assert_allclose(out[1:4], np.log(1.0 / (1.0 + np.exp(-x[0, 1:4]))),
                               atol=1e-14)
    assert abs(out[2] - np.log(0.5)) < 1e-15
    # stable in the tails: no overflow, right asymptotics
    assert -30.001 < out[0] < -29.999
    assert -1e-12 < out[4] < 0.0


def test_non_finite_rejected():
    with pytest.raises(NumericError):
        dc.Tensor([[np.nan, 0.0]])
    with pytest.raises(NumericError):
        dc.Tensor([[np.inf]])


def test_backward_trivials():
    p = dc.Param("x", [[1.0, 2.0], [3.0, 4.0]])
    dc.backward(dc.sum_all(p))
    np.testing.assert_array_equal(p.grad, np.ones((2, 2)))

    p.zero_grad()
    dc.backward(dc.sum_all(dc.mul(p, p)))  # x^T x -> 2x
    np.testing.assert_allclose(p.grad, 2.0 * p.value, atol=1e-15)


def test_backward_accumulates_until_zeroed():
    p = dc.Param("x", [[2.0, -1.0]])
    dc.backward(dc.sum_all(p))
    dc.backward(dc.sum_all(p))
    np.testing.assert_array_equal(p.grad, 2.0 * np.ones((1, 2)))
    p.zero_grad()
    np.testing.assert_array_equal(p.grad, np.zeros((1, 2)))


def test_backward_requires_scalar_root():
    p = dc.Param("x", [[1.0, 2.0]])
    with pytest.raises(ValueError, match="scalar"):
        dc.backward(dc.scale(p, 2.0))


def test_backward_deterministic():
    rng = np.random.default_rng(8)
    p = dc.Param("w", rng.normal(size=(5, 4)))
    q = dc.Param("u", rng.normal(size=(4, 3)))

    def run():
        p.zero_grad()
        q.zero_grad()
        loss = dc.sum_all(dc.leaky_relu(dc.matmul(p, q), 0.2))
        dc.backward(loss)
        return p.grad.copy(), q.grad.copy()

    g1p, g1q = run()
    g2p, g2q = run()
    assert (g1p == g2p).all() and (g1q == g2q).all()


# ---------------------------------------------------------------------------
# per-primitive gradient checks against central differences


def _weighted_loss(out, seed=99):
    # random fixed weighting makes the scalar sensitive to every entry
    rng = np.random.default_rng(seed)
    w = dc.Tensor(rng.normal(size=out.shape))
    return dc.sum_all(dc.mul(out, w))


def _param(rng, shape, away_from_zero=False):
    v = rng.normal(size=shape)
    if away_from_zero:
        v = np.sign(v) * (np.abs(v) + 0.3)
    return dc.Param("p", v)


def _fd_case(name, rng):
    if name == "matmul":
        a, b = _param(rng, (3, 4)), _param(rng, (4, 2))
        return [a, b], lambda: _weighted_loss(dc.matmul(a, b))
    if name == "add":
        a, b = _param(rng, (3, 3)), _param(rng, (3, 3))
        return [a, b], lambda: _weighted_loss(dc.add(a, b))
    if name == "sub":
        a, b = _param(rng, (3, 3)), _param(rng, (3, 3))
        return [a, b], lambda: _weighted_loss(dc.sub(a, b))
    if name == "mul":
        a, b = _param(rng, (3, 3)), _param(rng, (3, 3))
        return [a, b], lambda: _weighted_loss(dc.mul(a, b))
    if name == "scale":
        a = _param(rng, (4, 3))
        return [a], lambda: _weighted_loss(dc.scale(a, -1.7))
    if name == "scale_rows":
        a, c = _param(rng, (4, 3)), _param(rng, (4, 1))
        return [a, c], lambda: _weighted_loss(dc.scale_rows(a, c))
    if name == "concat_rows":
        a, b = _param(rng, (2, 3)), _param(rng, (3, 3))
        return [a, b], lambda: _weighted_loss(dc.concat_rows([a, b]))
    if name == "concat_cols":
        a, b = _param(rng, (3, 2)), _param(rng, (3, 4))
        return [a, b], lambda: _weighted_loss(dc.concat_cols([a, b]))
    if name == "slice_cols":
        a = _param(rng, (3, 5))
        return [a], lambda: _weighted_loss(dc.slice_cols(a, 1, 4))
    if name == "gather_rows":
        a = _param(rng, (4, 3))
        idx = [2, 0, 2, 3]  # repeated row on purpose
        return [a], lambda: _weighted_loss(dc.gather_rows(a, idx))
    if name == "segment_sum":
        a = _param(rng, (5, 3))
        rows = [0, 1, 1, 4, 3]
        segs = [0, 0, 2, 2, 1]
        return [a], lambda: _weighted_loss(dc.segment_sum(a, rows, segs, 4))
    if name == "sum_rows":
        a = _param(rng, (5, 3))
        return [a], lambda: _weighted_loss(dc.sum_rows(a))
    if name == "mean_rows":
        a = _param(rng, (5, 3))
        return [a], lambda: _weighted_loss(dc.mean_rows(a))
    if name == "sum_all":
        a = _param(rng, (4, 4))
        return [a], lambda: dc.sum_all(a)
    if name == "repeat_rows":
        a = _param(rng, (1, 4))
        return [a], lambda: _weighted_loss(dc.repeat_rows(a, 5))
    if name == "rowdot":
        a, b = _param(rng, (4, 3)), _param(rng, (4, 3))
        return [a, b], lambda: _weighted_loss(dc.rowdot(a, b))
    if name == "leaky_relu":
        a = _param(rng, (4, 4), away_from_zero=True)
        return [a], lambda: _weighted_loss(dc.leaky_relu(a, 0.2))
    if name == "softmax_rows":
        a = _param(rng, (4, 5))
        return [a], lambda: _weighted_loss(dc.softmax_rows(a))
    if name == "l2_normalize_rows":
        a = _param(rng, (4, 4), away_from_zero=True)
        return [a], lambda: _weighted_loss(dc.l2_normalize_rows(a))
    if name == "log_sigmoid":
        a = _param(rng, (4, 4))
        return [a], lambda: _weighted_loss(dc.log_sigmoid(a))
    raise AssertionError(name)


PRIMITIVES = ["matmul", "add", "sub", "mul", "scale", "scale_rows",
              "concat_rows", "concat_cols", "slice_cols", "gather_rows",
              "segment_sum", "sum_rows", "mean_rows", "sum_all",
              "repeat_rows", "rowdot", "leaky_relu", "softmax_rows",
              "l2_normalize_rows", "log_sigmoid"]


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitive_gradients_match_central_differences(name):
    rng = np.random.default_rng(hash(name) % (2 ** 32))
    params, loss_fn = _fd_case(name, rng)
    for k, p in enumerate(params):
        p.name = f"{name}.{k}"
    report = dc.finite_difference_check(loss_fn, params, step=1e-6)
    assert max(report.values()) < 1e-6, report
