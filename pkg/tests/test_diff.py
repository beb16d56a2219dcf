"""Tests for the forward-mode scalar/complex/vector substrate."""

import numpy as np
import pytest

from raywave import diff
from raywave.diff import DiffComplex, DiffScalar, Vec3, cexp_i, lift
from raywave.errors import ConfigurationError, NumericDomainError


def test_lift_constant():
    s = lift(2.0)
    assert s.item() == 2.0
    assert s.tangent is None


def test_lift_seeds_unit_basis():
    s = lift(3.5, 0, n_params=2)
    assert s.item() == 3.5
    np.testing.assert_array_equal(s.tangent, [1.0, 0.0])
    t = lift(0.0, 1, n_params=2)
    np.testing.assert_array_equal(t.tangent, [0.0, 1.0])


def test_lift_index_out_of_range():
    with pytest.raises(ConfigurationError):
        lift(1.0, 2, n_params=2)
    with pytest.raises(ConfigurationError):
        lift(1.0, 0, n_params=0)


def test_square_derivative():
    x = lift(3.0, 0, n_params=1)
    y = x * x
    assert y.item() == 9.0
    assert y.tangent[0] == pytest.approx(6.0)


def test_sqrt_derivative():
    x = lift(4.0, 0, n_params=1)
    y = diff.sqrt(x)
    assert y.item() == 2.0
    assert y.tangent[0] == pytest.approx(0.25)


def test_sin_derivative_at_zero():
    x = lift(0.0, 0, n_params=1)
    y = diff.sin(x)
    assert y.item() == 0.0
    assert y.tangent[0] == pytest.approx(1.0)


def test_domain_errors_name_the_op():
    with pytest.raises(NumericDomainError) as err:
        diff.sqrt(DiffScalar(-1.0))
    assert err.value.op == "sqrt"
    with pytest.raises(NumericDomainError) as err:
        DiffScalar(1.0) / DiffScalar(0.0)
    assert err.value.op == "div"


def test_cexp_i_identities():
    z = cexp_i(DiffScalar(0.0))
    assert z.re.item() == 1.0 and z.im.item() == 0.0
    z = cexp_i(DiffScalar(2.0 * np.pi))
    assert z.re.item() == pytest.approx(1.0, abs=1e-12)
    assert z.im.item() == pytest.approx(0.0, abs=1e-12)
    z = cexp_i(DiffScalar(np.pi / 2.0))
    assert z.re.item() == pytest.approx(0.0, abs=1e-12)
    assert z.im.item() == pytest.approx(1.0, abs=1e-12)


def test_cexp_i_tangent():
    phase = lift(0.3, 0, n_params=1)
    z = cexp_i(phase)
    assert z.re.tangent[0] == pytest.approx(-np.sin(0.3))
    assert z.im.tangent[0] == pytest.approx(np.cos(0.3))


def _random_composite(x, a):
    # mildly nasty composite touching most ops
    return (
        diff.sin(x * a)
        + diff.sqrt(x * x + 1.5)
        - diff.exp(-x) * diff.cos(a + x)
        + diff.atan2(x, a + 2.5)
        + diff.absolute(x - 0.7) * 0.25
        + (x * x + 2.0) ** 1.5 / (a + 3.0)
        + diff.tan(x * 0.3)
    )


def test_tangent_matches_finite_differences():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        x0 = rng.uniform(0.2, 2.0)
        a0 = rng.uniform(0.5, 1.5)
        x = lift(x0, 0, n_params=1)
        got = _random_composite(x, DiffScalar(a0)).tangent[0]
        h = 1e-6 * max(1.0, abs(x0))
        fp = _random_composite(DiffScalar(x0 + h), DiffScalar(a0)).item()
        fm = _random_composite(DiffScalar(x0 - h), DiffScalar(a0)).item()
        fd = (fp - fm) / (2 * h)
        rel = abs(got - fd) / max(1e-12, abs(fd))
        worst = max(worst, rel)
    assert worst < 1e-5


def test_vectorized_matches_scalar():
    xs = np.linspace(0.3, 1.7, 11)
    batch = DiffScalar(xs, np.ones((1, 11)))
    out = _random_composite(batch, DiffScalar(0.9))
    for i, x0 in enumerate(xs):
        single = _random_composite(lift(x0, 0, n_params=1), DiffScalar(0.9))
        assert out.value[i] == pytest.approx(single.item(), rel=1e-14)
        assert out.tangent[0, i] == pytest.approx(single.tangent[0], rel=1e-12)


def test_complex_mul_associative_and_modulus():
    rng = np.random.default_rng(7)
    for _ in range(20):
        zr, zi, wr, wi, vr, vi = rng.normal(size=6)
        z = DiffComplex(zr, zi)
        w = DiffComplex(wr, wi)
        v = DiffComplex(vr, vi)
        lhs = (z * w) * v
        rhs = z * (w * v)
        assert lhs.re.item() == pytest.approx(rhs.re.item(), abs=1e-12)
        assert lhs.im.item() == pytest.approx(rhs.im.item(), abs=1e-12)
        assert (z * w).abs().item() == pytest.approx(z.abs().item() * w.abs().item(), abs=1e-12)


def test_unit_normalization_idempotent():
    v = Vec3(DiffScalar(1.0), DiffScalar(2.0), DiffScalar(-0.5)).normalized()
    w = v.normalized()
    assert abs(v.norm().item() - 1.0) < 1e-12
    assert abs(w.x.item() - v.x.item()) < 1e-15
    assert abs(w.norm().item() - 1.0) < 1e-12


def test_where_selects_tangents():
    a = lift(np.array([1.0, 2.0]), 0, n_params=1)
    b = diff.constant(np.array([5.0, 6.0]))
    out = diff.where(np.array([True, False]), a, b)
    np.testing.assert_array_equal(out.value, [1.0, 6.0])
    np.testing.assert_array_equal(out.tangent[0], [1.0, 0.0])


def test_mixed_tangent_widths_rejected():
    a = lift(1.0, 0, n_params=1)
    b = lift(1.0, 0, n_params=2)
    with pytest.raises(ConfigurationError):
        _ = a + b


def test_dsum_dmean_dmax():
    x = DiffScalar(np.array([[1.0, 2.0], [3.0, 4.0]]), np.ones((2, 2, 2)))
    assert diff.dsum(x).item() == 10.0
    np.testing.assert_array_equal(diff.dsum(x, axis=0).value, [4.0, 6.0])
    assert diff.dmean(x).item() == 2.5
    m = diff.dmax(x)
    assert m.item() == 4.0
    np.testing.assert_array_equal(m.tangent, [1.0, 1.0])


def test_broadcast_scalar_param_with_array():
    c = lift(0.01, 0, n_params=1)  # scalar parameter
    r = diff.constant(np.linspace(0.0, 1.0, 5))  # array of positions
    out = c * r * r
    assert out.shape == (5,)
    np.testing.assert_allclose(out.tangent[0], r.value**2)
