import numpy as np
import pytest

from dememlab.errors import DomainError, ShapeError
from dememlab.params import ParameterVector, gaussian_perturb, l2_project
from dememlab.rng import RngStream

LAYOUT = [("W", (2,)), ("b", (1,))]


def pv(*values):
    return ParameterVector(np.array(values, dtype=float), LAYOUT)


def test_flatten_unflatten_roundtrip_exact():
    layout = [("W1", (3, 2)), ("b1", (2,)), ("W2", (2, 4))]
    gen = RngStream(1).generator()
    segs = {name: gen.normal(size=shape) for name, shape in layout}
    vec = ParameterVector.from_segments(segs, layout)
    back = vec.segments()
    for name, shape in layout:
        assert back[name].shape == tuple(shape)
        assert np.array_equal(back[name], segs[name])


def test_norm_zero_only_for_zero_vector():
    assert pv(0.0, 0.0, 0.0).norm() == 0.0
    assert pv(0.0, 1e-300, 0.0).norm() > 0.0


def test_project_on_boundary_is_identity():
    v = pv(3.0, 4.0, 0.0)
    center = pv(0.0, 0.0, 0.0)
    out = l2_project(v, center, 5.0)
    assert np.array_equal(out.values, v.values)


def test_project_scales_to_radius():
    # ||(3,4)|| = 5, radius 1 -> scale by 1/5 -> (0.6, 0.8)
    out = l2_project(pv(3.0, 4.0, 0.0), pv(0.0, 0.0, 0.0), 1.0)
    assert np.allclose(out.values, [0.6, 0.8, 0.0], rtol=0, atol=1e-15)


def test_project_zero_offset_any_radius():
    v = pv(1.5, -2.0, 0.25)
    for radius in (0.0, 1.0, 100.0):
        assert np.array_equal(l2_project(v, v, radius).values, v.values)


def test_project_idempotent_exactly():
    gen = RngStream(3).generator()
    center = pv(*gen.normal(size=3))
    for _ in range(50):
        v = pv(*(10 * gen.normal(size=3)))
        r = float(gen.random() * 3)
        once = l2_project(v, center, r)
        twice = l2_project(once, center, r)
        assert np.array_equal(once.values, twice.values)
        assert once.distance(center) <= r * (1 + 1e-12)


def test_project_rejects_negative_radius_and_bad_layout():
    with pytest.raises(DomainError):
        l2_project(pv(1, 2, 3), pv(0, 0, 0), -1.0)
    other = ParameterVector(np.zeros(3), [("x", (3,))])
    with pytest.raises(ShapeError):
        l2_project(pv(1, 2, 3), other, 1.0)


def test_gaussian_perturb_degenerate_sigma():
    theta = pv(1.0, -2.0, 3.0)
    out = gaussian_perturb(theta, 1e-300, RngStream(0))
    assert np.max(np.abs(out.values - theta.values)) < 1e-100


def test_gaussian_perturb_moments():
    # CLT bounds precomputed for 1e5 draws: mean within +-0.02,
    # variance within [0.97, 1.03] (both ~4 sigma wide)
    theta = ParameterVector(np.zeros(100_000), [("w", (100_000,))])
    out = gaussian_perturb(theta, 1.0, RngStream(11).child("moments"))
    assert abs(out.values.mean()) < 0.02
    assert 0.97 < out.values.var() < 1.03


def test_gaussian_perturb_replay_identical():
    theta = pv(0.0, 0.0, 0.0)
    stream = RngStream(9).child("replay")
    a = gaussian_perturb(theta, 0.5, stream)
    b = gaussian_perturb(theta, 0.5, stream)
    assert np.array_equal(a.values, b.values)


def test_gaussian_perturb_rejects_bad_sigma():
    with pytest.raises(DomainError):
        gaussian_perturb(pv(0, 0, 0), 0.0, RngStream(0))
    with pytest.raises(DomainError):
        gaussian_perturb(pv(0, 0, 0), -1.0, RngStream(0))


def test_values_are_immutable():
    v = pv(1.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        v.values[0] = 9.0


def test_layout_mismatch_in_arithmetic():
    other = ParameterVector(np.zeros(3), [("x", (3,))])
    with pytest.raises(ShapeError):
        _ = pv(1, 2, 3) + other


def test_non_finite_rejected():
    with pytest.raises(DomainError):
        ParameterVector(np.array([1.0, np.nan, 0.0]), LAYOUT)
