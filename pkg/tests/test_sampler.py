import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semidepth.errors import DomainError, SizeError
from semidepth.sampler import (
    WarpDirection,
    bilinear_sample,
    row_sampling,
    warp_horizontal,
    warp_jacobian_disparity,
)
from semidepth.synth import make_scene, plane_scene_spec

LEFT = WarpDirection.RECONSTRUCT_LEFT_FROM_RIGHT
RIGHT = WarpDirection.RECONSTRUCT_RIGHT_FROM_LEFT


def four_corner(f, x, y):
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    tx, ty = x - x0, y - y0
    x1, y1 = min(x0 + 1, f.shape[1] - 1), min(y0 + 1, f.shape[0] - 1)
    return (
        (1 - tx) * (1 - ty) * f[y0, x0]
        + tx * (1 - ty) * f[y0, x1]
        + (1 - tx) * ty * f[y1, x0]
        + tx * ty * f[y1, x1]
    )


def test_integer_coordinates_hit_pixels(rng):
    f = rng.random((6, 6))
    assert bilinear_sample(f, 2.0, 3.0) == f[3, 2]


def test_midpoint():
    f = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert bilinear_sample(f, 0.5, 1.0) == 0.5


def test_matches_four_corner_oracle(rng):
    f = rng.random((6, 6))
    xs, ys = rng.uniform(0, 5, 200), rng.uniform(0, 5, 200)
    got = bilinear_sample(f, xs, ys)
    want = np.array([four_corner(f, x, y) for x, y in zip(xs, ys)])
    np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)


def test_multichannel_sampling(rng):
    f = rng.random((5, 7, 3))
    got = bilinear_sample(f, 2.25, 1.5)
    want = [four_corner(f[:, :, c], 2.25, 1.5) for c in range(3)]
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_clamps_outside_frame(rng):
    f = rng.random((4, 5))
    assert bilinear_sample(f, -3.0, 1.0) == f[1, 0]
    assert bilinear_sample(f, 10.0, 9.0) == f[3, 4]


def test_zero_disparity_is_bit_identity(rng):
    src = rng.random((7, 9, 3))
    zero = np.zeros((7, 9))
    for direction in (LEFT, RIGHT):
        out = warp_horizontal(src, zero, direction)
        assert np.array_equal(out, src)


def test_unit_shift_of_ramp():
    ramp = np.tile(np.arange(8, dtype=float), (3, 1))
    d = np.ones((3, 8))
    out_l = warp_horizontal(ramp, d, LEFT)
    out_r = warp_horizontal(ramp, d, RIGHT)
    np.testing.assert_array_equal(out_l[:, 1:], ramp[:, :-1])
    np.testing.assert_array_equal(out_r[:, :-1], ramp[:, 1:])
    assert np.all(out_l[:, 0] == 0.0) and np.all(out_r[:, -1] == 7.0)


def test_synthetic_pair_reprojects():
    scene = make_scene(plane_scene_spec(8.0))
    rec = warp_horizontal(scene.right, scene.true_disparity_l(), LEFT)
    err = np.abs(rec - scene.left).mean(axis=2)[scene.visible_l]
    assert err.mean() < 0.01


def test_jacobian_flat_and_ramp():
    flat = np.full((3, 6), 0.4)
    d = np.full((3, 6), 0.5)
    np.testing.assert_array_equal(warp_jacobian_disparity(flat, d, LEFT), 0.0)
    ramp = np.tile(0.3 * np.arange(6, dtype=float), (3, 1))
    jl = warp_jacobian_disparity(ramp, d, LEFT)
    jr = warp_jacobian_disparity(ramp, d, RIGHT)
    np.testing.assert_allclose(jl[:, 1:5], -0.3)
    np.testing.assert_allclose(jr[:, 1:5], 0.3)


def test_jacobian_matches_finite_differences(rng):
    src = rng.random((5, 12))
    d = rng.uniform(0.1, 3.0, (5, 12))
    h = 1e-4
    for direction in (LEFT, RIGHT):
        jac = warp_jacobian_disparity(src, d, direction)
        num = (warp_horizontal(src, d + h, direction) - warp_horizontal(src, d - h, direction)) / (2 * h)
        st_ = row_sampling(d, direction)
        frac = st_.coord - np.floor(st_.coord)
        safe = st_.active & (frac > 2 * h) & (frac < 1 - 2 * h)
        rel = np.abs(jac - num)[safe] / np.maximum(np.abs(num[safe]), 1e-8)
        assert safe.sum() > 20
        assert rel.max() < 1e-5


@given(
    arrays(np.float64, (4, 7), elements=st.floats(-5, 5)),
    arrays(np.float64, (4, 7), elements=st.floats(0, 10)),
    st.sampled_from([LEFT, RIGHT]),
)
def test_warp_is_convex_combination(src, d, direction):
    out = warp_horizontal(src, d, direction)
    assert np.all(np.isfinite(out))
    assert out.min() >= src.min() - 1e-12 and out.max() <= src.max() + 1e-12


@given(arrays(np.float64, (3, 6), elements=st.floats(0, 8)), arrays(np.float64, (3, 6), elements=st.floats(-2, 2)))
def test_adjoint_matches_apply(d, g):
    st_ = row_sampling(d, LEFT)
    f = np.linspace(-1, 1, 18).reshape(3, 6)
    assert np.vdot(st_.apply(f), g) == pytest.approx(np.vdot(f, st_.adjoint(g)), abs=1e-9)


def test_rejects_negative_disparity_and_tiny_width():
    with pytest.raises(DomainError):
        row_sampling(-np.ones((2, 3)), LEFT)
    with pytest.raises(SizeError):
        row_sampling(np.zeros((2, 1)), LEFT)
