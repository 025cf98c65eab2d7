import numpy as np
import pytest

from semidepth.core import CameraRig, SparseDepthMap, build_pyramid, pyramid_shapes
from semidepth.diff import GradientBundle, fd_check, kink_signature, relative_error, value_and_grad
from semidepth.errors import ProbeExhaustionError
from semidepth.losses import LossWeights, StereoSample, total_loss
from semidepth.synth import default_scene_spec, make_scene


def synth_fixture(seed, h=16, w=32):
    scene = make_scene(default_scene_spec(w, h, seed=seed))
    sample = StereoSample(scene.left, scene.right, scene.rig, scene.gt_clean, scene.gt_clean_r)
    rng = np.random.default_rng(seed)
    shapes = pyramid_shapes(h, w)
    return sample, [rng.uniform(0.02, 0.3, s) for s in shapes], [rng.uniform(0.02, 0.3, s) for s in shapes]


def test_zero_weights_give_exact_zero_gradients():
    sample, pl, pr = synth_fixture(0)
    b = value_and_grad(sample, pl, pr, LossWeights(0, 0, 0, 0))
    assert b.value == 0.0
    assert all(np.all(g == 0.0) for g in b.d_rho_l + b.d_rho_r)


def test_supervised_single_pixel_gradient():
    h, w = 16, 32
    depth = np.zeros((h, w))
    depth[5, 7] = 10.0
    img = np.full((h, w, 3), 0.5)
    sample = StereoSample(img, img, CameraRig(20.0, 0.5, w, h), SparseDepthMap(depth), None)
    pl = build_pyramid(np.full((h, w), 0.3))
    b = value_and_grad(sample, pl, pl, LossWeights(0, 0, 7.0, 0))
    expected = np.zeros((h, w))
    expected[5, 7] = 7.0 / 1
    np.testing.assert_array_equal(b.d_rho_l[0], expected)
    assert all(np.all(g == 0) for g in b.d_rho_l[1:] + b.d_rho_r)


def test_inactive_term_contributes_exact_zeros():
    sample, pl, pr = synth_fixture(1)
    full = value_and_grad(sample, pl, pr, LossWeights())
    no_lr = value_and_grad(sample, pl, pr, LossWeights(lambda2=0.0))
    lr_only = value_and_grad(sample, pl, pr, LossWeights(0, 1, 0, 0))
    for a, b, c in zip(full.d_rho_l, no_lr.d_rho_l, lr_only.d_rho_l):
        assert np.all(np.isfinite(a))
        np.testing.assert_allclose(a, b + c, atol=1e-12)


def test_value_matches_total_loss():
    sample, pl, pr = synth_fixture(2)
    b = value_and_grad(sample, pl, pr, LossWeights())
    assert abs(b.value - total_loss(sample, pl, pr, LossWeights()).total) <= 1e-12
    assert [g.shape for g in b.d_rho_l] == pyramid_shapes(16, 32)


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_full_loss_gradient_matches_finite_differences(seed):
    sample, pl, pr = synth_fixture(seed)
    assert fd_check(sample, pl, pr, LossWeights(), step=1e-4, probes=64, seed=seed) < 1e-4


def test_smooth_only_on_random_fields(rng):
    img = rng.random((16, 32, 3))
    sample = StereoSample(img, rng.random((16, 32, 3)), CameraRig(20.0, 0.5, 32, 16))
    pl = build_pyramid(rng.random((16, 32)))
    pr = build_pyramid(rng.random((16, 32)))
    assert fd_check(sample, pl, pr, LossWeights(0, 0, 0, 0.1), probes=32, seed=1) < 1e-5


def test_injected_quadratic_objective():
    shapes = pyramid_shapes(8, 8)
    rng = np.random.default_rng(0)
    pl = [rng.random(s) for s in shapes]
    pr = [rng.random(s) for s in shapes]

    def quad(a, b):
        return GradientBundle([2 * x for x in a], [2 * x for x in b], sum(float((x**2).sum()) for x in a + b))

    assert fd_check(None, pl, pr, None, step=1e-4, probes=40, objective=quad) < 1e-8


def test_fd_check_is_deterministic():
    sample, pl, pr = synth_fixture(4)
    a = fd_check(sample, pl, pr, LossWeights(), probes=16, seed=11)
    b = fd_check(sample, pl, pr, LossWeights(), probes=16, seed=11)
    assert a == b


def test_probe_exhaustion():
    shapes = pyramid_shapes(8, 8)
    pl = [np.ones(s) for s in shapes]

    def obj(a, b):
        return GradientBundle([np.zeros_like(x) for x in a], [np.zeros_like(x) for x in b], 0.0)

    calls = iter(range(10**6))

    def always_changes(a, b, s):
        return [np.array([next(calls)])]

    with pytest.raises(ProbeExhaustionError):
        fd_check(None, pl, pl, None, probes=3, objective=obj, signature=always_changes, max_attempts=20)


def test_kink_signature_and_relative_error():
    sample, pl, pr = synth_fixture(5)
    sig = kink_signature(sample, pl[0], pr[0], LossWeights(), 1)
    assert len(sig) > 4
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(2.0, 1.0) == 0.5
