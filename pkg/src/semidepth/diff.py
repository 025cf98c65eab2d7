"""Analytic gradients of the multi-scale loss and a finite-difference checker.

Gradients are assembled by hand from the chain rule of each operator
(bilinear sampler, SSIM window statistics, soft census, masked L1).  The
subgradient of ``|x|`` at 0 is taken as 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import N_SCALES, grad_x, grad_x_adjoint, grad_y, grad_y_adjoint
from .errors import ProbeExhaustionError, ShapeError
from .losses import (
    _has_gt,
    disparity_factor,
    edge_weights,
    lr_residuals,
    stencils,
    total_loss,
)
from .photometric import census_dead_zone_state, photometric_value_and_vjp


@dataclass
class GradientBundle:
    d_rho_l: list
    d_rho_r: list
    value: float
    breakdown: object = None


def _scale_grad(sample, rho_l, rho_r, weights, scale):
    rig = sample.rig
    img_l, img_r = sample.images_at(scale)
    k = disparity_factor(rig, scale)
    st_l, st_r = stencils(rho_l, rho_r, rig, scale)
    g_l = np.zeros_like(rho_l)
    g_r = np.zeros_like(rho_r)
    n = rho_l.size
    rec_value = None

    if weights.lambda1:
        rec_value = 0.0
        p = weights.photometric
        for g_rho, st, target, source in ((g_l, st_l, img_l, img_r), (g_r, st_r, img_r, img_l)):
            rec = st.apply(source)
            value, g_rec = photometric_value_and_vjp(target, rec, p, scale=weights.lambda1)
            rec_value += value
            # d(rec)/d(rho) = sign * slope * k
            g_rho += k * st.direction_sign * (g_rec * st.slope(source)).sum(axis=2)

    if weights.lambda2:
        res_l, res_r = lr_residuals(rho_l, rho_r, st_l, st_r)
        for g_self, g_other, res, st, other in (
            (g_l, g_r, res_l, st_l, rho_r),
            (g_r, g_l, res_r, st_r, rho_l),
        ):
            up = weights.lambda2 * np.sign(res) / n
            g_self += up
            g_other -= st.adjoint(up)
            g_self -= up * k * st.direction_sign * st.slope(other)

    if weights.lambda3 and scale == 1:
        for g_rho, rho, gt in ((g_l, rho_l, sample.gt_left), (g_r, rho_r, sample.gt_right)):
            if _has_gt(gt):
                res = np.where(gt.mask, rho - gt.inverse(), 0.0)
                g_rho += weights.lambda3 * np.sign(res) / gt.count

    if weights.lambda4:
        for g_rho, rho, img in ((g_l, rho_l, img_l), (g_r, rho_r, img_r)):
            wx, wy = edge_weights(img)
            g_rho += weights.lambda4 / n * (
                grad_x_adjoint(np.sign(grad_x(rho)) * wx) + grad_y_adjoint(np.sign(grad_y(rho)) * wy)
            )
    return g_l, g_r, rec_value


def scale_value_and_grad(sample, rho_l, rho_r, weights, scale):
    """Loss terms and gradients of a single pyramid level."""
    from .losses import scale_loss

    rho_l = np.asarray(rho_l, dtype=np.float64)
    rho_r = np.asarray(rho_r, dtype=np.float64)
    g_l, g_r, rec = _scale_grad(sample, rho_l, rho_r, weights, scale)
    terms = scale_loss(sample, rho_l, rho_r, weights, scale, _reconstruction=rec)
    return terms, g_l, g_r


def value_and_grad(sample, rho_pyr_l, rho_pyr_r, weights):
    """Total loss and its gradient w.r.t. every inverse-depth entry at every scale."""
    breakdown = total_loss(sample, rho_pyr_l, rho_pyr_r, weights)
    grads_l, grads_r = [], []
    for s in range(1, N_SCALES + 1):
        g_l, g_r, _ = _scale_grad(
            sample,
            np.asarray(rho_pyr_l[s - 1], dtype=np.float64),
            np.asarray(rho_pyr_r[s - 1], dtype=np.float64),
            weights,
            s,
        )
        grads_l.append(g_l)
        grads_r.append(g_r)
    return GradientBundle(grads_l, grads_r, breakdown.total, breakdown)


def kink_signature(sample, rho_l, rho_r, weights, scale):
    """Discrete state of every non-smooth point of the loss at one scale.

    Two parameter vectors with equal signatures lie in the same smooth piece,
    so a central difference between them is valid.
    """
    st_l, st_r = stencils(rho_l, rho_r, sample.rig, scale)
    parts = [st_l.x0, st_l.active, st_r.x0, st_r.active]
    if weights.lambda1 and weights.photometric.alpha3:
        img_l, img_r = sample.images_at(scale)
        parts.append(census_dead_zone_state(st_l.apply(img_r), weights.photometric))
        parts.append(census_dead_zone_state(st_r.apply(img_l), weights.photometric))
    if weights.lambda1 and weights.photometric.alpha2:
        img_l, img_r = sample.images_at(scale)
        parts.append(np.sign(img_l - st_l.apply(img_r)))
        parts.append(np.sign(img_r - st_r.apply(img_l)))
    if weights.lambda2:
        parts.extend(np.sign(r) for r in lr_residuals(rho_l, rho_r, st_l, st_r))
    if weights.lambda3 and scale == 1:
        for rho, gt in ((rho_l, sample.gt_left), (rho_r, sample.gt_right)):
            if _has_gt(gt):
                parts.append(np.sign(np.where(gt.mask, rho - gt.inverse(), 0.0)))
    if weights.lambda4:
        for rho in (rho_l, rho_r):
            parts.append(np.sign(grad_x(rho)))
            parts.append(np.sign(grad_y(rho)))
    return parts


def _same_signature(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def fd_check(
    sample,
    rho_pyr_l,
    rho_pyr_r,
    weights,
    step=1e-4,
    probes=64,
    seed=0,
    objective=None,
    signature=None,
    max_attempts=None,
):
    """Maximum relative deviation between analytic and central-difference gradients.

    Probes are drawn from a seeded generator: a view and a scale uniformly,
    then a pixel uniformly.  A probe is rejected when the perturbation
    crosses a kink of the loss (see :func:`kink_signature`).

    ``objective(pyr_l, pyr_r) -> GradientBundle`` replaces the loss when given;
    ``signature(pyr_l, pyr_r, scale)`` then supplies the kink state (none by default).
    """
    if step <= 0 or probes < 1:
        raise ValueError("step must be > 0 and probes >= 1")
    pyr = [[np.array(a, dtype=np.float64) for a in rho_pyr_l], [np.array(a, dtype=np.float64) for a in rho_pyr_r]]
    if len(pyr[0]) != len(pyr[1]):
        raise ShapeError("pyramids differ in level count")

    if objective is None:
        def objective(pl, pr):
            return value_and_grad(sample, pl, pr, weights)

        def value(pl, pr):
            return total_loss(sample, pl, pr, weights).total

        def signature(pl, pr, s):
            return kink_signature(sample, pl[s], pr[s], weights, s + 1)
    else:
        def value(pl, pr):
            return objective(pl, pr).value

    rng = np.random.default_rng(seed)
    bundle = objective(pyr[0], pyr[1])
    grads = (bundle.d_rho_l, bundle.d_rho_r)
    max_attempts = max_attempts or 50 * probes
    worst = 0.0
    accepted = attempts = 0
    while accepted < probes:
        if attempts >= max_attempts:
            raise ProbeExhaustionError(f"only {accepted} of {probes} probes accepted in {attempts} attempts")
        attempts += 1
        side = int(rng.integers(2))
        s = int(rng.integers(len(pyr[side])))
        h, w = pyr[side][s].shape
        i, j = int(rng.integers(h)), int(rng.integers(w))
        base = pyr[side][s][i, j]
        ref = signature(pyr[0], pyr[1], s) if signature else None
        vals = []
        ok = True
        for delta in (step, -step):
            pyr[side][s][i, j] = base + delta
            if ref is not None and not _same_signature(ref, signature(pyr[0], pyr[1], s)):
                ok = False
            vals.append(value(pyr[0], pyr[1]) if ok else 0.0)
        pyr[side][s][i, j] = base
        if not ok:
            continue
        numeric = (vals[0] - vals[1]) / (2 * step)
        worst = max(worst, relative_error(grads[side][s][i, j], numeric))
        accepted += 1
    return worst
