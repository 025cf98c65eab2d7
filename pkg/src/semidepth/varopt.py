"""Direct optimisation of inverse-depth pyramids with Adam.

Each pyramid level holds free per-pixel logits; inverse depth is
``rho_max * sigmoid(logit)``.  Levels are switched on coarse-to-fine: the
coarsest level starts at step 0 and each finer level joins later,
initialised by upsampling the level above it.  Since every level's loss
depends on that level alone, the levels evolve independently once active.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, logit

from .core import N_SCALES, pyramid_shapes, upsample2x
from .diff import scale_value_and_grad
from .errors import DomainError, NumericError
from .losses import LossBreakdown

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lr0: float = 1e-4
    plateau_steps: int = 1500
    halve_every: int = 500
    total_steps: int = 2500
    # step at which level s (index s-1) starts optimising
    start_fractions: tuple = (0.3, 0.2, 0.1, 0.0)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise DomainError("Adam betas must lie in [0, 1)")
        if self.lr0 <= 0 or self.epsilon <= 0:
            raise DomainError("lr0 and epsilon must be > 0")
        if self.halve_every < 1 or self.total_steps < self.plateau_steps:
            raise DomainError("need halve_every >= 1 and total_steps >= plateau_steps")
        if len(self.start_fractions) != N_SCALES:
            raise DomainError(f"start_fractions needs {N_SCALES} entries")

    @classmethod
    def scaled(cls, total_steps, lr0, **kw):
        """Step-decay schedule for ``total_steps``: flat for 60%, then halved every 20%."""
        return cls(
            lr0=lr0,
            total_steps=total_steps,
            plateau_steps=int(round(0.6 * total_steps)),
            halve_every=max(1, int(round(0.2 * total_steps))),
            **kw,
        )

    def to_dict(self):
        d = asdict(self)
        d["start_fractions"] = list(self.start_fractions)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "start_fractions" in d:
            d["start_fractions"] = tuple(d["start_fractions"])
        return cls(**d)


def lr_schedule(step, cfg):
    """Constant ``lr0`` before ``plateau_steps``, then halved once per ``halve_every`` steps."""
    if step < cfg.plateau_steps:
        return cfg.lr0
    return cfg.lr0 * 0.5 ** ((step - cfg.plateau_steps) // cfg.halve_every + 1)


@dataclass
class OptState:
    """Logits, Adam moments and per-level step counters for both views."""

    logits: list
    m: list
    v: list
    steps: list
    rho_max: float = 1.0
    step: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def constant(cls, shapes, init, rho_max=1.0):
        if not 0 < init < rho_max:
            raise DomainError("init must lie strictly inside (0, rho_max)")
        z = float(logit(init / rho_max))
        logits = [[np.full(s, z) for s in shapes] for _ in range(2)]
        zeros = [[np.zeros(s) for s in shapes] for _ in range(2)]
        return cls(logits, zeros, [[np.zeros(s) for s in shapes] for _ in range(2)], [0] * len(shapes), rho_max)

    def rho(self, side, level):
        return self.rho_max * expit(self.logits[side][level])

    def rho_pyramids(self):
        n = len(self.logits[0])
        return [self.rho(0, k) for k in range(n)], [self.rho(1, k) for k in range(n)]

    def set_rho(self, side, level, rho):
        rho = np.clip(rho, 1e-12, self.rho_max * (1 - 1e-12))
        self.logits[side][level] = logit(rho / self.rho_max)


def adam_step(state, grads, cfg, lr=None, levels=None):
    """Bias-corrected Adam update of the logits in place; returns ``state``.

    ``grads`` is ``[grads_left, grads_right]`` of per-level logit gradients.
    Only ``levels`` (default: all) are updated and have their counters advanced.
    """
    lr = lr_schedule(state.step, cfg) if lr is None else lr
    levels = range(len(state.steps)) if levels is None else levels
    for k in levels:
        for side in (0, 1):
            g = np.asarray(grads[side][k], dtype=np.float64)
            if g.shape != state.logits[side][k].shape:
                raise DomainError(f"gradient shape {g.shape} does not match level {k + 1}")
            bad = ~np.isfinite(g)
            if bad.any():
                idx = tuple(int(i) for i in np.argwhere(bad)[0])
                raise NumericError(f"non-finite gradient at scale {k + 1}, view {'LR'[side]}, index {idx}")
    for k in levels:
        state.steps[k] += 1
        t = state.steps[k]
        for side in (0, 1):
            g = grads[side][k]
            m = state.m[side][k]
            v = state.v[side][k]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            m_hat = m / (1 - cfg.beta1**t)
            v_hat = v / (1 - cfg.beta2**t)
            state.logits[side][k] -= lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    state.step += 1
    return state


@dataclass
class OptResult:
    rho_l: list
    rho_r: list
    trace: list
    initial: LossBreakdown
    final: LossBreakdown

    def depth_l(self):
        return 1.0 / self.rho_l[0]

    def depth_r(self):
        return 1.0 / self.rho_r[0]


def _assemble(scale_terms):
    return LossBreakdown(
        reconstruction=sum(t.reconstruction for t in scale_terms),
        lr=sum(t.lr for t in scale_terms),
        supervised=sum(t.supervised for t in scale_terms),
        smooth=sum(t.smooth for t in scale_terms),
        total=sum(t.total for t in scale_terms),
        per_scale=[t.total for t in scale_terms],
        scales=list(scale_terms),
    )


def optimize_pair(sample, weights, adam=AdamConfig(), init=0.1, seed=0, rho_max=1.0, init_noise=0.0, trace_every=1):
    """Fit inverse-depth pyramids for both views of ``sample``.

    Returns an :class:`OptResult` with the final pyramids and a per-step trace
    of loss breakdowns (every ``trace_every`` steps, plus the last).
    Raises :class:`NumericError` if the loss stops being finite.
    """
    h, w = sample.shape
    shapes = pyramid_shapes(h, w)
    state = OptState.constant(shapes, init, rho_max)
    if init_noise:
        rng = np.random.default_rng(seed)
        for side in (0, 1):
            for k in range(N_SCALES):
                state.logits[side][k] += init_noise * rng.standard_normal(shapes[k])
    starts = [int(round(f * adam.total_steps)) for f in adam.start_fractions]
    cached = [None] * N_SCALES
    trace = []
    initial = None

    def evaluate(levels):
        grads = [[None] * N_SCALES, [None] * N_SCALES]
        for k in range(N_SCALES):
            if k in levels or cached[k] is None:
                terms, g_l, g_r = scale_value_and_grad(sample, state.rho(0, k), state.rho(1, k), weights, k + 1)
                cached[k] = terms
                for side, g in ((0, g_l), (1, g_r)):
                    rho = state.rho(side, k)
                    grads[side][k] = g * rho * (1.0 - rho / rho_max)
        return _assemble(cached), grads

    for step in range(adam.total_steps):
        for k in range(N_SCALES - 1):
            if step == starts[k] and starts[k] > starts[k + 1]:
                for side in (0, 1):
                    state.set_rho(side, k, upsample2x(state.rho(side, k + 1), shapes[k]))
                cached[k] = None
        active = [k for k in range(N_SCALES) if step >= starts[k]]
        breakdown, grads = evaluate(active)
        if initial is None:
            initial = breakdown
        if not np.isfinite(breakdown.total):
            raise NumericError(f"loss became non-finite at step {step}")
        if step % trace_every == 0:
            trace.append({"step": step, "lr": lr_schedule(step, adam), **breakdown.to_dict()})
        adam_step(state, grads, adam, levels=active)

    rho_l, rho_r = state.rho_pyramids()
    final, _ = evaluate(list(range(N_SCALES)))
    trace.append({"step": adam.total_steps, "lr": lr_schedule(adam.total_steps, adam), **final.to_dict()})
    log.info("optimize_pair: total %.6g -> %.6g", initial.total, final.total)
    return OptResult(rho_l, rho_r, trace, initial, final)
