"""Loss suite: focal, L1, perceptual, adversarial and their weighted total.

Pixel-wise losses use mean reduction.  ``focal_loss`` and ``l1_loss``
return analytic gradients that :func:`finite_diff_check` can verify.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError
from .networks import ConvStack
from .tensor import SegmentationMap

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    a_sg: float = 1.0
    a_l1: float = 1.0
    a_perc: float = 1.0
    a_adv: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")


@dataclass(frozen=True)
class LossParts:
    sg: float
    l1: float
    perc: float
    adv: float


def focal_loss(S_g, S_t, eta: float = 2.0):
    """Mean of ``-(1 - p_t)**eta * log(p_t)`` and its gradient w.r.t. ``S_g``.

    ``p_t`` is ``S_g`` where ``S_t == 1`` and ``1 - S_g`` where ``S_t == 0``.
    Probabilities are clamped to ``[1e-7, 1 - 1e-7]``; the gradient is zero
    where the clamp is active.
    """
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    S_g = np.asarray(S_g, dtype=np.float64)
    S_t = np.asarray(S_t)
    if S_g.shape != S_t.shape:
        raise ShapeError(f"prediction {S_g.shape} and target {S_t.shape} differ")
    if not np.all((S_t == 0) | (S_t == 1)):
        raise ValueError("target map must be binary")
    p = np.clip(S_g, PROB_EPS, 1.0 - PROB_EPS)
    pos = S_t == 1
    pt = np.where(pos, p, 1.0 - p)
    q = 1.0 - pt
    logp = np.log(pt)
    loss = -(q**eta) * logp
    dpt = -(q**eta) / pt
    if eta > 0:
        dpt = dpt + eta * q ** (eta - 1.0) * logp
    inside = (S_g >= PROB_EPS) & (S_g <= 1.0 - PROB_EPS)
    grad = np.where(pos, dpt, -dpt) * inside / S_g.size
    return float(loss.mean()), grad


def multiclass_focal_loss(probs, S_t: SegmentationMap, eta: float = 2.0):
    """One-vs-rest focal loss summed over the ``N`` class probability maps."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = S_t.one_hot()
    if probs.shape != onehot.shape:
        raise ShapeError(f"probabilities {probs.shape} do not match {onehot.shape}")
    total = 0.0
    grad = np.empty_like(probs)
    for n in range(probs.shape[0]):
        value, grad[n] = focal_loss(probs[n], onehot[n], eta)
        total += value
    return total, grad


def l1_loss(I_g, I_t):
    """Mean absolute difference and its subgradient (zero at ties)."""
    I_g = np.asarray(I_g, dtype=np.float64)
    I_t = np.asarray(I_t, dtype=np.float64)
    if I_g.shape != I_t.shape:
        raise ShapeError(f"images {I_g.shape} and {I_t.shape} differ")
    diff = I_g - I_t
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def default_extractor(seed: int = 0) -> ConvStack:
    """Three strided 3x3 conv stages (3 -> 8 -> 16 -> 32 channels)."""
    shapes = [(3, 8, 3, 2, "relu"), (8, 16, 3, 2, "relu"), (16, 32, 3, 2, "relu")]
    return ConvStack.seeded(shapes, seed)


def perceptual_loss(I_g, I_t, extractor=None, layers=None) -> float:
    """Sum over layers of the mean squared feature difference.

    ``extractor`` maps an image to a list of feature arrays; objects with a
    ``features`` method (like :class:`ConvStack`) are accepted too.
    """
    if extractor is None:
        extractor = default_extractor()
    fn = extractor.features if hasattr(extractor, "features") else extractor
    fg = fn(np.asarray(I_g, dtype=np.float64))
    ft = fn(np.asarray(I_t, dtype=np.float64))
    if layers is None:
        layers = range(len(fg))
    total = 0.0
    for k in layers:
        if not 0 <= k < len(fg):
            raise IndexError(f"layer {k} out of range for {len(fg)} extracted layers")
        a = np.asarray(fg[k], dtype=np.float64)
        b = np.asarray(ft[k], dtype=np.float64)
        if a.shape != b.shape:
            raise ShapeError(f"layer {k} shapes differ: {a.shape} vs {b.shape}")
        total += float(np.sum((a - b) ** 2) / a.size)
    return total


def adversarial_loss(D_real, D_fake) -> float:
    """``mean(log(1 - D_fake)) + mean(log(D_real))`` on clamped scores."""
    real = np.clip(np.asarray(D_real, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    fake = np.clip(np.asarray(D_fake, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    return float(np.mean(np.log1p(-fake)) + np.mean(np.log(real)))


def total_loss(parts: LossParts, w: LossWeights) -> float:
    values = (parts.sg, parts.l1, parts.perc, parts.adv)
    if not all(np.isfinite(v) for v in values):
        raise ValueError(f"non-finite loss component in {parts}")
    return w.a_sg * parts.sg + w.a_l1 * parts.l1 + w.a_perc * parts.perc + w.a_adv * parts.adv


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    passed: bool
    n_checked: int


def finite_diff_check(loss_fn, x, step: float = 1e-4, tol: float = 1e-3, n_samples: int = 64, seed: int = 0) -> GradCheckReport:
    """Compare ``loss_fn``'s analytic gradient with central differences.

    ``loss_fn(x)`` must return ``(value, grad)``.  Up to ``n_samples``
    coordinates are drawn with a seeded generator; the relative error per
    coordinate is ``|g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    _, grad = loss_fn(x)
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    flat = x.reshape(-1)
    rng = np.random.default_rng(seed)
    count = min(n_samples, flat.size)
    idx = rng.choice(flat.size, size=count, replace=False)
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        up, _ = loss_fn(x)
        flat[i] = orig - step
        down, _ = loss_fn(x)
        flat[i] = orig
        g_fd = (up - down) / (2.0 * step)
        g_a = grad[i]
        rel = abs(g_a - g_fd) / max(abs(g_a), abs(g_fd), 1e-8)
        worst = max(worst, rel)
    return GradCheckReport(float(worst), bool(worst < tol), int(count))
