"""Mixture-of-Gaussians trajectory NLL with unit covariance.

For K hypotheses ``X_k`` (T x 2) with confidence logits ``z`` and ground truth
``X_gt``::

    a_k = log softmax(z)_k - 0.5 * sum_{t valid} |X_gt_t - X_k,t|^2
    L   = -logsumexp_k a_k

The Gaussian normalization constant is dropped, so an exact single-hypothesis
hit has loss 0. Gradients use the posterior responsibilities
``r = softmax(a)``::

    dL/dX_k,t = r_k (X_k,t - X_gt_t)      (valid t only)
    dL/dz_k   = c_k - r_k
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoValidSteps, ShapeMismatch


@dataclass
class MixtureOutput:
    means: np.ndarray  # [K, T_f, 2]
    logits: np.ndarray  # [K]

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64)
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.means.ndim != 3 or self.means.shape[2] != 2 or self.logits.shape != (self.means.shape[0],):
            raise ShapeMismatch(f"means {self.means.shape} / logits {self.logits.shape} are not [K,T,2] / [K]")
        if self.means.shape[0] < 1:
            raise ShapeMismatch("need at least one hypothesis")

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def future_steps(self) -> int:
        return self.means.shape[1]

    @property
    def confidences(self) -> np.ndarray:
        return softmax_confidences(self.logits)


@dataclass
class GroundTruth:
    points: np.ndarray  # [T_f, 2]
    valid: np.ndarray  # [T_f] bool

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or self.valid.shape != (self.points.shape[0],):
            raise ShapeMismatch(f"points {self.points.shape} / valid {self.valid.shape} are not [T,2] / [T]")
        if not self.valid.any():
            raise NoValidSteps("ground truth has no valid timestep")

    @classmethod
    def full(cls, points) -> "GroundTruth":
        points = np.asarray(points, dtype=np.float64)
        return cls(points, np.ones(len(points), dtype=bool))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax_confidences(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def nll_batch(means, logits, gt, valid, with_grad: bool = True):
    """Batched loss (and gradients).

    Shapes: ``means`` [B,K,T,2], ``logits`` [B,K], ``gt`` [B,T,2],
    ``valid`` [B,T]. Returns ``loss`` [B] and, with ``with_grad``,
    ``d_means`` [B,K,T,2] and ``d_logits`` [B,K].
    """
    means = np.asarray(means, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    b, k, t, _ = means.shape
    if logits.shape != (b, k) or gt.shape != (b, t, 2) or valid.shape != (b, t):
        raise ShapeMismatch(
            f"means {means.shape}, logits {logits.shape}, gt {gt.shape}, valid {valid.shape} disagree"
        )
    if not valid.any(axis=1).all():
        raise NoValidSteps("ground truth has no valid timestep")

    mask = valid[:, None, :, None]
    diff = np.where(mask, means - gt[:, None], 0.0)
    sse = np.einsum("bktc,bktc->bk", diff, diff)
    log_c = log_softmax(logits)
    a = log_c - 0.5 * sse
    m = a.max(axis=1, keepdims=True)
    ea = np.exp(a - m)
    s = ea.sum(axis=1, keepdims=True)
    loss = -(m[:, 0] + np.log(s[:, 0]))
    if not with_grad:
        return loss
    r = ea / s
    d_means = r[:, :, None, None] * diff
    d_logits = np.exp(log_c) - r
    return loss, d_means, d_logits


def _single(out: MixtureOutput, gt: GroundTruth):
    if out.future_steps != len(gt.points):
        raise ShapeMismatch(f"prediction has {out.future_steps} steps, ground truth {len(gt.points)}")
    return out.means[None], out.logits[None], gt.points[None], gt.valid[None]


def nll_loss(out: MixtureOutput, gt: GroundTruth) -> float:
    return float(nll_batch(*_single(out, gt), with_grad=False)[0])


def nll_gradient(out: MixtureOutput, gt: GroundTruth) -> tuple[np.ndarray, np.ndarray]:
    """``(d_means [K,T,2], d_logits [K])`` of :func:`nll_loss`."""
    _, dm, dz = nll_batch(*_single(out, gt))
    return dm[0], dz[0]
