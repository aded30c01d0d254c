"""Losses for single-positive multi-label training.

Every loss takes pre-sigmoid logits plus an annotation matrix and returns the
scalar loss (per-sample mean over classes, then mean over the batch), the
per-label loss matrix, and the exact analytic gradient of the scalar with
respect to each logit.  Probabilities are derived internally; log terms clamp
probabilities to [PROB_FLOOR, 1 - PROB_FLOOR] while gradients use closed
forms in the logit and need no clamping.

Annotation alphabets:
    an / dw / ls / nls / entmin / em : entries in {0, 1}
        (1 = annotated positive, 0 = unannotated)
    em_apl : entries in {-1, 0, 1}
        (-1 = negative pseudo-label, requires a recorded soft label)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, NumericError, StateError

PROB_FLOOR = 1e-7

LOSS_TAGS = ("an", "em", "em_apl", "dw", "ls", "nls", "entmin")

#: Published hyperparameter defaults of the entropy/pseudo-labeling method for
#: the four public benchmarks it is usually reported on.  Keys: batch_size,
#: learning_rate, alpha (entropy weight), beta (pseudo-label weight),
#: total_proportion (percent), warmup_epochs.
REFERENCE_HYPERPARAMETERS = {
    "voc": {"batch_size": 8, "learning_rate": 1e-5, "alpha": 0.2, "beta": 0.02,
            "total_proportion": 90.0, "warmup_epochs": 5},
    "coco": {"batch_size": 16, "learning_rate": 1e-5, "alpha": 0.1, "beta": 0.9,
             "total_proportion": 90.0, "warmup_epochs": 5},
    "nus": {"batch_size": 16, "learning_rate": 1e-5, "alpha": 0.1, "beta": 0.2,
            "total_proportion": 90.0, "warmup_epochs": 4},
    "cub": {"batch_size": 8, "learning_rate": 1e-4, "alpha": 0.01, "beta": 0.4,
            "total_proportion": 90.0, "warmup_epochs": 3},
}

#: Search grids customarily used when tuning each simple baseline.
BASELINE_GRIDS = {
    "dw": (0.01, 0.02, 0.1, 0.2, 0.4, 0.9),
    "l1r": (1e-9, 1e-8, 1e-7, 1e-6, 1e-5),
    "l2r": (1e-9, 1e-8, 1e-7, 1e-6, 1e-5),
    "ls": (0.1, 0.2, 0.3),
    "nls": (0.1, 0.2, 0.3),
    "entmin": (0.01, 0.02, 0.1, 0.2, 0.4, 0.9),
    "em_alpha": (0.01, 0.02, 0.1, 0.2, 0.4, 0.9),
    "apl_beta": (0.01, 0.02, 0.1, 0.2, 0.4, 0.9),
}


@dataclass(frozen=True)
class LossKind:
    """A loss family tag plus its hyperparameters.

    tag           one of LOSS_TAGS
    alpha         weight of the entropy term on unannotated labels (em, em_apl)
    beta          weight of the soft-negative pseudo-label term (em_apl)
    down_weight   multiplier on the assumed-negative term (dw)
    smoothing     label-smoothing coefficient (ls, nls)
    entmin_weight weight of the entropy-minimization term (entmin)
    """

    tag: str
    alpha: float = 0.2
    beta: float = 0.02
    down_weight: float = 1.0
    smoothing: float = 0.0
    entmin_weight: float = 1.0

    def __post_init__(self):
        if self.tag not in LOSS_TAGS:
            raise ConfigurationError(f"unknown loss tag {self.tag!r}; expected one of {LOSS_TAGS}")
        for name in ("alpha", "beta", "down_weight", "entmin_weight"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.smoothing < 0.5:
            raise ConfigurationError(f"smoothing must lie in [0, 0.5), got {self.smoothing}")


@dataclass(frozen=True)
class WeightPenalty:
    """Optional L1/L2 penalty on all model parameters, added to the scalar loss."""

    kind: str = "none"
    coefficient: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1", "l2"):
            raise ConfigurationError(f"penalty kind must be none/l1/l2, got {self.kind!r}")
        if self.coefficient < 0:
            raise ConfigurationError(f"penalty coefficient must be >= 0, got {self.coefficient}")

    def value(self, params: dict) -> float:
        if self.kind == "none" or self.coefficient == 0.0:
            return 0.0
        if self.kind == "l1":
            return self.coefficient * float(sum(np.abs(w).sum() for w in params.values()))
        return self.coefficient * float(sum((w ** 2).sum() for w in params.values()))

    def gradients(self, params: dict) -> dict:
        if self.kind == "none" or self.coefficient == 0.0:
            return {name: np.zeros_like(w) for name, w in params.items()}
        if self.kind == "l1":
            return {name: self.coefficient * np.sign(w) for name, w in params.items()}
        return {name: 2.0 * self.coefficient * w for name, w in params.items()}


@dataclass
class LossOutput:
    """Scalar loss, per-label loss matrix, and d(scalar)/d(logit) matrix.

    per_label[n, c] is the c-th term of sample n's bracketed sum after the
    leading minus sign, so scalar == per_label.mean().  logit_gradient is the
    derivative of that scalar, i.e. it carries the same 1/(N*C) normalization.
    """

    scalar: float
    per_label: np.ndarray
    logit_gradient: np.ndarray


def stable_sigmoid(logits):
    """Numerically stable sigmoid; no overflow for |logit| up to ~1e3."""
    g = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericError("sigmoid input must be finite")
    out = np.empty_like(g)
    pos = g >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-g[pos]))
    eg = np.exp(g[~pos])
    out[~pos] = eg / (1.0 + eg)
    if np.ndim(logits) == 0:
        return float(out)
    return out


def binary_entropy(p):
    """Binary entropy H(p) = -(p log p + (1-p) log(1-p)) in nats.

    H(0) = H(1) = 0 by the usual limit convention; maximum log 2 at p = 0.5.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise NumericError("binary_entropy expects probabilities in [0, 1]")
    safe_p = np.where(p > 0.0, p, 1.0)
    safe_q = np.where(p < 1.0, 1.0 - p, 1.0)
    h = -(np.where(p > 0.0, p * np.log(safe_p), 0.0)
          + np.where(p < 1.0, (1.0 - p) * np.log(safe_q), 0.0))
    if h.ndim == 0:
        return float(h)
    return h


def positive_term_gradient(logits):
    """d/dg of the annotated-positive term -log(sigmoid(g)); equals sigmoid(g) - 1."""
    return stable_sigmoid(logits) - 1.0


def negative_term_gradient(logits):
    """d/dg of the assumed-negative term -log(1 - sigmoid(g)); equals sigmoid(g)."""
    return stable_sigmoid(logits)


def entropy_term_gradient(logits, alpha: float):
    """d/dg of the unannotated-label entropy term -alpha*H(sigmoid(g)).

    Closed form: alpha * g * sigmoid(g) * sigmoid(-g).  Odd in g, zero at
    g = 0, and decaying to zero as |g| grows.
    """
    g = np.asarray(logits, dtype=np.float64)
    out = alpha * g * stable_sigmoid(g) * stable_sigmoid(-g)
    if np.ndim(logits) == 0:
        return float(out)
    return out


def soft_negative_loss(probabilities, soft_targets):
    """Soft-negative pseudo-label term s*log(f) + (1-s)*log(1-f).

    Negative-valued; it enters the combined loss inside the global minus
    sign, down-weighted by beta.  -value is the cross-entropy of f against
    the recorded target s, minimized at f = s with value H(s).
    """
    f = np.asarray(probabilities, dtype=np.float64)
    s = np.asarray(soft_targets, dtype=np.float64)
    if not np.all((f >= 0.0) & (f <= 1.0)):
        raise NumericError("soft_negative_loss probabilities must lie in [0, 1]")
    if not np.all((s >= 0.0) & (s <= 1.0)):
        raise NumericError("soft_negative_loss targets must lie in [0, 1]")
    fc = np.clip(f, PROB_FLOOR, 1.0 - PROB_FLOOR)
    out = s * np.log(fc) + (1.0 - s) * np.log1p(-fc)
    if out.ndim == 0:
        return float(out)
    return out


def _check_alphabet(annotations: np.ndarray, allowed: tuple, kind: str) -> np.ndarray:
    ann = np.asarray(annotations)
    bad = ~np.isin(ann, allowed)
    if bad.any():
        n, c = np.argwhere(bad)[0]
        raise ContractError(
            f"{kind} loss expects annotations in {allowed}; found {ann[n, c]} at "
            f"(sample {n}, class {c})")
    return ann


def _prepare(logits, annotations, allowed, kind):
    g = np.asarray(logits, dtype=np.float64)
    ann = _check_alphabet(annotations, allowed, kind)
    if g.shape != ann.shape:
        raise ContractError(f"logits shape {g.shape} != annotations shape {ann.shape}")
    p = stable_sigmoid(g)
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return g, ann, p, pc


def _output(per_label: np.ndarray, grad_per_label: np.ndarray) -> LossOutput:
    n_total = per_label.size
    return LossOutput(
        scalar=float(per_label.mean()),
        per_label=per_label,
        logit_gradient=grad_per_label / n_total,
    )


def an_loss(logits, annotations) -> LossOutput:
    """Assume-negative loss: every unannotated label is treated as negative."""
    g, ann, p, pc = _prepare(logits, annotations, (0, 1), "an")
    pos = ann == 1
    per_label = np.where(pos, -np.log(pc), -np.log1p(-pc))
    grad = np.where(pos, p - 1.0, p)
    return _output(per_label, grad)


def em_loss(logits, annotations, alpha: float) -> LossOutput:
    """Entropy-maximization loss: unannotated labels are pushed toward
    maximum-entropy (ambiguous) predictions with weight alpha instead of
    being assumed negative."""
    if alpha < 0:
        raise ConfigurationError(f"alpha must be >= 0, got {alpha}")
    g, ann, p, pc = _prepare(logits, annotations, (0, 1), "em")
    pos = ann == 1
    per_label = np.where(pos, -np.log(pc), -alpha * binary_entropy(p))
    grad = np.where(pos, p - 1.0, alpha * g * p * stable_sigmoid(-g))
    return _output(per_label, grad)


def _resolve_soft(annotations: np.ndarray, soft_labels) -> np.ndarray:
    if hasattr(soft_labels, "dense"):
        soft = soft_labels.dense(annotations.shape)
    else:
        soft = np.asarray(soft_labels, dtype=np.float64)
    if soft.shape != annotations.shape:
        raise ContractError(
            f"soft-label matrix shape {soft.shape} != annotations shape {annotations.shape}")
    missing = (annotations == -1) & ~np.isfinite(soft)
    if missing.any():
        n, c = np.argwhere(missing)[0]
        raise StateError(f"negative pseudo-label at (sample {n}, class {c}) has no soft label")
    return soft


def em_apl_loss(logits, annotations, soft_labels, alpha: float, beta: float) -> LossOutput:
    """Entropy-maximization loss combined with negative pseudo-labels.

    Annotated positives keep the log-likelihood term, unannotated labels keep
    the alpha-weighted entropy term, and negative pseudo-labels (-1) are
    regressed toward their frozen soft label with weight beta.  Soft labels
    are constants: no gradient flows into them.
    """
    if alpha < 0 or beta < 0:
        raise ConfigurationError(f"alpha and beta must be >= 0, got {alpha}, {beta}")
    g, ann, p, pc = _prepare(logits, annotations, (-1, 0, 1), "em_apl")
    soft = _resolve_soft(ann, soft_labels)
    s = np.where(ann == -1, np.where(np.isfinite(soft), soft, 0.0), 0.0)

    per_label = np.where(
        ann == 1, -np.log(pc),
        np.where(ann == 0,
                 -alpha * binary_entropy(p),
                 -beta * (s * np.log(pc) + (1.0 - s) * np.log1p(-pc))))
    grad = np.where(
        ann == 1, p - 1.0,
        np.where(ann == 0,
                 alpha * g * p * stable_sigmoid(-g),
                 beta * (p - s)))
    return _output(per_label, grad)


def baseline_loss(kind: LossKind, logits, annotations,
                  penalty: WeightPenalty | None = None,
                  model_params: dict | None = None) -> LossOutput:
    """Simple baselines over the assume-negative skeleton.

    dw      multiplies the assumed-negative term by kind.down_weight
    ls      smooths every hard target: 1 -> 1-eps, 0 -> eps
    nls     smooths only the assumed-negative targets: 0 -> eps
    entmin  positive term plus kind.entmin_weight * H(f) on unannotated
            labels (entropy minimization, opposite sign to em)

    A WeightPenalty with model parameters adds its value to the scalar; the
    penalty gradient lives in parameter space and is applied by the trainer.
    """
    if kind.tag == "dw":
        g, ann, p, pc = _prepare(logits, annotations, (0, 1), "dw")
        pos = ann == 1
        w = kind.down_weight
        per_label = np.where(pos, -np.log(pc), -w * np.log1p(-pc))
        grad = np.where(pos, p - 1.0, w * p)
    elif kind.tag == "ls":
        g, ann, p, pc = _prepare(logits, annotations, (0, 1), "ls")
        t = np.where(ann == 1, 1.0 - kind.smoothing, kind.smoothing)
        per_label = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
        grad = p - t
    elif kind.tag == "nls":
        g, ann, p, pc = _prepare(logits, annotations, (0, 1), "nls")
        t = np.where(ann == 1, 1.0, kind.smoothing)
        per_label = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
        grad = p - t
    elif kind.tag == "entmin":
        g, ann, p, pc = _prepare(logits, annotations, (0, 1), "entmin")
        pos = ann == 1
        w = kind.entmin_weight
        per_label = np.where(pos, -np.log(pc), w * binary_entropy(p))
        grad = np.where(pos, p - 1.0, -w * g * p * stable_sigmoid(-g))
    else:
        raise ConfigurationError(f"baseline_loss does not handle tag {kind.tag!r}")

    out = _output(per_label, grad)
    if penalty is not None and model_params is not None:
        out.scalar += penalty.value(model_params)
    return out


def evaluate_loss(kind: LossKind, logits, annotations, soft_labels=None) -> LossOutput:
    """Dispatch to the loss selected by kind.tag."""
    if kind.tag == "an":
        return an_loss(logits, annotations)
    if kind.tag == "em":
        return em_loss(logits, annotations, kind.alpha)
    if kind.tag == "em_apl":
        if soft_labels is None:
            soft_labels = np.full(np.asarray(annotations).shape, np.nan)
        return em_apl_loss(logits, annotations, soft_labels, kind.alpha, kind.beta)
    return baseline_loss(kind, logits, annotations)


def finite_difference_check(kind: LossKind, logits, annotations,
                            soft_labels=None, step: float = 1e-5) -> float:
    """Max relative error between central finite differences of the scalar
    loss and the analytic logit gradient, with absolute floor 1e-8.

    Keep logits away from sigmoid saturation (|g| below ~15) so the internal
    probability clamp cannot bite.
    """
    g = np.asarray(logits, dtype=np.float64)
    analytic = evaluate_loss(kind, g, annotations, soft_labels).logit_gradient
    worst = 0.0
    for n in range(g.shape[0]):
        for c in range(g.shape[1]):
            bumped = g.copy()
            bumped[n, c] = g[n, c] + step
            hi = evaluate_loss(kind, bumped, annotations, soft_labels).scalar
            bumped[n, c] = g[n, c] - step
            lo = evaluate_loss(kind, bumped, annotations, soft_labels).scalar
            fd = (hi - lo) / (2.0 * step)
            denom = max(abs(fd), abs(analytic[n, c]), 1e-8)
            worst = max(worst, abs(fd - analytic[n, c]) / denom)
    return worst
