"""Training losses: cross-entropy, re-weighting, alignment, Gram matching.

Everything differentiable here is built from autodiff ops, so one backward
call through the total suffices. Batch losses are arithmetic means over
samples, which keeps the components comparable when they are added.

The pieces:

* ``cross_entropy`` / ``reweighted_ce``: standard CE and its
  inverse-frequency-weighted variant (weights normalized to mean 1, so
  balanced data reduces it to plain CE).
* ``hycon``: a two-view alignment loss. For each sample, the predictor
  output of one view and the in-batch class mean of the other view are both
  pulled toward that other view's projection; the projection enters only
  through stop_gradient, so it is a target, not a trainee. Each term is a
  negative cosine, giving the range [-4, 4] with -4 at perfect alignment.
* ``p2p``: drives the Gram matrix of a vector set toward the simplex-ETF
  target. For class means the rows are first centered by their mean and
  unit-normalized; classifier rows enter raw, so the loss also pushes them
  to unit norm.
* ``branch_loss`` / ``total_loss``: the scheduled combination. eta decays
  from 1 to 0 over training, handing each classification branch from plain
  CE to re-weighted CE plus classifier Gram matching.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ContractError, DomainError, ShapeError
from .etf import rho_matrix

# ---------------------------------------------------------------------------
# cross-entropy family


def _onehot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ContractError(f"labels outside [0, {num_classes})")
    hot = np.zeros((y.shape[0], num_classes))
    hot[np.arange(y.shape[0]), y] = 1.0
    return hot


def cross_entropy_rows(logits: Node, labels: np.ndarray) -> Node:
    """Per-sample cross-entropy of an (N, C) logits node; returns (N,)."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy_rows: logits must be (N, C), got {logits.shape}")
    hot = _onehot(labels, logits.shape[1])
    if hot.shape[0] != logits.shape[0]:
        raise ShapeError("cross_entropy_rows: labels and logits disagree on N")
    logp = ad.log_softmax_rows(logits)
    return ad.neg(ad.rowwise_dot(logp, ad.constant(hot)))


def cross_entropy(logits: Node, label: int) -> Node:
    """Cross-entropy of a single (C,) logits vector against one label."""
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy: logits must be (C,), got {logits.shape}")
    rows = ad.reshape(logits, (1, logits.shape[0]))
    return ad.mean_all(cross_entropy_rows(rows, np.asarray([label])))


def reweighted_ce(logits: Node, label: int, class_weights: np.ndarray) -> Node:
    """class_weights[label] * cross_entropy(logits, label)."""
    w = np.asarray(class_weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != logits.shape[-1]:
        raise ShapeError(f"reweighted_ce: weights shape {w.shape} vs {logits.shape[-1]} classes")
    return ad.scale(cross_entropy(logits, label), float(w[label]))


def mean_cross_entropy(logits: Node, labels: np.ndarray) -> Node:
    """Batch-mean cross-entropy of (N, C) logits."""
    return ad.mean_all(cross_entropy_rows(logits, labels))


def mean_reweighted_ce(logits: Node, labels: np.ndarray, class_weights: np.ndarray) -> Node:
    """Batch mean of class_weights[y_i] * CE_i."""
    w = np.asarray(class_weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != logits.shape[1]:
        raise ShapeError(f"mean_reweighted_ce: weights shape {w.shape} vs {logits.shape[1]} classes")
    rows = cross_entropy_rows(logits, labels)
    per_sample = ad.constant(w[np.asarray(labels)])
    return ad.scale(ad.dot(rows, per_sample), 1.0 / rows.shape[0])


def inverse_frequency_weights(counts: np.ndarray) -> np.ndarray:
    """Per-class weights proportional to 1/count, normalized to mean 1."""
    n = np.asarray(counts, dtype=np.float64)
    if n.ndim != 1 or n.shape[0] < 1:
        raise ShapeError(f"inverse_frequency_weights: need a 1-d count vector, got {n.shape}")
    if np.any(n < 1):
        raise ContractError("inverse_frequency_weights: every class needs at least one sample")
    raw = 1.0 / n
    return raw / raw.mean()


# ---------------------------------------------------------------------------
# two-view alignment


def _negative_cosine(a: Node, target_unit: Node) -> Node:
    return ad.neg(ad.dot(ad.l2_normalize(a), target_unit))


def hycon(h1: Node, h2: Node, z1: Node, z2: Node, u1: Node, u2: Node) -> Node:
    """Single-sample two-view alignment loss.

    sim(h, u, sg(z)) = -cos(h, z) - cos(u, z) with z gradient-stopped; the
    loss is sim(h1, u2, sg(z2)) + sim(h2, u1, sg(z1)). h is the predictor
    output, u the in-batch class mean of the projections, z the projection
    serving as the frozen target. Range [-4, 4].
    """
    t2 = ad.l2_normalize(ad.stop_gradient(z2))
    t1 = ad.l2_normalize(ad.stop_gradient(z1))
    sim12 = ad.add(_negative_cosine(h1, t2), _negative_cosine(u2, t2))
    sim21 = ad.add(_negative_cosine(h2, t1), _negative_cosine(u1, t1))
    return ad.add(sim12, sim21)


def _class_selectors(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Constant matrices for batched class means.

    Returns (present, pool, lookup): pool is (P, N) with row k averaging the
    samples of the k-th present class, and lookup is (N, P) picking each
    sample's own class mean back out.
    """
    y = np.asarray(labels)
    present, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    n = y.shape[0]
    p = present.shape[0]
    pool = np.zeros((p, n))
    pool[inverse, np.arange(n)] = 1.0 / counts[inverse]
    lookup = np.zeros((n, p))
    lookup[np.arange(n), inverse] = 1.0
    return present, pool, lookup


def class_mean_matrix(x: Node, labels: np.ndarray) -> tuple[Node, np.ndarray]:
    """Rows of in-batch class means of an (N, d) node, for present classes.

    Returns the (P, d) mean node (gradient spreads 1/n_c to each member) and
    the sorted array of the P class indices present in ``labels``.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"class_mean_matrix: need (N, d) input, got {x.shape}")
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise ShapeError("class_mean_matrix: labels and rows disagree on N")
    present, pool, _ = _class_selectors(y)
    return ad.matmul(ad.constant(pool), x), present


def hycon_batch(
    h1: Node,
    h2: Node,
    z1: Node,
    z2: Node,
    labels: np.ndarray,
    target_z1: Node | None = None,
    target_z2: Node | None = None,
) -> Node:
    """Batch-mean two-view alignment loss over (N, p) stacks.

    Class means are computed within the batch from each view's projections
    (the anchor included; a singleton class is its own mean) and they carry
    gradient. Targets default to the gradient-stopped projections; passing
    explicit constant targets pins them, which is how the finite-difference
    checks freeze the target while leaving the live paths differentiable.
    """
    for name, node in (("h1", h1), ("h2", h2), ("z1", z1), ("z2", z2)):
        if node.data.ndim != 2:
            raise ShapeError(f"hycon_batch: {name} must be (N, p), got {node.shape}")
        if node.shape != h1.shape:
            raise ShapeError(f"hycon_batch: {name} shape {node.shape} differs from {h1.shape}")
    y = np.asarray(labels)
    if y.shape != (h1.shape[0],):
        raise ShapeError("hycon_batch: labels and rows disagree on N")

    _, pool, lookup = _class_selectors(y)
    pool_c, lookup_c = ad.constant(pool), ad.constant(lookup)
    u1 = ad.matmul(lookup_c, ad.matmul(pool_c, z1))
    u2 = ad.matmul(lookup_c, ad.matmul(pool_c, z2))

    t1 = ad.l2_normalize_rows(target_z1 if target_z1 is not None else ad.stop_gradient(z1))
    t2 = ad.l2_normalize_rows(target_z2 if target_z2 is not None else ad.stop_gradient(z2))

    toward_t2 = ad.add(
        ad.rowwise_dot(ad.l2_normalize_rows(h1), t2),
        ad.rowwise_dot(ad.l2_normalize_rows(u2), t2),
    )
    toward_t1 = ad.add(
        ad.rowwise_dot(ad.l2_normalize_rows(h2), t1),
        ad.rowwise_dot(ad.l2_normalize_rows(u1), t1),
    )
    return ad.neg(ad.mean_all(ad.add(toward_t2, toward_t1)))


# ---------------------------------------------------------------------------
# Gram matching


def p2p(
    vectors: Node,
    center_and_normalize: bool,
    num_classes: int | None = None,
    center: Node | None = None,
) -> Node:
    """Mean squared gap between a vector set's Gram matrix and the ETF target.

    ``vectors`` is (K, d), one vector per row. With ``center_and_normalize``
    the rows are first centered and unit-normalized (the tilde convention for
    class means); without it the raw rows are compared, which additionally
    pushes row norms to 1 (the convention for classifier rows). The center
    defaults to the mean of the rows; under imbalance the training loop
    passes the batch's global feature mean instead, because that is the
    center the collapse diagnostics subtract and an unweighted row mean
    drifts away from it when class sizes differ.

    ``num_classes`` sets the target off-diagonal -1/(C-1); it defaults to K
    and must be passed when the rows are a subset of the classes, so partial
    batches still aim at the full-frame geometry. The normalizer is 1/K^2
    over the present rows.
    """
    if vectors.data.ndim != 2:
        raise ShapeError(f"p2p: need (K, d) input, got {vectors.shape}")
    k = vectors.shape[0]
    c = k if num_classes is None else int(num_classes)
    if c < 2:
        raise DomainError(f"p2p: target needs at least 2 classes, got {c}")
    if k < 2 or k > c:
        raise ContractError(f"p2p: got {k} rows for a {c}-class target")
    v = vectors
    if center_and_normalize:
        if center is None:
            center = ad.mean_rows(v)
        elif center.data.shape != (vectors.shape[1],):
            raise ShapeError(f"p2p: center shape {center.shape} vs row width {vectors.shape[1]}")
        v = ad.l2_normalize_rows(ad.sub(v, center))
    gram = ad.matmul(v, ad.transpose(v))
    target = rho_matrix(c)[:k, :k] if k < c else rho_matrix(c)
    # With k < c the slice keeps ones on the diagonal and -1/(C-1) off it,
    # which is exactly the Gram a subset of the full frame should have.
    return ad.mean_all(ad.square(ad.sub(gram, ad.constant(target))))


# ---------------------------------------------------------------------------
# schedule and combination


def eta(t: int, t_max: int, gamma: float) -> float:
    """Curriculum weight 1 - (t/t_max)^gamma: 1 at t=0, 0 at t=t_max."""
    if t_max < 1:
        raise DomainError(f"eta: t_max must be >= 1, got {t_max}")
    if gamma <= 0:
        raise DomainError(f"eta: gamma must be > 0, got {gamma}")
    if not 0 <= t <= t_max:
        raise ContractError(f"eta: t={t} outside [0, {t_max}]")
    return 1.0 - (t / t_max) ** float(gamma)


def branch_loss(
    logits: Node,
    labels: np.ndarray,
    eta_value: float,
    class_weights: np.ndarray,
    classifier: Node,
    p2p_w: Node | None = None,
) -> Node:
    """One classification branch: eta*CE + (1-eta)*(reweighted CE + p2p(W)).

    All three parts are batch means. ``p2p_w`` may be passed in precomputed
    so two branches can share one node; by default it is built here from the
    raw classifier rows.
    """
    if not 0.0 <= eta_value <= 1.0:
        raise ContractError(f"branch_loss: eta {eta_value} outside [0, 1]")
    ce = mean_cross_entropy(logits, labels)
    re = mean_reweighted_ce(logits, labels, class_weights)
    if p2p_w is None:
        p2p_w = p2p(classifier, center_and_normalize=False)
    return ad.add(ad.scale(ce, eta_value), ad.scale(ad.add(re, p2p_w), 1.0 - eta_value))


def total_loss(branch1: Node, branch2: Node, hycon_value: Node, p2p_mu: Node, alpha: float) -> Node:
    """branch1 + branch2 + alpha * (hycon + p2p over class means)."""
    if alpha < 0:
        raise DomainError(f"total_loss: alpha must be >= 0, got {alpha}")
    return ad.add(ad.add(branch1, branch2), ad.scale(ad.add(hycon_value, p2p_mu), float(alpha)))
