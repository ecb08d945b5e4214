"""
Differentiable regularizer catalog and the NTL composition rule.

Every loss here is a pure function of tensors. Divergences take probability
vectors along the last dimension and return one value per row unless
reduced; eq1_composite assembles them into

    L = L_src - lambda * sum_r w_r * min(signed_r, tau)

where maximized regularizers enter positively and targeted (minimized) ones
enter negated.
"""

from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from .models import MAXIMIZED_REGULARIZERS, ObjectiveSpec

KL_EPS = 1e-12
FDA_EPS = 1e-8

StyleProvider = Callable[[torch.Tensor], torch.Tensor]
IntOrTensor = Union[int, torch.Tensor]


def _reduce(values: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "mean":
        return values.mean()
    if reduction == "sum":
        return values.sum()
    if reduction == "none":
        return values
    raise ValueError(f"unknown reduction: {reduction}")


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """-log softmax(logits)[label], computed from logits."""
    num_classes = logits.shape[-1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise ValueError(f"label out of range for {num_classes} classes")
    return F.cross_entropy(logits, labels, reduction=reduction)


def soft_cross_entropy(logits: torch.Tensor, target: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Cross-entropy against a target distribution: -sum_i t_i log p_i."""
    return _reduce(-(target * F.log_softmax(logits, dim=-1)).sum(dim=-1), reduction)


def kl_divergence(p: torch.Tensor, q: torch.Tensor, reduction: str = "none") -> torch.Tensor:
    """
    KL(p || q) = sum_i p_i log(p_i / q_i) along the last dimension.

    q is floored at 1e-12; terms with p_i = 0 contribute 0.
    """
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"length mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    values = (torch.xlogy(p, p) - p * torch.log(q.clamp_min(KL_EPS))).sum(dim=-1)
    return _reduce(values, reduction)


def uniform_kl(probs: torch.Tensor, reduction: str = "none") -> torch.Tensor:
    """KL(probs || U_C) = log C - H(probs)."""
    uniform = torch.full_like(probs, 1.0 / probs.shape[-1])
    return kl_divergence(probs, uniform, reduction=reduction)


def clamped_target_term(raw_loss: torch.Tensor, bound: float) -> torch.Tensor:
    """min(raw_loss, bound); the gradient vanishes wherever raw_loss exceeds bound."""
    if bound <= 0:
        raise ValueError("clamp bound must be positive")
    return torch.clamp(raw_loss, max=bound)


def _squared_distances(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).sum(dim=-1)


def median_pairwise_distance(pooled: torch.Tensor) -> torch.Tensor:
    """Lower median of the Euclidean distances over distinct pairs; 1.0 if that median is 0."""
    n = pooled.shape[0]
    if n < 2:
        return pooled.new_tensor(1.0)
    rows, cols = torch.triu_indices(n, n, offset=1)
    sq = (pooled[rows] - pooled[cols]).pow(2).sum(dim=-1)
    med_sq = sq.median()
    if float(med_sq) <= 0.0:
        return pooled.new_tensor(1.0)
    return med_sq.sqrt()


def mmd_biased(
    za: torch.Tensor,
    zb: torch.Tensor,
    bandwidth_scales: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
    sigma: Optional[float] = None,
) -> torch.Tensor:
    """
    Biased squared MMD with a multi-Gaussian kernel.

    k(u, v) = mean_s exp(-||u - v||^2 / (2 (s * sigma)^2)), where sigma is the
    median pairwise distance of the pooled sample unless given explicitly.
    """
    if za.numel() == 0 or zb.numel() == 0 or za.shape[0] == 0 or zb.shape[0] == 0:
        raise ValueError("empty feature batch")
    za = za.reshape(za.shape[0], -1)
    zb = zb.reshape(zb.shape[0], -1)
    if za.shape[1] != zb.shape[1]:
        raise ValueError(f"feature dimension mismatch: {za.shape[1]} vs {zb.shape[1]}")

    if sigma is None:
        base = median_pairwise_distance(torch.cat([za, zb], dim=0))
    else:
        base = za.new_tensor(float(sigma))

    d_aa = _squared_distances(za, za)
    d_bb = _squared_distances(zb, zb)
    d_ab = _squared_distances(za, zb)
    k_aa = torch.zeros_like(d_aa)
    k_bb = torch.zeros_like(d_bb)
    k_ab = torch.zeros_like(d_ab)
    for s in bandwidth_scales:
        denom = 2.0 * (s * base) ** 2
        k_aa = k_aa + torch.exp(-d_aa / denom)
        k_bb = k_bb + torch.exp(-d_bb / denom)
        k_ab = k_ab + torch.exp(-d_ab / denom)
    n_scales = len(bandwidth_scales)
    return (k_aa.mean() + k_bb.mean() - 2.0 * k_ab.mean()) / n_scales


def error_label(y: IntOrTensor, num_classes: int) -> IntOrTensor:
    """(y + 1) mod C: a wrong label with no fixed points."""
    if num_classes < 2:
        raise ValueError("error-label undefined for single class")
    return (y + 1) % num_classes


def inverse_label_distribution(y: IntOrTensor, num_classes: int) -> torch.Tensor:
    """
    Target distribution with zero mass on the true label.

    C = 2 gives the one-hot of 1 - y; C > 2 spreads 1/(C-1) over the other classes.
    """
    if num_classes < 2:
        raise ValueError("inverse label undefined for single class")
    y = torch.as_tensor(y, dtype=torch.int64)
    dist = torch.full((*y.shape, num_classes), 1.0 / (num_classes - 1))
    return dist.scatter(-1, y.unsqueeze(-1), 0.0)


def fda_term(z: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """
    tr(S_b) / (tr(S_w) + eps): between-class over within-class scatter.

    Smaller values mean class means sit closer together relative to the
    spread inside each class.
    """
    if z.shape[0] < 2:
        raise ValueError("fda_term needs at least 2 samples")
    z = z.reshape(z.shape[0], -1)
    classes, inverse = torch.unique(y, return_inverse=True)
    onehot = F.one_hot(inverse, num_classes=classes.numel()).to(z.dtype)
    counts = onehot.sum(dim=0)
    class_means = (onehot.t() @ z) / counts.unsqueeze(1)
    global_mean = z.mean(dim=0)
    between = (counts * (class_means - global_mean).pow(2).sum(dim=1)).sum()
    within = (z - class_means[inverse]).pow(2).sum()
    return between / (within + FDA_EPS)


def domain_confusion_loss(
    features: torch.Tensor,
    domain_labels: torch.Tensor,
    aux_head: Optional[torch.nn.Module],
) -> torch.Tensor:
    """Mean cross-entropy of the auxiliary domain classifier (minimized jointly with phi)."""
    if aux_head is None:
        raise ValueError("no domain head configured")
    return cross_entropy(aux_head(features), domain_labels)


def _output_regularizer(
    name: str,
    target_logits: torch.Tensor,
    target_labels: torch.Tensor,
    target_images: torch.Tensor,
    style_provider: Optional[StyleProvider],
) -> torch.Tensor:
    num_classes = target_logits.shape[-1]
    probs = torch.softmax(target_logits, dim=-1)
    if name == "max_kl_to_label":
        onehot = F.one_hot(target_labels, num_classes).to(probs.dtype)
        return kl_divergence(onehot, probs).mean()
    if name == "min_kl_to_error_label":
        onehot = F.one_hot(error_label(target_labels, num_classes), num_classes).to(probs.dtype)
        return kl_divergence(onehot, probs).mean()
    if name == "min_inverse_ce":
        target = inverse_label_distribution(target_labels, num_classes).to(target_logits)
        return soft_cross_entropy(target_logits, target)
    if name == "min_uniform_kl":
        return uniform_kl(probs).mean()
    if name == "min_kl_to_style_label":
        if style_provider is None:
            raise ValueError("min_kl_to_style_label requires a style-label provider")
        style = style_provider(target_images).to(probs)
        return kl_divergence(style, probs).mean()
    if name == "max_kl_to_pseudo_label":
        pseudo = torch.argmax(probs.detach(), dim=-1)
        onehot = F.one_hot(pseudo, num_classes).to(probs.dtype)
        return kl_divergence(onehot, probs).mean()
    raise ValueError(f"unknown output regularizer: {name}")


def regularizer_values(
    model: torch.nn.Module,
    source_batch: Tuple[torch.Tensor, torch.Tensor],
    target_batch: Tuple[torch.Tensor, torch.Tensor],
    spec: ObjectiveSpec,
    style_provider: Optional[StyleProvider] = None,
) -> Dict[str, torch.Tensor]:
    """Raw (unsigned, unclamped) value of every active regularizer."""
    xs, _ = source_batch
    xt, yt = target_batch
    zs = model.features(xs)
    zt = model.features(xt)
    values: Dict[str, torch.Tensor] = {}
    if spec.target_output_reg is not None:
        values[spec.target_output_reg] = _output_regularizer(
            spec.target_output_reg, model.omega(zt), yt, xt, style_provider
        )
    for name in spec.target_feature_reg:
        if name == "max_mmd":
            values[name] = mmd_biased(zs, zt, spec.mmd_bandwidth_scales)
        elif name == "domain_confusion":
            feats = torch.cat([zs, zt], dim=0)
            domains = torch.cat([
                torch.zeros(zs.shape[0], dtype=torch.int64),
                torch.ones(zt.shape[0], dtype=torch.int64),
            ])
            values[name] = domain_confusion_loss(feats, domains, getattr(model, "aux_domain_head", None))
        elif name == "min_fda":
            values[name] = fda_term(zt, yt)
        else:
            raise ValueError(f"unknown feature regularizer: {name}")
    return values


def eq1_composite(
    source_batch: Tuple[torch.Tensor, torch.Tensor],
    target_batch: Tuple[torch.Tensor, torch.Tensor],
    model: torch.nn.Module,
    spec: ObjectiveSpec,
    style_provider: Optional[StyleProvider] = None,
    breakdown: Optional[Dict[str, float]] = None,
) -> torch.Tensor:
    """
    The NTL objective: mean source cross-entropy minus lambda times the clamped target terms.

    With lambda = 0 the target batch is never touched and the value (and its
    gradient) equal plain supervised cross-entropy.

    Args:
        source_batch: (images, labels) from the source domain
        target_batch: (images, labels) from the target domain
        model: ModelBundle (needs features() and omega)
        spec: objective composition
        style_provider: maps target images to style-label distributions
        breakdown: optional dict filled with the float value of every term
    """
    xs, ys = source_batch
    if xs.shape[0] == 0 or target_batch[0].shape[0] == 0:
        raise ValueError("eq1_composite needs nonempty source and target batches")
    if spec.lam > 0 and not spec.has_regularizer():
        raise ValueError("no target regularizer configured")

    source_loss = cross_entropy(model(xs), ys)
    if breakdown is not None:
        breakdown["source"] = float(source_loss.detach())
    if spec.lam == 0:
        return source_loss

    raw = regularizer_values(model, source_batch, target_batch, spec, style_provider)
    gain = source_loss.new_zeros(())
    for name, value in raw.items():
        signed = value if name in MAXIMIZED_REGULARIZERS else -value
        gain = gain + spec.weight(name) * clamped_target_term(signed, spec.clamp_bound)
        if breakdown is not None:
            breakdown[name] = float(value.detach())
    return source_loss - spec.lam * gain
