"""Pure numpy implementations of the row-wise hot kernels.

Same contracts as `odakit._kernels._core` (the Cython build): float64
C-contiguous 2-D inputs, float64 outputs. Kept dependency-free beyond
numpy so the package still works where the extension cannot be built.
"""

import numpy as np


def softmax_rows(scores, tau):
    """Row-wise softmax of scores/tau with max-subtraction."""
    z = scores / tau
    z = z - z.max(axis=1, keepdims=True)
    out = np.exp(z)
    out /= out.sum(axis=1, keepdims=True)
    return out


def log_softmax_rows(scores, tau):
    """Row-wise log-softmax of scores/tau; finite for any finite input."""
    z = scores / tau
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    return z - lse


def entropy_rows(probs):
    """Shannon entropy per row, natural log, 0*ln(0) == 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=1)


def entropy_grad_rows(probs):
    """Per-row gradient of entropy(softmax(z)) w.r.t. the logits z.

    For p = softmax(z): dH/dz_j = -p_j * (ln p_j + H(p)). Entries with
    p_j == 0 contribute a zero gradient.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(probs > 0.0, np.log(probs), 0.0)
    h = -(probs * logs).sum(axis=1, keepdims=True)
    return np.where(probs > 0.0, -probs * (logs + h), 0.0)


def soft_ce_rows(targets, log_probs):
    """Soft-target cross-entropy per row: -sum_k q_k * log p_k.

    Target entries equal to zero contribute nothing regardless of log p.
    """
    terms = np.where(targets > 0.0, targets * log_probs, 0.0)
    return -terms.sum(axis=1)
