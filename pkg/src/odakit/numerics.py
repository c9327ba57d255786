"""Deterministic dense-vector primitives shared by all other modules.

Scalar/single-vector functions implement the public contracts (cosine
similarity, temperature softmax, Shannon entropy, entropy gradient); the
*_rows variants are the batched forms used on hot paths. All entropies use
the natural logarithm with the 0*ln(0) == 0 convention.
"""

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, InvalidTemperature, ZeroNormVector

NORM_FLOOR = 1e-12


def _as_f64_matrix(a):
    return np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=np.float64)))


def cosine_similarity(a, b):
    """Cosine of the angle between a and b, clamped to [-1, 1].

    Raises ZeroNormVector if either norm is below 1e-12.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cosine inputs {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        raise ZeroNormVector(f"vector norm below {NORM_FLOOR:g}")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def cosine_matrix(x, protos):
    """Cosine similarities between rows of x (n, d) and rows of protos (m, d).

    Returns an (n, m) float64 matrix clamped to [-1, 1]. Raises
    ZeroNormVector if any row of either input has a near-zero norm.
    """
    x = _as_f64_matrix(x)
    protos = _as_f64_matrix(protos)
    if x.shape[1] != protos.shape[1]:
        raise DimensionMismatch(
            f"embeddings have dim {x.shape[1]}, prototypes dim {protos.shape[1]}"
        )
    xn = np.linalg.norm(x, axis=1)
    pn = np.linalg.norm(protos, axis=1)
    if (xn < NORM_FLOOR).any() or (pn < NORM_FLOOR).any():
        raise ZeroNormVector(f"row norm below {NORM_FLOOR:g}")
    sims = (x / xn[:, None]) @ (protos / pn[:, None]).T
    np.clip(sims, -1.0, 1.0, out=sims)
    return sims


def softmax_temp(scores, tau):
    """Temperature softmax exp(s_k/tau) / sum_j exp(s_j/tau).

    Computed with max-subtraction so that small temperatures (the default
    is 0.01) do not overflow. Raises InvalidTemperature for tau <= 0.
    """
    if tau <= 0.0:
        raise InvalidTemperature(f"tau must be > 0, got {tau}")
    scores = np.asarray(scores, dtype=np.float64)
    return softmax_rows(scores[None, :], tau)[0]


def softmax_rows(scores, tau):
    """Batched temperature softmax over the rows of scores (n, K)."""
    if tau <= 0.0:
        raise InvalidTemperature(f"tau must be > 0, got {tau}")
    return _kernels.softmax_rows(_as_f64_matrix(scores), float(tau))


def log_softmax_rows(scores, tau):
    """Batched log of the temperature softmax; finite for finite input."""
    if tau <= 0.0:
        raise InvalidTemperature(f"tau must be > 0, got {tau}")
    return _kernels.log_softmax_rows(_as_f64_matrix(scores), float(tau))


def entropy(p):
    """Shannon entropy -sum_k p_k ln p_k of a probability vector."""
    p = np.asarray(p, dtype=np.float64)
    return float(_kernels.entropy_rows(_as_f64_matrix(p))[0])


def entropy_rows(probs):
    """Shannon entropy of each row of probs (n, K)."""
    return _kernels.entropy_rows(_as_f64_matrix(probs))


def grad_entropy_wrt_logits(z):
    """Gradient of H(softmax(z)) with respect to the logits z."""
    z = np.asarray(z, dtype=np.float64)
    probs = softmax_rows(z[None, :], 1.0)
    return _kernels.entropy_grad_rows(probs)[0]


def entropy_grad_rows(probs):
    """Row-wise gradient of entropy w.r.t. logits, given probs = softmax(z)."""
    return _kernels.entropy_grad_rows(_as_f64_matrix(probs))


def soft_ce_rows(targets, log_probs):
    """Row-wise soft-target cross-entropy -sum_k q_k log p_k."""
    targets = _as_f64_matrix(targets)
    log_probs = _as_f64_matrix(log_probs)
    if targets.shape != log_probs.shape:
        raise DimensionMismatch(
            f"targets {targets.shape} vs log_probs {log_probs.shape}"
        )
    return _kernels.soft_ce_rows(targets, log_probs)
