"""Trainable linear open-set classifier and its SGD-momentum optimizer.

The classifier maps an embedding x to logits z = W x + b over the known
classes. Probabilities are a plain softmax of the logits; the open-set rule
at inference matches the zero-shot one: entropy above the threshold rejects.

Checkpoint format (little-endian): magic "ODAC", u32 version=1, u32 dim,
u32 num_classes, f32 row-major weights (num_classes x dim), f32 biases.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidConfig,
    IoError,
    NonFiniteGradient,
)
from .zero_shot import UNKNOWN

CHECKPOINT_MAGIC = b"ODAC"
CHECKPOINT_VERSION = 1

_CKPT_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class ParamGrads:
    """Gradients of a scalar objective w.r.t. the classifier parameters."""

    weights: np.ndarray
    biases: np.ndarray

    def is_finite(self):
        return bool(np.isfinite(self.weights).all() and np.isfinite(self.biases).all())


class OdaClassifier:
    """Linear classifier over precomputed embeddings."""

    def __init__(self, weights, biases):
        w = np.ascontiguousarray(np.asarray(weights, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(biases, dtype=np.float64))
        if w.ndim != 2:
            raise DimensionMismatch(f"weights must be 2-D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise DimensionMismatch(
                f"biases shape {b.shape} does not match {w.shape[0]} classes"
            )
        self.weights = w
        self.biases = b

    @property
    def num_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    @classmethod
    def init_seeded(cls, dim, num_classes, seed):
        """Fan-in uniform(-1/sqrt(dim), 1/sqrt(dim)) weights, zero biases."""
        if dim < 1 or num_classes < 1:
            raise InvalidConfig("dim and num_classes must be positive")
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(dim)
        weights = rng.uniform(-bound, bound, size=(num_classes, dim))
        return cls(weights, np.zeros(num_classes))

    def copy(self):
        return OdaClassifier(self.weights.copy(), self.biases.copy())

    def forward(self, vector):
        """(logits, probs) for one embedding; probs is a plain softmax."""
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector shape {vec.shape} incompatible with dim {self.dim}"
            )
        logits = self.weights @ vec + self.biases
        return logits, numerics.softmax_temp(logits, 1.0)

    def forward_batch(self, matrix):
        """(logits, probs) for an (n, dim) batch, one row per sample."""
        mat = np.asarray(matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != self.dim:
            raise DimensionMismatch(
                f"matrix shape {mat.shape} incompatible with dim {self.dim}"
            )
        logits = mat @ self.weights.T + self.biases
        return logits, numerics.softmax_rows(logits, 1.0)

    def predict_open_set(self, vector, delta):
        """Known-class argmax, or UNKNOWN when entropy exceeds delta."""
        _, probs = self.forward(vector)
        h = numerics.entropy(probs)
        return UNKNOWN if h > delta else int(np.argmax(probs))

    def predict_rows(self, matrix, delta):
        """Vectorized open-set labels, probs, entropies for a batch."""
        _, probs = self.forward_batch(matrix)
        ent = numerics.entropy_rows(probs)
        labels = np.argmax(probs, axis=1).astype(np.int64)
        labels[ent > delta] = UNKNOWN
        return labels, probs, ent

    def save(self, path):
        """Write a checkpoint; byte-identical for identical parameters."""
        parts = [
            _CKPT_HEADER.pack(
                CHECKPOINT_MAGIC, CHECKPOINT_VERSION, self.dim, self.num_classes
            ),
            self.weights.astype("<f4").tobytes(),
            self.biases.astype("<f4").tobytes(),
        ]
        try:
            with open(path, "wb") as fh:
                fh.write(b"".join(parts))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path):
        """Read a checkpoint written by save."""
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        if len(blob) < _CKPT_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, dim, num_classes = _CKPT_HEADER.unpack_from(blob, 0)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        expected = _CKPT_HEADER.size + 4 * num_classes * dim + 4 * num_classes
        if len(blob) != expected:
            raise FormatError(
                f"{path}: expected {expected} bytes, got {len(blob)}"
            )
        offset = _CKPT_HEADER.size
        weights = np.frombuffer(blob, dtype="<f4", count=num_classes * dim, offset=offset)
        offset += 4 * num_classes * dim
        biases = np.frombuffer(blob, dtype="<f4", count=num_classes, offset=offset)
        return cls(weights.reshape(num_classes, dim), biases)

    def __eq__(self, other):
        if not isinstance(other, OdaClassifier):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(
            self.biases, other.biases
        )


class SgdMomentum:
    """SGD with classical momentum: v <- m v + g; p <- p - lr v."""

    def __init__(self, lr, momentum=0.9):
        if lr <= 0:
            raise InvalidConfig(f"lr must be > 0, got {lr}")
        if not 0 <= momentum < 1:
            raise InvalidConfig(f"momentum must be in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._vw = None
        self._vb = None

    def step(self, model, grads):
        """Apply one in-place update; reject non-finite gradients untouched."""
        if not grads.is_finite():
            raise NonFiniteGradient("gradient contains nan or inf")
        if grads.weights.shape != model.weights.shape or grads.biases.shape != model.biases.shape:
            raise DimensionMismatch("gradient shapes do not match model parameters")
        if self._vw is None:
            self._vw = np.zeros_like(model.weights)
            self._vb = np.zeros_like(model.biases)
        self._vw = self.momentum * self._vw + grads.weights
        self._vb = self.momentum * self._vb + grads.biases
        model.weights -= self.lr * self._vw
        model.biases -= self.lr * self._vb


def sgd_step(model, grads, opt):
    """Apply one optimizer update in place."""
    opt.step(model, grads)
