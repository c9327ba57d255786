"""Embedding datasets, prototype banks, binary file formats, mini-batch
sampling, and the seeded synthetic benchmark generator.

File formats (little-endian):

  Embedding file:  magic "ODAE", u32 version=1, u32 dim, u32 num_known,
                   u32 num_total, u64 record_count; per record u64 id,
                   u8 domain (0 source / 1 target), i32 label (-1 =
                   unlabeled), dim x f32 vector.
  Prototype file:  magic "ODAP", u32 version=1, u32 dim, u32 class_count;
                   per class u16 name_len, UTF-8 name, dim x f32 vector.

Target record labels are a ground-truth side channel: only evaluation may
read them, never a loss or training step.
"""

import enum
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import FormatError, InvalidConfig, InvariantError, IoError

EMBEDDING_MAGIC = b"ODAE"
PROTOTYPE_MAGIC = b"ODAP"
FORMAT_VERSION = 1

_EMB_HEADER = struct.Struct("<4sIIIIQ")
_EMB_RECORD_FIXED = struct.Struct("<QBi")
_PROTO_HEADER = struct.Struct("<4sIII")
_NAME_LEN = struct.Struct("<H")


class Domain(enum.IntEnum):
    SOURCE = 0
    TARGET = 1


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One embedding vector with its id, domain tag, and label.

    Source records carry a known-class label in [0, num_known). Target
    labels are ground truth for evaluation only (-1 when unlabeled).
    """

    id: int
    vector: np.ndarray
    label: int
    domain: Domain

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise InvariantError(f"record {self.id}: vector must be 1-D")
        vec = np.ascontiguousarray(vec)
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.id < 0:
            raise InvariantError(f"record id must be non-negative, got {self.id}")

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.domain == other.domain
            and np.array_equal(self.vector, other.vector)
        )


class EmbeddingDataset:
    """Immutable collection of source and target embedding records."""

    def __init__(self, dim, num_known_classes, num_total_classes, records):
        if dim < 1:
            raise InvariantError(f"dim must be positive, got {dim}")
        if num_known_classes < 1:
            raise InvariantError("need at least one known class")
        if num_known_classes >= num_total_classes:
            raise InvariantError(
                f"open-set data needs num_known < num_total, got "
                f"{num_known_classes} >= {num_total_classes}"
            )
        self.dim = int(dim)
        self.num_known_classes = int(num_known_classes)
        self.num_total_classes = int(num_total_classes)
        self.records = tuple(records)
        seen = set()
        for rec in self.records:
            self._check_record(rec)
            if rec.id in seen:
                raise InvariantError(f"duplicate record id {rec.id}")
            seen.add(rec.id)
        self._source_idx = None
        self._target_idx = None

    def _check_record(self, rec):
        if rec.vector.shape[0] != self.dim:
            raise InvariantError(
                f"record {rec.id}: vector length {rec.vector.shape[0]} != dim {self.dim}"
            )
        if rec.domain == Domain.SOURCE:
            if not 0 <= rec.label < self.num_known_classes:
                raise InvariantError(
                    f"source record {rec.id}: label {rec.label} outside "
                    f"[0, {self.num_known_classes})"
                )
        else:
            if rec.label != -1 and not 0 <= rec.label < self.num_total_classes:
                raise InvariantError(
                    f"target record {rec.id}: label {rec.label} outside "
                    f"[0, {self.num_total_classes}) and not -1"
                )

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDataset):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.num_known_classes == other.num_known_classes
            and self.num_total_classes == other.num_total_classes
            and len(self.records) == len(other.records)
            and all(a == b for a, b in zip(self.records, other.records))
        )

    def indices(self, domain):
        """Positions of the records belonging to one domain, in file order."""
        domain = Domain(domain)
        if domain == Domain.SOURCE:
            if self._source_idx is None:
                self._source_idx = np.array(
                    [i for i, r in enumerate(self.records) if r.domain == Domain.SOURCE],
                    dtype=np.int64,
                )
            return self._source_idx
        if self._target_idx is None:
            self._target_idx = np.array(
                [i for i, r in enumerate(self.records) if r.domain == Domain.TARGET],
                dtype=np.int64,
            )
        return self._target_idx

    def subset(self, domain):
        """New dataset containing only one domain's records."""
        return EmbeddingDataset(
            self.dim,
            self.num_known_classes,
            self.num_total_classes,
            [self.records[i] for i in self.indices(domain)],
        )


def stack_vectors(records):
    """Stack record vectors into a float64 (n, dim) design matrix."""
    if not records:
        return np.zeros((0, 0), dtype=np.float64)
    return np.stack([r.vector for r in records]).astype(np.float64)


class PrototypeBank:
    """Frozen per-class prototype vectors, one unit-norm row per known class."""

    def __init__(self, dim, prototypes, class_names):
        protos = np.ascontiguousarray(np.asarray(prototypes, dtype=np.float32))
        names = tuple(str(n) for n in class_names)
        if protos.ndim != 2 or protos.shape[1] != dim:
            raise InvariantError(
                f"prototype matrix must be (num_classes, {dim}), got {protos.shape}"
            )
        if protos.shape[0] != len(names):
            raise InvariantError(
                f"{protos.shape[0]} prototypes but {len(names)} class names"
            )
        if protos.shape[0] < 1:
            raise InvariantError("prototype bank must hold at least one class")
        norms = np.linalg.norm(protos.astype(np.float64), axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise InvariantError(
                f"prototypes must be unit-norm within 1e-6, worst deviation "
                f"{np.abs(norms - 1.0).max():.3g}"
            )
        protos.flags.writeable = False
        self.dim = int(dim)
        self.prototypes = protos
        self.class_names = names

    @property
    def num_classes(self):
        return self.prototypes.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PrototypeBank):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.class_names == other.class_names
            and np.array_equal(self.prototypes, other.prototypes)
        )


def write_embeddings(dataset, path):
    """Serialize a dataset; byte-identical output for identical input."""
    parts = [
        _EMB_HEADER.pack(
            EMBEDDING_MAGIC,
            FORMAT_VERSION,
            dataset.dim,
            dataset.num_known_classes,
            dataset.num_total_classes,
            len(dataset.records),
        )
    ]
    for rec in dataset.records:
        parts.append(_EMB_RECORD_FIXED.pack(rec.id, int(rec.domain), rec.label))
        parts.append(rec.vector.astype("<f4").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_embeddings(path):
    """Load and validate an embedding file written by write_embeddings."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _EMB_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, num_known, num_total, count = _EMB_HEADER.unpack_from(blob, 0)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    record_size = _EMB_RECORD_FIXED.size + 4 * dim
    expected = _EMB_HEADER.size + count * record_size
    if len(blob) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {count} records, got {len(blob)}"
        )
    records = []
    offset = _EMB_HEADER.size
    for _ in range(count):
        rec_id, domain, label = _EMB_RECORD_FIXED.unpack_from(blob, offset)
        offset += _EMB_RECORD_FIXED.size
        if domain not in (0, 1):
            raise FormatError(f"{path}: record {rec_id} has domain byte {domain}")
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        records.append(EmbeddingRecord(rec_id, vec, label, Domain(domain)))
    return EmbeddingDataset(dim, num_known, num_total, records)


def write_prototypes(bank, path):
    """Serialize a prototype bank; deterministic bytes."""
    parts = [
        _PROTO_HEADER.pack(PROTOTYPE_MAGIC, FORMAT_VERSION, bank.dim, bank.num_classes)
    ]
    for name, vec in zip(bank.class_names, bank.prototypes):
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InvariantError(f"class name too long: {name[:32]}...")
        parts.append(_NAME_LEN.pack(len(encoded)))
        parts.append(encoded)
        parts.append(vec.astype("<f4").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_prototypes(path):
    """Load and validate a prototype file written by write_prototypes."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _PROTO_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, count = _PROTO_HEADER.unpack_from(blob, 0)
    if magic != PROTOTYPE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    names = []
    rows = []
    offset = _PROTO_HEADER.size
    for _ in range(count):
        if offset + _NAME_LEN.size > len(blob):
            raise FormatError(f"{path}: truncated class entry")
        (name_len,) = _NAME_LEN.unpack_from(blob, offset)
        offset += _NAME_LEN.size
        if offset + name_len + 4 * dim > len(blob):
            raise FormatError(f"{path}: truncated class entry")
        names.append(blob[offset : offset + name_len].decode("utf-8"))
        offset += name_len
        rows.append(np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy())
        offset += 4 * dim
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return PrototypeBank(dim, np.stack(rows) if rows else np.zeros((0, dim), "f4"), names)


class BatchSampler:
    """Deterministic epoch-shuffling sampler over one domain's records.

    The permutation for an epoch is a pure function of (seed, epoch), so two
    samplers with the same seed emit identical batch streams. Every record
    appears exactly once per epoch; the final short batch is emitted.
    """

    def __init__(self, batch_size, seed, domain):
        if batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {batch_size}")
        self.batch_size = int(batch_size)
        self.seed = int(seed)
        self.domain = Domain(domain)
        self.epoch = 0
        self._cursor = 0
        self._perm = None

    def _epoch_permutation(self, n):
        key = (self.seed, int(self.domain), self.epoch)
        return np.random.default_rng(key).permutation(n)

    def batches_per_epoch(self, dataset):
        n = len(dataset.indices(self.domain))
        return -(-n // self.batch_size)

    def next_batch(self, dataset):
        """Next mini-batch of records; rolls into a fresh epoch when done."""
        idx = dataset.indices(self.domain)
        n = len(idx)
        if n == 0:
            raise InvariantError(f"dataset has no {self.domain.name.lower()} records")
        if self._perm is None or len(self._perm) != n:
            self._perm = self._epoch_permutation(n)
            self._cursor = 0
        if self._cursor >= n:
            self.epoch += 1
            self._perm = self._epoch_permutation(n)
            self._cursor = 0
        take = self._perm[self._cursor : self._cursor + self.batch_size]
        self._cursor += len(take)
        return [dataset.records[idx[i]] for i in take]


def next_batch(sampler, dataset):
    """Draw the sampler's next mini-batch from the dataset."""
    return sampler.next_batch(dataset)


@dataclass(frozen=True)
class SynthConfig:
    """Configuration for the seeded synthetic open-set benchmark.

    Class centers are unit vectors in a narrow cone around one global
    direction, which compresses pairwise cosine similarities the way real
    joint image-text embedding spaces do; `separation` sets the tangent
    magnitude before renormalization. cluster_spread is the expected
    Euclidean norm of a sample's noise vector (per-coordinate sigma is
    spread/sqrt(dim)), so cluster tightness is dimension-independent. A
    scalar domain_shift displaces each class center along an independent
    seeded unit direction; an explicit vector is applied to every class
    as-is. `confusable` sets the fraction of hard classes on both sides:
    that share of unknown classes gets centers that are barycentric
    mixtures of known class centers (two-, three-, and four-way in
    rotation), and the same share of known classes gets its scalar domain
    shift directed toward another known class instead of a random
    direction. Both give the zero-shot entropy distributions of known and
    unknown samples a partial overlap instead of a clean split.
    """

    dim: int = 64
    num_known: int = 10
    num_total: int = 21
    samples_per_class_source: int = 50
    samples_per_class_target: int = 50
    cluster_spread: float = 0.15
    domain_shift: Union[float, Sequence[float]] = 0.2
    seed: int = 7
    separation: float = 0.28
    confusable: float = 0.3

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidConfig(f"dim must be >= 2, got {self.dim}")
        if not self.num_known < self.num_total:
            raise InvalidConfig(
                f"need num_known < num_total, got {self.num_known} >= {self.num_total}"
            )
        if self.num_known < 1:
            raise InvalidConfig("need at least one known class")
        if self.cluster_spread <= 0:
            raise InvalidConfig(f"cluster_spread must be > 0, got {self.cluster_spread}")
        if self.separation <= 0:
            raise InvalidConfig(f"separation must be > 0, got {self.separation}")
        if not 0.0 <= self.confusable <= 1.0:
            raise InvalidConfig(f"confusable must be in [0, 1], got {self.confusable}")
        if self.samples_per_class_source < 1 or self.samples_per_class_target < 1:
            raise InvalidConfig("samples per class must be >= 1")
        if not np.isscalar(self.domain_shift):
            vec = np.asarray(self.domain_shift, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise InvalidConfig(
                    f"vector domain_shift must have shape ({self.dim},), got {vec.shape}"
                )


def _unit(v):
    return v / np.linalg.norm(v)


# Cosine between a confusable known class's shift direction and the line to
# its partner class. 1.0 would drift straight at the partner; lower values
# keep the drifted cluster identifiable enough that its zero-shot pseudo
# probabilities remain useful distillation targets.
_DRIFT_BLEND = 0.95


def generate_synthetic(config):
    """Build a seeded (EmbeddingDataset, PrototypeBank) benchmark pair.

    Source records exist for known classes only; target records cover all
    classes and sit at centers displaced by the domain shift. Prototypes are
    the renormalized empirical means of each known class's source records.
    Output is a pure function of the config, including the seed.
    """
    rng = np.random.default_rng(config.seed)
    d = config.dim

    axis = _unit(rng.normal(size=d))
    centers = np.empty((config.num_total, d))
    for k in range(config.num_total):
        tangent = _unit(rng.normal(size=d)) * config.separation
        centers[k] = _unit(axis + tangent)
    num_confusable = int(round(config.confusable * (config.num_total - config.num_known)))
    for j in range(num_confusable):
        ways = 2 + (j % 3)
        picked = rng.choice(config.num_known, size=ways, replace=False)
        weights = rng.dirichlet(np.full(ways, 4.0))
        centers[config.num_known + j] = _unit(weights @ centers[picked])

    if np.isscalar(config.domain_shift):
        num_drift = int(round(config.confusable * config.num_known))
        directions = []
        for k in range(config.num_total):
            if k < num_drift:
                other = int(rng.choice(config.num_known - 1))
                other += other >= k
                toward = _unit(centers[other] - centers[k])
                noise = rng.normal(size=d)
                noise = _unit(noise - (noise @ toward) * toward)
                blend = _DRIFT_BLEND
                directions.append(blend * toward + np.sqrt(1.0 - blend * blend) * noise)
            else:
                directions.append(_unit(rng.normal(size=d)))
        shift = np.stack(directions) * float(config.domain_shift)
    else:
        shift = np.tile(np.asarray(config.domain_shift, dtype=np.float64), (config.num_total, 1))

    records = []
    next_id = 0
    sigma = config.cluster_spread / np.sqrt(d)
    source_sums = np.zeros((config.num_known, d))
    for k in range(config.num_known):
        noise = rng.normal(size=(config.samples_per_class_source, d))
        vecs = centers[k] + sigma * noise
        source_sums[k] = vecs.sum(axis=0)
        for row in vecs:
            records.append(
                EmbeddingRecord(next_id, row.astype(np.float32), k, Domain.SOURCE)
            )
            next_id += 1
    for k in range(config.num_total):
        noise = rng.normal(size=(config.samples_per_class_target, d))
        vecs = centers[k] + shift[k] + sigma * noise
        for row in vecs:
            records.append(
                EmbeddingRecord(next_id, row.astype(np.float32), k, Domain.TARGET)
            )
            next_id += 1

    means = source_sums / config.samples_per_class_source
    protos = np.stack([_unit(m) for m in means]).astype(np.float32)
    names = tuple(f"class_{k:02d}" for k in range(config.num_known))

    dataset = EmbeddingDataset(d, config.num_known, config.num_total, records)
    bank = PrototypeBank(d, protos, names)
    return dataset, bank
