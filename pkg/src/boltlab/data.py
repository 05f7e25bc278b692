"""Seeded randomness and dataset plumbing.

Everything here is a pure function of (inputs, seed): the counter-based
generator below is the only source of randomness in the package, so runs
are reproducible bit-for-bit across processes and platforms.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IdxFormatError

_U64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _mix64(z: np.uint64 | np.ndarray) -> np.uint64 | np.ndarray:
    """splitmix64 finalizer; works on uint64 scalars and arrays (mod 2^64)."""
    with np.errstate(over="ignore"):  # wraparound is the point
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
        return z ^ (z >> np.uint64(31))


def _stream_base(seed: int, stream: int) -> np.uint64:
    s = np.uint64(seed & _U64)
    t = np.uint64(stream & _U64)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(s) + t * _GOLDEN)


def derive_seed(seed: int, index: int) -> int:
    """Deterministic child seed for sub-experiments (sweep points, epochs)."""
    return int(_stream_base(seed, index))


class Rng:
    """Counter-based splitmix64 stream.

    Output i of stream s under seed k is mix64(base + (i+1)*GOLDEN) with
    base = mix64(mix64(k) + s*GOLDEN), all arithmetic mod 2^64.  The same
    (seed, stream) pair always reproduces the same sequence regardless of
    how draws are chunked.
    """

    def __init__(self, seed: int, stream: int = 0):
        self._base = _stream_base(seed, stream)
        self._count = 0

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            return _mix64(idx * _GOLDEN + self._base)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in (0, 1], one u64 word each."""
        return ((self.u64(n) >> np.uint64(11)) + np.uint64(1)) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """n standard normals by the Box-Muller cosine branch.

        Consumes two u64 words per value, interleaved, so normal(a) followed
        by normal(b) equals normal(a + b).
        """
        k = self.u64(2 * n)
        u1 = ((k[0::2] >> np.uint64(11)) + np.uint64(1)) * 2.0**-53
        u2 = ((k[1::2] >> np.uint64(11)) + np.uint64(1)) * 2.0**-53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n) by sorting one u64 key per index."""
        return np.argsort(self.u64(n), kind="stable")


def standard_normal(rng: Rng) -> float:
    """Single standard-normal draw from the given stream."""
    return float(rng.normal(1)[0])


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled sample set; labels are 1-based class indices."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [1, num_classes]
    num_classes: int
    provenance: str = ""

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError(f"features must be a non-empty (n, d) array, got shape {feats.shape}")
        if labs.shape != (feats.shape[0],):
            raise ValueError(f"labels shape {labs.shape} does not match n={feats.shape[0]}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        if labs.min() < 1 or labs.max() > self.num_classes:
            raise ValueError(f"labels must lie in [1, {self.num_classes}]")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClassSpec:
    """One synthetic class: isotropic Gaussian in d dimensions."""

    mean: tuple[float, ...]
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError(f"variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class SyntheticSpec:
    classes: tuple[ClassSpec, ...]
    samples_per_class: int
    seed: int

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("need at least 2 classes")
        dims = {len(c.mean) for c in self.classes}
        if len(dims) != 1:
            raise ValueError("all class means must share a dimension")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")


def synthesize(spec: SyntheticSpec) -> Dataset:
    """Seeded Gaussian-mixture dataset with exact per-class counts.

    Class c draws from stream c of the spec seed; rows are laid out
    class-interleaved, then shuffled with keys from stream m.
    """
    m = len(spec.classes)
    k = spec.samples_per_class
    d = len(spec.classes[0].mean)
    n = m * k
    feats = np.empty((n, d), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    for c, cls in enumerate(spec.classes):
        rng = Rng(spec.seed, stream=c)
        block = rng.normal(k * d).reshape(k, d) * np.sqrt(cls.variance) + np.asarray(cls.mean)
        feats[c::m] = block  # interleaved: sample i of every class is adjacent
        labels[c::m] = c + 1
    perm = Rng(spec.seed, stream=m).permutation(n)
    return Dataset(feats[perm], labels[perm], num_classes=m, provenance="synthetic")


def _read_payload(path: str) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":  # gzip-compressed distribution files
        raw = gzip.decompress(raw)
    return raw


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] (divide by 255) and flattened row-major;
    0-based file labels are shifted to the 1-based convention.
    """
    img = _read_payload(images_path)
    if len(img) < 16:
        raise IdxFormatError(f"{images_path}: header truncated at offset {len(img)} (need 16 bytes)")
    magic, n_img, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad magic 0x{magic:08x} at offset 0 (expected 0x{IDX_IMAGE_MAGIC:08x})"
        )
    want = 16 + n_img * rows * cols
    if len(img) != want:
        raise IdxFormatError(
            f"{images_path}: payload is {len(img)} bytes, expected {want} (pixel data at offset 16)"
        )

    lab = _read_payload(labels_path)
    if len(lab) < 8:
        raise IdxFormatError(f"{labels_path}: header truncated at offset {len(lab)} (need 8 bytes)")
    magic_l, n_lab = struct.unpack(">II", lab[:8])
    if magic_l != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad magic 0x{magic_l:08x} at offset 0 (expected 0x{IDX_LABEL_MAGIC:08x})"
        )
    if len(lab) != 8 + n_lab:
        raise IdxFormatError(
            f"{labels_path}: payload is {len(lab)} bytes, expected {8 + n_lab} (label data at offset 8)"
        )
    if n_img != n_lab:
        raise IdxFormatError(
            f"image/label count mismatch: {n_img} images ({images_path}) vs {n_lab} labels ({labels_path})"
        )

    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(n_img, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8).astype(np.int64) + 1
    features = pixels.astype(np.float64) / 255.0
    return Dataset(features, labels, num_classes=int(labels.max()), provenance=f"idx:{images_path}")


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str, labels_path: str) -> None:
    """Emit an IDX pair (fixture/writer helper; inverse of load_idx).

    images: (n, rows, cols) uint8; labels: (n,) 0-based uint8.
    """
    images = np.ascontiguousarray(images, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())


def split(dataset: Dataset, fractions: tuple[float, float], seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive, seeded two-way split (e.g. train/validation)."""
    f1, f2 = fractions
    if abs(f1 + f2 - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {f1} + {f2}")
    n1 = int(round(f1 * dataset.n))
    n2 = dataset.n - n1
    if n1 < 1 or n2 < 1:
        raise ConfigError(f"split ({f1}, {f2}) of n={dataset.n} leaves an empty part")
    perm = Rng(seed, stream=0).permutation(dataset.n)
    a, b = perm[:n1], perm[n1:]
    mk = lambda idx: Dataset(
        dataset.features[idx], dataset.labels[idx], dataset.num_classes, dataset.provenance
    )
    return mk(a), mk(b)


def minibatches(dataset: Dataset, batch_size: int, epoch_seed: int) -> list[np.ndarray]:
    """Seeded permutation of all row indices, partitioned into batches.

    The last batch may be short; every index appears exactly once.
    """
    if not 1 <= batch_size <= dataset.n:
        raise ValueError(f"batch_size must be in [1, {dataset.n}], got {batch_size}")
    perm = Rng(epoch_seed, stream=0).permutation(dataset.n)
    return [perm[i : i + batch_size] for i in range(0, dataset.n, batch_size)]
