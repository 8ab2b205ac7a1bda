"""i.i.d. sources and distortion measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .prob import JointPmf, Pmf


class DistortionMeasure:
    """Per-letter distortion ``matrix[x, y] >= 0``."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        mat = np.array(matrix, dtype=float)
        if mat.ndim != 2 or 0 in mat.shape:
            raise ConfigError(f"distortion matrix must be 2-D and non-empty, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)) or np.any(mat < 0):
            raise ConfigError("distortion entries must be finite and non-negative")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __setattr__(self, key, value):
        raise AttributeError("DistortionMeasure is immutable")

    @property
    def d_max(self) -> float:
        return float(self.matrix.max())

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __repr__(self) -> str:
        return f"DistortionMeasure({self.matrix.tolist()!r})"


def hamming(k: int, k_out: int | None = None) -> DistortionMeasure:
    """0 on the diagonal, 1 elsewhere."""
    k_out = k if k_out is None else k_out
    return DistortionMeasure(1.0 - np.eye(k, k_out))


@dataclass(frozen=True)
class SourceModel:
    """Memoryless source of blocklength ``n`` over one or more jointly distributed variables."""

    joint: Pmf
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"blocklength must be a positive integer, got {self.n}")
        if not isinstance(self.joint, Pmf):
            object.__setattr__(self, "joint", JointPmf(self.joint))

    @property
    def nvars(self) -> int:
        return self.joint.probs.ndim


def sample_iid(model: SourceModel, rng: np.random.Generator):
    """Draw one block. Returns an int array of length n, or a tuple of them for joints."""
    table = model.joint.probs
    flat = rng.choice(table.size, size=model.n, p=table.ravel())
    if table.ndim == 1:
        return flat.astype(np.int64)
    return tuple(a.astype(np.int64) for a in np.unravel_index(flat, table.shape))


def sequence_distortion(x_seq, y_seq, d: DistortionMeasure) -> float:
    x = np.asarray(x_seq)
    y = np.asarray(y_seq)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise ConfigError(f"sequence lengths differ or are empty: {x.shape} vs {y.shape}")
    return float(d.matrix[x, y].mean())


def expected_distortion(joint, d: DistortionMeasure) -> float:
    table = joint.probs if isinstance(joint, Pmf) else np.asarray(joint, dtype=float)
    if table.shape != d.shape:
        raise ConfigError(f"joint shape {table.shape} does not match distortion shape {d.shape}")
    return float((table * d.matrix).sum())
