"""Finite-alphabet probability calculus.

Everything here works in the linear domain with base-2 logarithms. Objects
are immutable: the underlying arrays are flagged read-only at construction.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

NORMALIZE_TOL = 1e-9
MAX_VARIABLES = 4


def _as_table(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        raise ConfigError(f"{name}: empty table")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: non-finite entry")
    if np.any(arr < 0):
        raise ConfigError(f"{name}: negative entry")
    total = arr.sum()
    if abs(total - 1.0) > NORMALIZE_TOL:
        raise ConfigError(f"{name}: entries sum to {total!r}, not 1")
    arr = arr / total
    arr.setflags(write=False)
    return arr


class Pmf:
    """Probability mass function on {0, ..., k-1}."""

    __slots__ = ("probs",)
    _ndim_range = (1, 1)

    def __init__(self, probs):
        arr = _as_table(probs, type(self).__name__)
        lo, hi = self._ndim_range
        if not lo <= arr.ndim <= hi:
            raise ConfigError(
                f"{type(self).__name__}: expected {lo}..{hi} dimensions, got {arr.ndim}"
            )
        object.__setattr__(self, "probs", arr)

    def __setattr__(self, key, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probs.shape

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def __len__(self) -> int:
        return self.probs.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.probs.tolist()!r})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Pmf)
            and self.probs.shape == other.probs.shape
            and bool(np.array_equal(self.probs, other.probs))
        )

    __hash__ = None


class JointPmf(Pmf):
    """Joint pmf of up to four variables; axis ``i`` is variable ``i``."""

    __slots__ = ()
    _ndim_range = (1, MAX_VARIABLES)

    @property
    def nvars(self) -> int:
        return self.probs.ndim


class Channel:
    """Conditional kernel: ``matrix[a, b] = P(b | a)``.

    Rows whose conditioning symbol has zero mass (e.g. produced by
    :func:`reverse_channel`) are marked undefined and may not be used.
    """

    __slots__ = ("matrix", "undefined")

    def __init__(self, rows, undefined: Iterable[int] = ()):
        mat = np.array(rows, dtype=float)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise ConfigError(f"Channel: expected a non-empty matrix, got shape {mat.shape}")
        bad = np.zeros(mat.shape[0], dtype=bool)
        bad[list(undefined)] = True
        for i in np.flatnonzero(~bad):
            mat[i] = _as_table(mat[i], f"Channel row {i}")
        mat[bad] = np.nan
        mat.setflags(write=False)
        bad.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "undefined", bad)

    def __setattr__(self, key, value):
        raise AttributeError("Channel is immutable")

    @classmethod
    def from_joint(cls, joint) -> "Channel":
        """``P(second | first)`` from a two-variable joint table."""
        table = _joint_array(joint)
        if table.ndim != 2:
            raise ConfigError("Channel.from_joint needs a two-variable joint")
        mass = table.sum(axis=1)
        undefined = np.flatnonzero(mass <= 0)
        rows = np.where(mass[:, None] > 0, table / np.where(mass > 0, mass, 1)[:, None], 0.0)
        rows[undefined] = 1.0 / table.shape[1]
        return cls(rows, undefined=undefined)

    @property
    def n_inputs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    def row(self, a: int) -> np.ndarray:
        if self.undefined[a]:
            raise ConfigError(f"channel row {a} is undefined (zero-mass conditioning symbol)")
        return self.matrix[a]

    def log2(self) -> np.ndarray:
        """Elementwise log2 of the kernel; zero entries map to -inf."""
        with np.errstate(divide="ignore"):
            return np.log2(self.matrix)

    def __repr__(self) -> str:
        return f"Channel({self.matrix.tolist()!r})"


def _joint_array(joint) -> np.ndarray:
    if isinstance(joint, Pmf):
        return joint.probs
    return np.asarray(joint, dtype=float)


# ---------------------------------------------------------------------------
# constructors for common objects


def bsc(crossover: float) -> Channel:
    """Binary symmetric channel."""
    if not 0.0 <= crossover <= 1.0:
        raise ConfigError(f"crossover must lie in [0, 1], got {crossover}")
    q = float(crossover)
    return Channel([[1 - q, q], [q, 1 - q]])


def identity_channel(k: int) -> Channel:
    return Channel(np.eye(k))


def constant_channel(n_inputs: int, row) -> Channel:
    return Channel(np.tile(np.asarray(row, dtype=float), (n_inputs, 1)))


def product(*pmfs: Pmf) -> JointPmf:
    """Independent joint of several single-variable pmfs."""
    table = np.array(1.0)
    for p in pmfs:
        table = np.multiply.outer(table, p.probs)
    return JointPmf(table)


# ---------------------------------------------------------------------------
# operations


def compose(source: Pmf, kernel: Channel) -> JointPmf:
    """``joint[x, y] = source[x] * kernel[x, y]``."""
    p = source.probs
    if p.ndim != 1:
        raise ConfigError("compose: source must be a single-variable pmf")
    if kernel.n_inputs != p.size:
        raise ConfigError(
            f"compose: channel has {kernel.n_inputs} inputs, source has {p.size} symbols"
        )
    used = p > 0
    if np.any(kernel.undefined & used):
        raise ConfigError("compose: source puts mass on an undefined channel row")
    rows = np.where(kernel.undefined[:, None], 0.0, kernel.matrix)
    return JointPmf(p[:, None] * rows)


def attach(joint: JointPmf, kernel: Channel, given: int) -> JointPmf:
    """Append a new last variable drawn through ``kernel`` from axis ``given``.

    Builds Markov extensions such as ``P_XZ * P_{V|X}`` (new variable depends
    on the joint only through the chosen axis).
    """
    table = joint.probs
    if not 0 <= given < table.ndim:
        raise ConfigError(f"attach: axis {given} out of range")
    if table.ndim + 1 > MAX_VARIABLES:
        raise ConfigError(f"attach: at most {MAX_VARIABLES} variables supported")
    if kernel.n_inputs != table.shape[given]:
        raise ConfigError("attach: channel input alphabet does not match the conditioning axis")
    rows = np.where(kernel.undefined[:, None], 0.0, kernel.matrix)
    shape = [1] * (table.ndim + 1)
    shape[given] = rows.shape[0]
    shape[-1] = rows.shape[1]
    return JointPmf(table[..., None] * rows.reshape(shape))


def marginalize(joint: Pmf, keep: Sequence[int]):
    """Sum out every axis not listed in ``keep`` (kept axes stay in the given order)."""
    table = _joint_array(joint)
    keep = list(keep)
    if not keep:
        raise ConfigError("marginalize: keep must name at least one variable")
    if len(set(keep)) != len(keep) or any(not 0 <= k < table.ndim for k in keep):
        raise ConfigError(f"marginalize: invalid axes {keep} for {table.ndim} variables")
    drop = tuple(i for i in range(table.ndim) if i not in keep)
    reduced = table.sum(axis=drop) if drop else table
    remaining = [i for i in range(table.ndim) if i in keep]
    reduced = np.transpose(reduced, [remaining.index(k) for k in keep])
    return Pmf(reduced) if len(keep) == 1 else JointPmf(reduced)


def reverse_channel(joint) -> Channel:
    """Bayes inversion of a two-variable joint: ``rev[y, x] = joint[x, y] / P_Y(y)``."""
    table = _joint_array(joint)
    if table.ndim != 2:
        raise ConfigError("reverse_channel needs a two-variable joint")
    return Channel.from_joint(table.T)


def _plogp(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def entropy(p) -> float:
    """Shannon entropy in bits of a pmf or of a whole joint table."""
    return _plogp(_joint_array(p).ravel())


def conditional_entropy(joint) -> float:
    """H(Y | X) = H(X, Y) - H(X) for a joint over (X, Y)."""
    table = _joint_array(joint)
    return entropy(table) - entropy(table.sum(axis=tuple(range(1, table.ndim))))


def _mi_2d(table: np.ndarray) -> float:
    px = table.sum(axis=1, keepdims=True)
    py = table.sum(axis=0, keepdims=True)
    mask = table > 0
    ratio = table[mask] / (px * py)[mask]
    return max(0.0, float((table[mask] * np.log2(ratio)).sum()))


def mutual_information(joint, a: Sequence[int] = (0,), b: Sequence[int] = (1,),
                       given: Sequence[int] = ()) -> float:
    """I(A; B | C) in bits, where A, B, C are groups of axes of ``joint``.

    The conditional form is the ``P(c)``-weighted sum of the per-``c``
    mutual informations.
    """
    table = _joint_array(joint)
    a, b, given = list(a), list(b), list(given)
    used = a + b + given
    if not a or not b or len(set(used)) != len(used):
        raise ConfigError("mutual_information: A and B must be non-empty disjoint axis groups")
    sub = marginalize(table, used).probs if len(used) > 1 else table
    sa = int(np.prod([table.shape[i] for i in a]))
    sb = int(np.prod([table.shape[i] for i in b]))
    sc = int(np.prod([table.shape[i] for i in given])) if given else 1
    sub = sub.reshape(sa, sb, sc)
    total = 0.0
    for c in range(sc):
        slab = sub[:, :, c]
        mass = slab.sum()
        if mass > 0:
            total += mass * _mi_2d(slab / mass)
    return total


def total_variation(p, q) -> float:
    """Half the L1 distance between two distributions on the same finite space."""
    pa, qa = _joint_array(p), _joint_array(q)
    if pa.shape != qa.shape:
        raise ConfigError(f"total_variation: shapes {pa.shape} and {qa.shape} differ")
    return 0.5 * float(np.abs(pa - qa).sum())


def iid_power(p: Pmf, n: int) -> np.ndarray:
    """The n-fold product of ``p`` as a flat vector in row-major sequence order."""
    out = np.ones(1)
    for _ in range(n):
        out = np.multiply.outer(out, p.probs).ravel()
    return out
