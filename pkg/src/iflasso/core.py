"""Regression panels and the linear operators shared by every estimator.

A panel holds a response ``y`` (length ``T``) and a regressor matrix ``X``
(``T x p``).  Time-varying coefficients live in a ``p x T`` matrix ``B`` whose
component-major vectorization is ``b[j*T + t] = B[j, t]`` (0-based).  With that
layout the stacked design ``[diag(x_1) | ... | diag(x_p)]`` maps ``b`` to the
fitted values ``sum_j x[t, j] * B[j, t]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator

__all__ = [
    "PanelFormatError",
    "RegressionPanel",
    "CoefficientMatrix",
    "StackedDesign",
    "DiffOperator",
    "TransformedDesign",
    "stack_design",
    "build_diff_operator",
    "transformed_design",
    "read_panel_csv",
    "write_panel_csv",
]


class PanelFormatError(ValueError):
    """Malformed panel data; ``line`` and ``column`` locate the bad cell when known."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegressionPanel:
    """Response ``y`` of length ``T`` and regressors ``X`` of shape ``(T, p)``."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1:
            raise PanelFormatError(f"y must be one-dimensional, got shape {y.shape}")
        if X.ndim != 2:
            raise PanelFormatError(f"X must be two-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise PanelFormatError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if y.shape[0] < 2:
            raise PanelFormatError("a panel needs at least two time steps")
        if X.shape[1] < 1:
            raise PanelFormatError("a panel needs at least one regressor")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise PanelFormatError("panel contains non-finite values")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """Time-varying coefficients stored as ``B[j, t]`` (component, time)."""

    B: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2:
            raise ValueError(f"B must be two-dimensional, got shape {B.shape}")
        object.__setattr__(self, "B", _frozen(B))

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def T(self) -> int:
        return self.B.shape[1]

    @property
    def by_time(self) -> np.ndarray:
        """The ``T x p`` view, row ``t`` holding the coefficients active at time ``t``."""
        return self.B.T

    def vec(self) -> np.ndarray:
        return self.B.ravel().copy()

    @classmethod
    def unvec(cls, b: np.ndarray, T: int) -> "CoefficientMatrix":
        b = np.asarray(b, dtype=float)
        if b.ndim != 1 or b.size % T:
            raise ValueError(f"cannot reshape a vector of length {b.size} into blocks of {T}")
        return cls(b.reshape(-1, T))

    @classmethod
    def from_time_major(cls, beta: np.ndarray) -> "CoefficientMatrix":
        return cls(np.asarray(beta, dtype=float).T)


class StackedDesign:
    """The ``T x Tp`` block design ``[diag(x_1) | ... | diag(x_p)]``, kept implicit."""

    def __init__(self, panel: RegressionPanel):
        self.panel = panel

    @property
    def shape(self) -> tuple[int, int]:
        return (self.panel.T, self.panel.T * self.panel.p)

    def apply(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.shape[1],):
            raise ValueError(f"expected a vector of length {self.shape[1]}, got {b.shape}")
        return np.einsum("tj,jt->t", self.panel.X, b.reshape(self.panel.p, self.panel.T))

    def apply_transpose(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.shape[0],):
            raise ValueError(f"expected a vector of length {self.shape[0]}, got {r.shape}")
        return (self.panel.X * r[:, None]).T.ravel()

    def materialize(self) -> np.ndarray:
        T, p = self.panel.T, self.panel.p
        out = np.zeros((T, T * p))
        rows = np.tile(np.arange(T), p)
        out[rows, np.arange(T * p)] = self.panel.X.T.ravel()
        return out

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, rmatvec=self.apply_transpose, dtype=float)


class DiffOperator:
    """Block-diagonal lag-``d`` differencing, one ``I_k - shift_d`` block per component."""

    def __init__(self, d: int, block_sizes: Sequence[int]):
        if int(d) < 1:
            raise ValueError("lag d must be at least 1")
        sizes = np.asarray(block_sizes, dtype=int)
        if sizes.ndim != 1 or sizes.size == 0 or np.any(sizes < 1):
            raise ValueError("block sizes must be a non-empty vector of positive counts")
        self.d = int(d)
        self.block_sizes = sizes
        self._offsets = np.concatenate(([0], np.cumsum(sizes)))

    @property
    def n_total(self) -> int:
        return int(self._offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_total, self.n_total)

    def _blocks(self, v: np.ndarray):
        for lo, hi in zip(self._offsets[:-1], self._offsets[1:]):
            yield v[lo:hi]

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_total,):
            raise ValueError(f"expected a vector of length {self.n_total}, got {v.shape}")
        return v

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = self._check(v)
        out = v.copy()
        d = self.d
        for src, dst in zip(self._blocks(v), self._blocks(out)):
            dst[d:] -= src[:-d] if src.size > d else src[:0]
        return out

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        if self.d != 1:
            raise NotImplementedError("inversion is only available for lag-1 differences")
        v = self._check(v)
        if np.all(self.block_sizes == self.block_sizes[0]):
            return np.cumsum(v.reshape(-1, self.block_sizes[0]), axis=1).ravel()
        return np.concatenate([np.cumsum(blk) for blk in self._blocks(v)])

    def apply_inverse_transpose(self, v: np.ndarray) -> np.ndarray:
        """Per-block reverse cumulative sum, the adjoint of :meth:`apply_inverse`."""
        if self.d != 1:
            raise NotImplementedError("inversion is only available for lag-1 differences")
        v = self._check(v)
        return np.concatenate([np.cumsum(blk[::-1])[::-1] for blk in self._blocks(v)])

    def materialize(self) -> np.ndarray:
        out = np.eye(self.n_total)
        for lo, k in zip(self._offsets[:-1], self.block_sizes):
            idx = np.arange(lo + self.d, lo + k)
            out[idx, idx - self.d] = -1.0
        return out


class TransformedDesign:
    """``X L^{-1}``: the stacked design acting on levels-plus-differences.

    Column ``j*T + s`` equals ``x[:, j]`` masked to times ``t >= s``, so a
    unit entry in the difference vector switches a regressor on from that
    time onwards.
    """

    def __init__(self, design: StackedDesign, op: DiffOperator):
        if op.d != 1:
            raise NotImplementedError("the transformed design requires lag-1 differences")
        if op.n_total != design.shape[1]:
            raise ValueError(
                f"difference operator covers {op.n_total} coefficients, design has {design.shape[1]} columns"
            )
        self.design = design
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.design.shape

    def apply(self, theta: np.ndarray) -> np.ndarray:
        return self.design.apply(self.op.apply_inverse(theta))

    def apply_transpose(self, r: np.ndarray) -> np.ndarray:
        return self.op.apply_inverse_transpose(self.design.apply_transpose(r))

    def materialize(self) -> np.ndarray:
        panel = self.design.panel
        T, p = panel.T, panel.p
        if not np.all(self.op.block_sizes == T):
            return self.design.materialize() @ np.linalg.inv(self.op.materialize())
        mask = np.tril(np.ones((T, T)))
        # (T, p, T) -> (T, p*T): column j*T + s is x[:, j] * [t >= s]
        return (panel.X[:, :, None] * mask[:, None, :]).reshape(T, p * T)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, rmatvec=self.apply_transpose, dtype=float)


def stack_design(panel: RegressionPanel) -> StackedDesign:
    return StackedDesign(panel)


def build_diff_operator(d: int, block_sizes: Sequence[int]) -> DiffOperator:
    return DiffOperator(d, block_sizes)


def transformed_design(design: StackedDesign, op: DiffOperator) -> TransformedDesign:
    return TransformedDesign(design, op)


def read_panel_csv(path: str | Path) -> RegressionPanel:
    """Read a ``t,y,x1,...,xp`` panel; raises :class:`PanelFormatError` with the offending line."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError("empty file", line=1) from None
        header = [h.strip() for h in header]
        p = len(header) - 2
        expected = ["t", "y"] + [f"x{j}" for j in range(1, p + 1)]
        if p < 1 or header != expected:
            raise PanelFormatError(f"header must be {','.join(expected) if p >= 1 else 't,y,x1,...'}", line=1)
        ts, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PanelFormatError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            try:
                t = int(row[0])
            except ValueError:
                raise PanelFormatError(f"time index {row[0]!r} is not an integer", line=lineno, column="t") from None
            vals = []
            for name, cell in zip(header[1:], row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise PanelFormatError(f"value {cell!r} is not numeric", line=lineno, column=name) from None
                if not np.isfinite(v):
                    raise PanelFormatError(f"value {cell!r} is not finite", line=lineno, column=name)
                vals.append(v)
            if t != len(ts) + 1:
                raise PanelFormatError(f"time index must be {len(ts) + 1}, found {t}", line=lineno, column="t")
            ts.append(t)
            rows.append(vals)
    if len(rows) < 2:
        raise PanelFormatError("a panel needs at least two time steps")
    data = np.array(rows)
    return RegressionPanel(y=data[:, 0], X=data[:, 1:])


def write_panel_csv(panel: RegressionPanel, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "y"] + [f"x{j}" for j in range(1, panel.p + 1)])
        for t in range(panel.T):
            w.writerow([t + 1, repr(float(panel.y[t]))] + [repr(float(v)) for v in panel.X[t]])
