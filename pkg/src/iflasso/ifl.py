"""Iterative fused lasso: break detection, model reduction and variable selection.

The estimator runs three stages on a :class:`~iflasso.core.RegressionPanel`:

1. ``detect_breaks`` fits an adaptive lasso on the levels-plus-differences
   parameterization ``theta = L1 b``; nonzero differences are breaks.
2. ``mop`` collapses runs of equal coefficients into segment variables through
   a 0/1 matrix ``M`` with ``b = M gamma``.
3. ``select_variables`` fits an adaptive lasso on the reduced design ``X M``.

Break times are 0-based inside the package: time ``t`` is a break for
component ``j`` when ``B[j, t] != B[j, t - 1]``, so ``1 <= t <= T - 1``.
File exports use 1-based components and times.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import (
    CoefficientMatrix,
    RegressionPanel,
    build_diff_operator,
    stack_design,
    transformed_design,
)
from .solver import (
    PathFit,
    WeightedLassoProblem,
    adaptive_weights,
    fit_path,
    lambda_grid,
    ridge_init,
)

__all__ = [
    "MalformedPatternError",
    "BreakPattern",
    "ReductionMap",
    "IflConfig",
    "IflFit",
    "detect_breaks",
    "build_gamma_d",
    "build_M",
    "mop",
    "select_variables",
    "fit_ifl",
    "read_fit_json",
]


class MalformedPatternError(ValueError):
    pass


@dataclass(frozen=True)
class BreakPattern:
    """Break times per component for a ``T``-step, ``p``-component panel."""

    T: int
    breaks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("a break pattern needs T >= 2")
        clean = []
        for j, times in enumerate(self.breaks):
            ts = tuple(sorted({int(t) for t in times}))
            if ts and (ts[0] < 1 or ts[-1] > self.T - 1):
                raise ValueError(f"component {j}: break times must lie in [1, {self.T - 1}]")
            clean.append(ts)
        if not clean:
            raise ValueError("a break pattern needs at least one component")
        object.__setattr__(self, "breaks", tuple(clean))

    @property
    def p(self) -> int:
        return len(self.breaks)

    @property
    def n_breaks(self) -> int:
        return sum(len(b) for b in self.breaks)

    @property
    def starts(self) -> np.ndarray:
        """Segment-start indicator over ``b`` (length ``T * p``)."""
        s = np.zeros(self.T * self.p, dtype=bool)
        for j, times in enumerate(self.breaks):
            s[j * self.T] = True
            s[[j * self.T + t for t in times]] = True
        return s

    def as_set(self) -> set[tuple[int, int]]:
        return {(j, t) for j, times in enumerate(self.breaks) for t in times}

    @classmethod
    def empty(cls, T: int, p: int) -> "BreakPattern":
        return cls(T, ((),) * p)

    @classmethod
    def full(cls, T: int, p: int) -> "BreakPattern":
        return cls(T, (tuple(range(1, T)),) * p)

    @classmethod
    def from_starts(cls, s: np.ndarray, T: int) -> "BreakPattern":
        s = np.asarray(s, dtype=bool).reshape(-1, T)
        return cls(T, tuple(tuple(np.flatnonzero(row[1:]) + 1) for row in s))

    @classmethod
    def from_set(cls, pairs: Iterable[tuple[int, int]], T: int, p: int) -> "BreakPattern":
        per = [[] for _ in range(p)]
        for j, t in pairs:
            per[j].append(t)
        return cls(T, tuple(tuple(b) for b in per))

    @classmethod
    def from_coefficients(cls, B: np.ndarray | CoefficientMatrix) -> "BreakPattern":
        """The pattern implied by exact changes between consecutive coefficients."""
        B = B.B if isinstance(B, CoefficientMatrix) else np.asarray(B)
        changed = B[:, 1:] != B[:, :-1]
        return cls(B.shape[1], tuple(tuple(np.flatnonzero(row) + 1) for row in changed))


@dataclass(frozen=True, eq=False)
class ReductionMap:
    """Segment bookkeeping: ``b = M @ gamma`` with one column of ``M`` per segment."""

    beta_in: np.ndarray
    beta_out: np.ndarray
    gamma_d: np.ndarray
    M: np.ndarray

    @property
    def n_beta_in(self) -> int:
        return int(self.beta_in.sum())

    @property
    def n_beta_out(self) -> int:
        return int(self.beta_out.sum())

    @property
    def segment_component(self) -> np.ndarray:
        """Component index owning each reduced coordinate."""
        return np.repeat(np.arange(self.beta_out.size), self.beta_out)

    def segment_bounds(self) -> list[tuple[int, int, int]]:
        """``(component, first_time, last_time)`` per segment, times 0-based inclusive."""
        T = int(self.beta_in[0])
        out = []
        starts = np.flatnonzero(self.gamma_d)
        for k, pos in enumerate(starts):
            end = starts[k + 1] if k + 1 < starts.size else self.n_beta_in
            j = pos // T
            end = min(end, (j + 1) * T)
            out.append((int(j), int(pos - j * T), int(end - 1 - j * T)))
        return out


def build_gamma_d(pattern: BreakPattern, d: int = 1) -> np.ndarray:
    """Running segment index at every segment start, 0 at continuation positions."""
    if d != 1:
        raise NotImplementedError("only lag-1 fusion is supported")
    s = pattern.starts
    gamma = np.zeros(s.size, dtype=np.int64)
    gamma[s] = np.arange(1, int(s.sum()) + 1)
    return gamma


def build_M(gamma_d: np.ndarray, beta_in, beta_out, d: int = 1) -> np.ndarray:
    """0/1 selection matrix carrying each segment label forward to its continuation rows."""
    if d != 1:
        raise NotImplementedError("only lag-1 fusion is supported")
    gamma_d = np.asarray(gamma_d, dtype=np.int64)
    beta_in = np.asarray(beta_in, dtype=np.int64)
    beta_out = np.asarray(beta_out, dtype=np.int64)
    n_in, n_out = int(beta_in.sum()), int(beta_out.sum())
    if gamma_d.shape != (n_in,):
        raise MalformedPatternError(f"gamma_d must have length {n_in}, got {gamma_d.shape}")
    nz = gamma_d[gamma_d != 0]
    if nz.size != n_out or not np.array_equal(nz, np.arange(1, n_out + 1)):
        raise MalformedPatternError("nonzero entries of gamma_d must be 1..n_beta_out in order")
    M = np.zeros((n_in, n_out))
    offsets = np.concatenate(([0], np.cumsum(beta_in)))
    for j in range(beta_in.size):
        lo, hi = offsets[j], offsets[j + 1]
        if gamma_d[lo] == 0:
            raise MalformedPatternError(f"component {j} has no segment start at its first position")
        block = gamma_d[lo:hi]
        # carry the last start label forward across continuation positions
        idx = np.maximum.accumulate(np.where(block != 0, np.arange(block.size), 0))
        labels = block[idx]
        n_segments = np.count_nonzero(block)
        if n_segments != beta_out[j]:
            raise MalformedPatternError(f"component {j} has {n_segments} segments, beta_out says {beta_out[j]}")
        M[np.arange(lo, hi), labels - 1] = 1.0
    return M


def mop(pattern: BreakPattern) -> ReductionMap:
    beta_in = np.full(pattern.p, pattern.T, dtype=np.int64)
    beta_out = np.array([1 + len(b) for b in pattern.breaks], dtype=np.int64)
    gamma_d = build_gamma_d(pattern)
    M = build_M(gamma_d, beta_in, beta_out)
    for a in (beta_in, beta_out, gamma_d, M):
        a.setflags(write=False)
    return ReductionMap(beta_in=beta_in, beta_out=beta_out, gamma_d=gamma_d, M=M)


@dataclass(frozen=True)
class IflConfig:
    """Tuning knobs shared by the three stages.

    ``ridge_alpha`` is the ridge penalty of the initial estimates, relative to
    the mean squared column norm of the stage design.
    """

    nu: float = 1.0
    weight_floor: float = 1e-6
    n_lambda: int = 100
    lambda_ratio: float = 1e-4
    tol: float = 1e-7
    max_iter: int = 10_000
    break_threshold: float = 1e-8
    max_outer: int = 1
    penalize_levels_in_step1: bool = False
    ridge_alpha: float = 1e-3
    standardize: bool = False
    max_df_fraction: float = 0.5

    def __post_init__(self):
        if not self.break_threshold > 0:
            raise ValueError("break_threshold must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not self.ridge_alpha > 0:
            raise ValueError("ridge_alpha must be positive")


def _ridge_weights(H: np.ndarray, y: np.ndarray, config: IflConfig) -> np.ndarray:
    alpha = config.ridge_alpha * float(np.mean(np.einsum("ij,ij->j", H, H)))
    return adaptive_weights(ridge_init(H, y, max(alpha, np.finfo(float).tiny)), config.nu, config.weight_floor)


def _fit(problem: WeightedLassoProblem, config: IflConfig) -> PathFit:
    grid = lambda_grid(problem, config.n_lambda, config.lambda_ratio)
    max_df = max(1, int(config.max_df_fraction * problem.n_obs))
    return fit_path(
        problem, grid, tol=config.tol, max_iter=config.max_iter, standardize=config.standardize, max_df=max_df
    )


def _step1_design(panel: RegressionPanel) -> np.ndarray:
    op = build_diff_operator(1, [panel.T] * panel.p)
    return transformed_design(stack_design(panel), op).materialize()


def _detect(panel: RegressionPanel, config: IflConfig, weights: np.ndarray | None = None):
    T, p = panel.T, panel.p
    H = _step1_design(panel)
    level = np.zeros(T * p, dtype=bool)
    level[:: T] = True
    if weights is None:
        weights = _ridge_weights(H, panel.y, config)
    problem = WeightedLassoProblem(H, panel.y, weights, penalized=None if config.penalize_levels_in_step1 else ~level)
    path = _fit(problem, config)
    theta = path.coef.copy()
    s = level | (np.abs(theta) > config.break_threshold)
    return theta, BreakPattern.from_starts(s, T), path


def detect_breaks(panel: RegressionPanel, config: IflConfig = IflConfig()) -> tuple[np.ndarray, BreakPattern]:
    """Adaptive-lasso fit on ``X L1^{-1}``; returns the difference estimates and the breaks they imply."""
    theta, pattern, _ = _detect(panel, config)
    return theta, pattern


def _reduced_design(panel: RegressionPanel, rmap: ReductionMap) -> np.ndarray:
    return stack_design(panel).materialize() @ rmap.M


def _select(panel: RegressionPanel, rmap: ReductionMap, config: IflConfig):
    H = _reduced_design(panel, rmap)
    problem = WeightedLassoProblem(H, panel.y, _ridge_weights(H, panel.y, config))
    path = _fit(problem, config)
    gamma = path.coef.copy()
    B = CoefficientMatrix.unvec(rmap.M @ gamma, panel.T)
    return gamma, B, path


def select_variables(
    panel: RegressionPanel, rmap: ReductionMap, config: IflConfig = IflConfig()
) -> tuple[np.ndarray, CoefficientMatrix]:
    """Adaptive lasso on the segment design ``X M``; returns ``gamma_hat`` and ``B_hat = unvec(M gamma_hat)``."""
    if rmap.n_beta_in != panel.T * panel.p or np.any(rmap.beta_in != panel.T):
        raise ValueError("reduction map does not match the panel dimensions")
    gamma, B, _ = _select(panel, rmap, config)
    return gamma, B


@dataclass(frozen=True, eq=False)
class IflFit:
    """Estimated coefficients with the break pattern and segment map behind them.

    ``timings`` holds wall-clock seconds per stage and is left out of the
    JSON export so that repeated fits serialize identically.
    """

    B_hat: CoefficientMatrix
    breaks: BreakPattern
    reduction: ReductionMap
    gamma_hat: np.ndarray
    lambda_break: float
    lambda_select: float
    outer_iterations: int
    diagnostics: dict = field(default_factory=dict)
    estimator: str = "ifl"
    timings: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return int(self.gamma_hat.size)

    @property
    def support(self) -> list[tuple[int, int]]:
        """``(component, segment)`` pairs with a nonzero estimate; segments count from 0 per component."""
        comp = self.reduction.segment_component
        first = np.concatenate(([0], np.cumsum(self.reduction.beta_out)[:-1]))
        return [(int(comp[k]), int(k - first[comp[k]])) for k in np.flatnonzero(self.gamma_hat)]

    @property
    def support_by_time(self) -> np.ndarray:
        """Boolean ``T x p`` mask of nonzero coefficients."""
        return self.B_hat.by_time != 0

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "T": self.B_hat.T,
            "p": self.B_hat.p,
            "beta_hat": self.B_hat.by_time.tolist(),
            "breaks": [{"component": j + 1, "time": t + 1} for j, t in sorted(self.breaks.as_set())],
            "support": [{"component": j + 1, "segment": s + 1} for j, s in self.support],
            "gamma_hat": self.gamma_hat.tolist(),
            "lambda_break": self.lambda_break,
            "lambda_select": self.lambda_select,
            "outer_iterations": self.outer_iterations,
            "diagnostics": self.diagnostics,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_beta_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"beta_{j}" for j in range(1, self.B_hat.p + 1)])
            for t, row in enumerate(self.B_hat.by_time, start=1):
                w.writerow([t] + [repr(float(v)) for v in row])


def read_fit_json(path: str | Path) -> dict:
    """Load a fit written by :meth:`IflFit.write_json`; ``beta_hat`` comes back as a ``T x p`` array."""
    data = json.loads(Path(path).read_text())
    data["beta_hat"] = np.array(data["beta_hat"], dtype=float).reshape(data["T"], data["p"])
    return data


def _consolidate(gamma: np.ndarray, B: CoefficientMatrix, T: int):
    """Merge adjacent segments whose estimates coincide (typically both zero)."""
    pattern = BreakPattern.from_coefficients(B)
    rmap = mop(pattern)
    gamma = B.vec()[np.flatnonzero(rmap.gamma_d)]
    return pattern, rmap, gamma


def fit_ifl(panel: RegressionPanel, config: IflConfig = IflConfig()) -> IflFit:
    """Run break detection, reduction and selection; optionally iterate Step 1 from the current estimate."""
    T, p = panel.T, panel.p
    timings = {"detect": 0.0, "select": 0.0}
    converged = True
    weights = None
    prev = None
    for outer in range(1, config.max_outer + 1):
        t0 = time.perf_counter()
        theta, step1_pattern, path1 = _detect(panel, config, weights)
        t1 = time.perf_counter()
        rmap = mop(step1_pattern)
        gamma, B, path3 = _select(panel, rmap, config)
        timings["detect"] += t1 - t0
        timings["select"] += time.perf_counter() - t1
        converged &= bool(path1.converged.all() and path3.converged.all())
        pattern, rmap_final, gamma_final = _consolidate(gamma, B, T)
        state = (pattern.as_set(), frozenset(map(tuple, np.argwhere(B.B != 0))))
        if state == prev:
            break
        prev = state
        theta_now = build_diff_operator(1, [T] * p).apply(B.vec())
        weights = adaptive_weights(theta_now, config.nu, config.weight_floor)
    diagnostics = {
        "converged": converged,
        "step1_breaks": len(step1_pattern.as_set()),
        "step1_lambda_index": int(path1.chosen),
        "step3_lambda_index": int(path3.chosen),
        "step3_K": int(gamma.size),
        "rss_floored": bool(path1.diagnostics["rss_floored"] or path3.diagnostics["rss_floored"]),
        "rank_deficient_step3": bool(gamma.size > T),
    }
    return IflFit(
        B_hat=B,
        breaks=pattern,
        reduction=rmap_final,
        gamma_hat=gamma_final,
        lambda_break=path1.lam,
        lambda_select=path3.lam,
        outer_iterations=outer,
        diagnostics=diagnostics,
        timings=timings,
    )
