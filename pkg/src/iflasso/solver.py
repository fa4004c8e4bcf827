"""Weighted l1 regression: ridge start, adaptive weights, lambda paths and BIC.

Every estimator in the package reduces to

    minimize  ||y - H b||^2 + lam * sum_j w_j |b_j|

with an unnormalized squared error.  Coordinates can be left unpenalized via
``WeightedLassoProblem.penalized``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._cd import cd_solve

__all__ = [
    "InvalidRegularizerError",
    "EmptyDesignError",
    "WeightedLassoProblem",
    "LassoSolution",
    "PathFit",
    "as_dense",
    "ridge_init",
    "adaptive_weights",
    "lambda_grid",
    "coordinate_descent",
    "fit_path",
    "bic_score",
]

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000
DEFAULT_N_LAMBDA = 100
DEFAULT_RATIO = 1e-4


class InvalidRegularizerError(ValueError):
    pass


class EmptyDesignError(ValueError):
    pass


def as_dense(H) -> np.ndarray:
    """Materialize ``H`` if it is one of the package's implicit operators."""
    if hasattr(H, "materialize"):
        H = H.materialize()
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValueError(f"design must be two-dimensional, got shape {H.shape}")
    return H


@dataclass(frozen=True, eq=False)
class WeightedLassoProblem:
    """Design ``H`` (``n_obs x K``), response ``y`` and positive weights ``w``.

    ``penalized`` masks which coordinates carry the l1 term; by default all do.
    Weights of unpenalized coordinates are ignored.
    """

    H: np.ndarray
    y: np.ndarray
    w: np.ndarray | None = None
    penalized: np.ndarray | None = None

    def __post_init__(self):
        H = np.asfortranarray(as_dense(self.H))
        y = np.asarray(self.y, dtype=float)
        n, K = H.shape
        if n < 1 or K < 1:
            raise ValueError("design must have at least one row and one column")
        if y.shape != (n,):
            raise ValueError(f"y must have length {n}, got shape {y.shape}")
        w = np.ones(K) if self.w is None else np.asarray(self.w, dtype=float)
        if w.shape != (K,):
            raise ValueError(f"weights must have length {K}, got shape {w.shape}")
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise ValueError("weights must be strictly positive and finite")
        mask = np.ones(K, dtype=bool) if self.penalized is None else np.asarray(self.penalized, dtype=bool)
        if mask.shape != (K,):
            raise ValueError(f"penalized mask must have length {K}")
        for name, a in (("H", H), ("y", y), ("w", w), ("penalized", mask)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_obs(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    def thresholds(self, lam: float) -> np.ndarray:
        """Per-coordinate soft-threshold levels ``lam * w / 2`` (0 where unpenalized)."""
        return np.where(self.penalized, 0.5 * lam * self.w, 0.0)

    def objective(self, beta: np.ndarray, lam: float) -> float:
        r = self.y - self.H @ beta
        return float(r @ r + 2.0 * self.thresholds(lam) @ np.abs(beta))

    def unpenalized_fit(self) -> np.ndarray:
        """Least-squares fit on the unpenalized columns only (zeros elsewhere)."""
        beta = np.zeros(self.K)
        free = ~self.penalized
        if free.any():
            beta[free] = np.linalg.lstsq(self.H[:, free], self.y, rcond=None)[0]
        return beta


@dataclass(frozen=True, eq=False)
class LassoSolution:
    coef: np.ndarray
    converged: bool
    n_sweeps: int
    objective_trace: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class PathFit:
    """A warm-started lambda path with BIC scores; ``chosen`` indexes the BIC minimizer."""

    grid: np.ndarray
    coefs: np.ndarray
    rss: np.ndarray
    df: np.ndarray
    bic: np.ndarray
    chosen: int
    converged: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def coef(self) -> np.ndarray:
        return self.coefs[self.chosen]

    @property
    def lam(self) -> float:
        return float(self.grid[self.chosen])


def ridge_init(H, y: np.ndarray, alpha: float) -> np.ndarray:
    """Minimizer of ``||y - H b||^2 + alpha ||b||^2``.

    Wide designs go through the equivalent ``n x n`` system
    ``b = H^T (H H^T + alpha I)^{-1} y``.
    """
    if not alpha > 0 or not np.isfinite(alpha):
        raise InvalidRegularizerError(f"ridge penalty must be positive and finite, got {alpha}")
    H = as_dense(H)
    y = np.asarray(y, dtype=float)
    n, K = H.shape
    try:
        if K > n:
            G = H @ H.T
            G[np.diag_indices_from(G)] += alpha
            return H.T @ scipy.linalg.solve(G, y, assume_a="pos")
        G = H.T @ H
        G[np.diag_indices_from(G)] += alpha
        return scipy.linalg.solve(G, H.T @ y, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise InvalidRegularizerError(f"ridge system is singular at alpha={alpha}") from exc


def adaptive_weights(init: np.ndarray, nu: float = 1.0, floor: float = 1e-6) -> np.ndarray:
    if not floor > 0:
        raise ValueError("weight floor must be positive")
    return 1.0 / np.maximum(np.abs(np.asarray(init, dtype=float)), floor) ** nu


def lambda_grid(problem: WeightedLassoProblem, n_lambda: int = DEFAULT_N_LAMBDA, ratio: float = DEFAULT_RATIO) -> np.ndarray:
    """Log-spaced decreasing grid from the smallest all-zero lambda down to ``ratio`` of it.

    The top value is ``max_j 2 |h_j^T r0| / w_j`` over penalized, non-zero
    columns, where ``r0`` is the residual after fitting the unpenalized columns.
    """
    if n_lambda < 2:
        raise ValueError("a grid needs at least two values")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    H = problem.H
    r0 = problem.y - H @ problem.unpenalized_fit()
    live = problem.penalized & np.any(H != 0, axis=0)
    if not live.any():
        raise EmptyDesignError("every penalized design column is zero")
    lam_max = float(np.max(2.0 * np.abs(H[:, live].T @ r0) / problem.w[live]))
    if lam_max <= 0:
        # response already explained; any positive scale gives the zero solution
        lam_max = np.finfo(float).eps
    # a hair above the boundary so rounding cannot activate a coordinate there
    lam_max *= 1.0 + 1e-9
    return lam_max * np.logspace(0.0, np.log10(ratio), n_lambda)


def _face_newton(H: np.ndarray, y: np.ndarray, thr: np.ndarray, beta: np.ndarray) -> bool:
    """Jump to the minimizer on the current sign face, stopping at sign changes.

    Solves the normal equations restricted to the active coordinates with
    their signs fixed.  If a coordinate would flip sign, the step is cut where
    it first reaches zero, that coordinate leaves the active set, and the
    solve is repeated.  A step that would raise the objective (possible when
    the Gram matrix is numerically singular) is discarded.  Returns ``False``
    when ``beta`` is left unchanged.
    """
    active = np.flatnonzero((beta != 0) | (thr == 0))
    if active.size == 0 or active.size > H.shape[0]:
        return False
    saved = beta.copy()
    before = _penalized_loss(H, y, thr, beta)
    with warnings.catch_warnings():
        # near-duplicate columns make the face Gram ill-conditioned; the
        # objective check below decides whether the step is kept
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        moved = _face_steps(H, y, thr, beta, active)
    if not moved or _penalized_loss(H, y, thr, beta) > before:
        beta[:] = saved
        return False
    return True


def _penalized_loss(H, y, thr, beta) -> float:
    r = y - H @ beta
    return float(r @ r + 2.0 * thr @ np.abs(beta))


def _face_steps(H, y, thr, beta, active) -> bool:
    while active.size:
        HA = H[:, active]
        sign = np.sign(beta[active])
        try:
            target = scipy.linalg.solve(HA.T @ HA, HA.T @ y - thr[active] * sign, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            return False
        if not np.all(np.isfinite(target)):
            return False
        cur = beta[active]
        flips = (thr[active] > 0) & (np.sign(target) != sign)
        if not flips.any():
            beta[active] = target
            return True
        steps = cur[flips] / (cur[flips] - target[flips])
        k = int(np.argmin(steps))
        beta[active] = cur + steps[k] * (target - cur)
        gone = active[np.flatnonzero(flips)[k]]
        beta[gone] = 0.0
        active = active[active != gone]
        active = active[(beta[active] != 0) | (thr[active] == 0)]
    return True


def coordinate_descent(
    problem: WeightedLassoProblem,
    lam: float,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    polish_every: int = 50,
) -> LassoSolution:
    """Cyclic coordinate descent; every ``polish_every`` unconverged sweeps an active-set Newton step is taken.

    Converges when a full sweep moves no coefficient by more than ``tol``.
    Hitting ``max_iter`` sweeps returns the last iterate with ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    beta = np.zeros(problem.K) if init is None else np.array(init, dtype=float)
    if beta.shape != (problem.K,):
        raise ValueError(f"initial coefficients must have length {problem.K}")
    col_sq = np.einsum("ij,ij->j", problem.H, problem.H)
    beta[col_sq == 0] = 0.0
    thr = problem.thresholds(lam)
    traces = []
    done = 0
    converged = False
    while done < max_iter:
        chunk = min(polish_every, max_iter - done)
        sweeps, converged, trace = cd_solve(problem.H, problem.y, thr, beta, col_sq, float(tol), int(chunk))
        traces.append(trace)
        done += sweeps
        if converged:
            break
        _face_newton(problem.H, problem.y, thr, beta)
    trace = np.concatenate(traces) if traces else np.empty(0)
    return LassoSolution(coef=beta, converged=bool(converged), n_sweeps=int(done), objective_trace=trace)


def bic_score(rss: np.ndarray, df: np.ndarray, n_obs: int, y_norm_sq: float) -> tuple[np.ndarray, np.ndarray]:
    """``n ln(rss/n) + df ln(n)`` with ``rss`` floored at ``eps * ||y||^2``.

    Residuals below the floor are round-off, so fits that reach it tie on fit
    and BIC falls back to the sparser model.  Returns the scores and a mask of
    floored entries.
    """
    rss = np.asarray(rss, dtype=float)
    floor = np.finfo(float).eps * max(y_norm_sq, np.finfo(float).tiny)
    floored = rss <= floor
    safe = np.where(floored, floor, rss)
    return n_obs * np.log(safe / n_obs) + np.asarray(df) * np.log(n_obs), floored


def fit_path(
    problem: WeightedLassoProblem,
    grid: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    standardize: bool = False,
    max_df: int | None = None,
) -> PathFit:
    """Fit along a decreasing grid with warm starts and pick lambda by BIC.

    ``max_df`` ends the path before the first fit whose active set exceeds it
    (the first grid point is always kept); the grid is shortened accordingly.  With ``standardize`` the columns are scaled to unit
    norm for fitting and coefficients are mapped back.
    """
    scale = None
    if standardize:
        scale = np.linalg.norm(problem.H, axis=0)
        scale[scale == 0] = 1.0
        problem = WeightedLassoProblem(problem.H / scale, problem.y, problem.w, problem.penalized)
    if grid is None:
        grid = lambda_grid(problem)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty vector")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("grid must be strictly decreasing")

    coefs, conv = [], []
    # exact solution at and above lambda_max
    beta = problem.unpenalized_fit()
    for lam in grid:
        sol = coordinate_descent(problem, lam, init=beta, tol=tol, max_iter=max_iter)
        beta = sol.coef
        if coefs and max_df is not None and np.count_nonzero(beta) > max_df:
            break
        coefs.append(beta.copy())
        conv.append(sol.converged)
    coefs = np.array(coefs)
    truncated = len(coefs) < grid.size
    grid = grid[: len(coefs)]
    resid = problem.y[None, :] - coefs @ problem.H.T
    rss = np.einsum("ij,ij->i", resid, resid)
    df = np.count_nonzero(coefs, axis=1)
    bic, floored = bic_score(rss, df, problem.n_obs, float(problem.y @ problem.y))
    chosen = int(np.argmin(bic))
    if scale is not None:
        coefs = coefs / scale
    diagnostics = {
        "rss_floored": bool(floored.any()),
        "all_converged": bool(np.all(conv)),
        "truncated": truncated,
    }
    return PathFit(
        grid=grid,
        coefs=coefs,
        rss=rss,
        df=df,
        bic=bic,
        chosen=chosen,
        converged=np.array(conv),
        diagnostics=diagnostics,
    )
