"""Monte Carlo harness: regime-switching scenarios, the oracle estimator and scoring.

Each scenario stacks ``R`` regimes of ``n_per_regime`` observations.  Within a
regime ``q`` of the ``p`` regressors are relevant with coefficients of random
sign and magnitude in ``[coef_low, coef_high]``; the relevant set is redrawn
for every regime.  Replication ``r`` of a scenario draws from its own stream
``SeedSequence(base_seed, spawn_key=(r,))`` so results do not depend on the
order in which replications run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bench import GenLassoConfig, fit_genlasso_panel
from .core import CoefficientMatrix, RegressionPanel
from .ifl import BreakPattern, IflConfig, fit_ifl

__all__ = [
    "ScenarioSpec",
    "GeneratedInstance",
    "MonteCarloReport",
    "generate_instance",
    "oracle_fit",
    "score",
    "run_monte_carlo",
    "paper_grid",
    "ESTIMATORS",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("ifl", "genlasso", "oracle")


@dataclass(frozen=True)
class ScenarioSpec:
    p: int
    q: int
    R: int = 4
    n_per_regime: int = 50
    noise_sd: float = 0.5
    coef_low: float = 1.0
    coef_high: float = 2.0
    base_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.q <= self.p:
            raise ValueError("need 0 <= q <= p")
        if self.R < 1:
            raise ValueError("need at least one regime")
        if self.n_per_regime < 2:
            raise ValueError("need at least two observations per regime")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if not 0 <= self.coef_low <= self.coef_high:
            raise ValueError("need 0 <= coef_low <= coef_high")

    @property
    def T(self) -> int:
        return self.R * self.n_per_regime

    @property
    def key(self) -> str:
        return f"nR{self.n_per_regime}_p{self.p}_q{self.q}"


def paper_grid(**overrides) -> list[ScenarioSpec]:
    """The 18 scenarios: ``n/R`` in {30, 50} x ``p`` in {20, 30, 40} x ``q`` in {2, 5, 10}."""
    return [
        ScenarioSpec(p=p, q=q, n_per_regime=n, **overrides)
        for n in (30, 50)
        for q in (2, 5, 10)
        for p in (20, 30, 40)
    ]


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    spec: ScenarioSpec
    replication: int
    panel: RegressionPanel
    true_B: CoefficientMatrix
    true_breaks: BreakPattern
    true_support: tuple[tuple[int, ...], ...]

    def regime_slices(self) -> list[slice]:
        n = self.spec.n_per_regime
        return [slice(r * n, (r + 1) * n) for r in range(self.spec.R)]


def generate_instance(spec: ScenarioSpec, replication: int) -> GeneratedInstance:
    rng = np.random.default_rng(np.random.SeedSequence(spec.base_seed, spawn_key=(int(replication),)))
    T, p, n = spec.T, spec.p, spec.n_per_regime
    X = rng.standard_normal((T, p))
    B = np.zeros((p, T))
    support = []
    for r in range(spec.R):
        rel = np.sort(rng.choice(p, size=spec.q, replace=False))
        mag = rng.uniform(spec.coef_low, spec.coef_high, size=spec.q)
        sign = rng.choice([-1.0, 1.0], size=spec.q)
        B[rel, r * n : (r + 1) * n] = (mag * sign)[:, None]
        support.append(tuple(int(j) for j in rel))
    noise = rng.standard_normal(T) * spec.noise_sd
    y = np.einsum("tj,jt->t", X, B) + noise
    true_B = CoefficientMatrix(B)
    return GeneratedInstance(
        spec=spec,
        replication=int(replication),
        panel=RegressionPanel(y=y, X=X),
        true_B=true_B,
        true_breaks=BreakPattern.from_coefficients(true_B),
        true_support=tuple(support),
    )


def oracle_fit(instance: GeneratedInstance) -> tuple[CoefficientMatrix, bool]:
    """Per-regime least squares on the true relevant set.

    Returns the estimate and whether any regime design was rank deficient
    (solved in the minimum-norm sense).
    """
    X, y = instance.panel.X, instance.panel.y
    B = np.zeros((instance.spec.p, instance.spec.T))
    deficient = False
    for sl, rel in zip(instance.regime_slices(), instance.true_support):
        if not rel:
            continue
        A = X[sl][:, list(rel)]
        coef, _, rank, _ = np.linalg.lstsq(A, y[sl], rcond=None)
        deficient |= rank < len(rel)
        B[list(rel), sl] = coef[:, None]
    return CoefficientMatrix(B), bool(deficient)


def _precision_recall(declared: set, truth: set) -> tuple[float, float]:
    hit = len(declared & truth)
    precision = hit / len(declared) if declared else 1.0
    recall = hit / len(truth) if truth else 1.0
    return precision, recall


def score(estimate: CoefficientMatrix, instance: GeneratedInstance) -> dict:
    """Bias (mean absolute deviation), signed bias, MSE and recovery rates against the truth."""
    est = estimate.B
    truth = instance.true_B.B
    if est.shape != truth.shape:
        raise ValueError(f"estimate shape {est.shape} does not match truth {truth.shape}")
    dev = est - truth
    bp, br = _precision_recall(BreakPattern.from_coefficients(est).as_set(), instance.true_breaks.as_set())
    est_sup, true_sup = set(), set()
    for r, (sl, rel) in enumerate(zip(instance.regime_slices(), instance.true_support)):
        est_sup |= {(r, int(j)) for j in np.flatnonzero(np.any(est[:, sl] != 0, axis=1))}
        true_sup |= {(r, j) for j in rel}
    sp, sr = _precision_recall(est_sup, true_sup)
    return {
        "bias": float(np.mean(np.abs(dev))),
        "signed_bias": float(np.mean(dev)),
        "mse": float(np.mean(dev**2)),
        "break_precision": bp,
        "break_recall": br,
        "support_precision": sp,
        "support_recall": sr,
    }


def _run_one(args) -> list[dict]:
    spec, rep, estimators, ifl_config, gl_config = args
    inst = generate_instance(spec, rep)
    rows = []
    for name in estimators:
        row = {"scenario": spec.key, "replication": rep, "estimator": name}
        t0 = time.perf_counter()
        try:
            if name == "oracle":
                est, flag = oracle_fit(inst)
                converged = not flag
            elif name == "ifl":
                fit = fit_ifl(inst.panel, ifl_config)
                est, converged = fit.B_hat, fit.diagnostics["converged"]
            elif name == "genlasso":
                fit = fit_genlasso_panel(inst.panel, gl_config)
                est, converged = fit.B_hat, fit.diagnostics["converged"]
            else:
                raise ValueError(f"unknown estimator {name!r}")
            row.update(score(est, inst))
            row.update(ok=True, converged=bool(converged), error=None)
        except Exception as exc:  # recorded, never aborts the run
            log.warning("replication %s/%d/%s failed: %s", spec.key, rep, name, exc)
            row.update(ok=False, converged=False, error=f"{type(exc).__name__}: {exc}")
        row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows


METRICS = ("bias", "signed_bias", "mse", "break_precision", "break_recall", "support_precision", "support_recall")


@dataclass
class MonteCarloReport:
    """Per-replication records plus aggregates that are recomputed from them on demand."""

    specs: list[ScenarioSpec]
    n_reps: int
    estimators: tuple[str, ...]
    records: list[dict] = field(default_factory=list)

    def aggregate(self) -> dict[str, dict[str, dict]]:
        out: dict[str, dict[str, dict]] = {}
        for spec in self.specs:
            per = {}
            for est in self.estimators:
                rows = [r for r in self.records if r["scenario"] == spec.key and r["estimator"] == est]
                good = [r for r in rows if r["ok"]]
                agg = {m: (float(np.mean([r[m] for r in good])) if good else float("nan")) for m in METRICS}
                agg["wall_time"] = float(np.mean([r["wall_time"] for r in rows])) if rows else float("nan")
                agg["n_ok"] = len(good)
                agg["n_failed"] = len(rows) - len(good)
                agg["n_nonconverged"] = sum(1 for r in good if not r["converged"])
                per[est] = agg
            if "ifl" in per and "genlasso" in per:
                g = per["genlasso"]["wall_time"]
                per["runtime_ratio_ifl_over_genlasso"] = per["ifl"]["wall_time"] / g if g > 0 else float("nan")
            out[spec.key] = per
        return out

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if not r["ok"])

    @property
    def success_rate(self) -> float:
        return 1.0 - self.n_failed / len(self.records) if self.records else 1.0

    def to_dict(self) -> dict:
        return {
            "n_reps": self.n_reps,
            "estimators": list(self.estimators),
            "scenarios": [asdict(s) | {"key": s.key} for s in self.specs],
            "aggregates": self.aggregate(),
            "n_failed": self.n_failed,
            "records": self.records,
            "note": "wall-time ratios compare against an ADMM grid solver and are descriptive only",
        }

    def content_hash(self) -> str:
        """Digest of everything except wall times."""
        rows = [{k: v for k, v in r.items() if k != "wall_time"} for r in self.records]
        blob = json.dumps({"specs": [asdict(s) for s in self.specs], "records": rows}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def table_rows(self) -> list[dict]:
        agg = self.aggregate()
        rows = []
        for spec in sorted(self.specs, key=lambda s: (s.n_per_regime, s.q, s.p)):
            row = {"n_per_regime": spec.n_per_regime, "q": spec.q, "p": spec.p}
            for est in self.estimators:
                row[f"{est}_bias"] = agg[spec.key][est]["bias"]
                row[f"{est}_mse"] = agg[spec.key][est]["mse"]
            rows.append(row)
        return rows

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        rows = self.table_rows()
        with (out / "tables.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for row in rows:
                w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
        with (out / "bias_hist.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "replication", "estimator", "bias", "mse"])
            for r in self.records:
                if r["ok"]:
                    w.writerow([r["scenario"], r["replication"], r["estimator"], f"{r['bias']:.10f}", f"{r['mse']:.10f}"])


def run_monte_carlo(
    specs: Sequence[ScenarioSpec],
    n_reps: int,
    estimators: Iterable[str] = ESTIMATORS,
    ifl_config: IflConfig = IflConfig(),
    genlasso_config: GenLassoConfig = GenLassoConfig(),
    n_jobs: int = 1,
) -> MonteCarloReport:
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    estimators = tuple(e for e in ESTIMATORS if e in set(estimators))
    tasks = [(spec, rep, estimators, ifl_config, genlasso_config) for spec in specs for rep in range(n_reps)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_run_one, tasks))
    else:
        chunks = [_run_one(t) for t in tasks]
    records = [row for chunk in chunks for row in chunk]
    records.sort(key=lambda r: (r["scenario"], r["replication"], ESTIMATORS.index(r["estimator"])))
    return MonteCarloReport(specs=list(specs), n_reps=n_reps, estimators=estimators, records=records)
