"""Iterative fused lasso for sparse time-varying regression with structural breaks.

The main entry points are :func:`fit_ifl` (break detection, model reduction
and variable selection), :func:`fit_genlasso_panel` (generalized-lasso
baseline), :func:`run_monte_carlo` and :func:`estimate_holdings`.
"""

from .bench import GenLassoConfig, GenLassoProblem, admm_solve, fit_genlasso, fit_genlasso_panel
from .core import (
    CoefficientMatrix,
    PanelFormatError,
    RegressionPanel,
    build_diff_operator,
    read_panel_csv,
    stack_design,
    transformed_design,
    write_panel_csv,
)
from .ifl import (
    BreakPattern,
    IflConfig,
    IflFit,
    ReductionMap,
    build_gamma_d,
    build_M,
    detect_breaks,
    fit_ifl,
    mop,
    read_fit_json,
    select_variables,
)
from .portfolio import (
    HoldingsEstimate,
    PriceTable,
    estimate_holdings,
    paper_shape_table,
    read_price_csv,
    returns_panel,
    synth_price_table,
    write_price_csv,
)
from .simulate import MonteCarloReport, ScenarioSpec, generate_instance, oracle_fit, paper_grid, run_monte_carlo, score
from .solver import (
    PathFit,
    WeightedLassoProblem,
    adaptive_weights,
    bic_score,
    coordinate_descent,
    fit_path,
    lambda_grid,
    ridge_init,
)

__version__ = "0.1.0"
