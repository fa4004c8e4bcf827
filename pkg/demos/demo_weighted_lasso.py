"""
Weighted lasso by coordinate descent
====================================

The workhorse behind every stage of the estimator is a weighted lasso,
``||y - H b||^2 + lam * sum_k w_k |b_k|``, solved by cyclic coordinate
descent with warm starts along a decreasing grid of penalties and BIC
picking the penalty.
"""

import numpy as np

from iflasso import WeightedLassoProblem, adaptive_weights, coordinate_descent, fit_path, lambda_grid, ridge_init

rng = np.random.default_rng(0)
H = rng.standard_normal((60, 8))
truth = np.array([2.0, -1.5, 0, 0, 0, 0, 0, 0])
y = H @ truth + 0.3 * rng.standard_normal(60)

# Adaptive weights come from a ridge pilot: large coefficients get small
# penalties and vice versa.
pilot = ridge_init(H, y, 1.0)
w = adaptive_weights(pilot)
problem = WeightedLassoProblem(H, y, w)
print("adaptive weights:", np.round(w, 2))

# At lambda_max every penalized coefficient is exactly zero.
grid = lambda_grid(problem, 40, 1e-4)
print("coefficients at lambda_max:", coordinate_descent(problem, grid[0]).coef)

# Along the path the support grows; BIC chooses one fit.
path = fit_path(problem, grid)
print("df along the path:", path.df[::5])
print("BIC-selected lambda %.4g with coefficients" % path.lam)
print(np.round(path.coef, 3))
