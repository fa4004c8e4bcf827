"""
Recovering fund holdings from prices
====================================

A fund's value is the sum of its share counts times asset prices.  Dividing
by the previous value turns this into a regression of the gross fund return
on price-to-value ratios whose coefficients are the share counts, constant
between rebalancing dates.
"""

import numpy as np

from iflasso import IflConfig, estimate_holdings, returns_panel, synth_price_table

# Three of six assets held; the fund rebalances once, at return 101.
table = synth_price_table(6, 200, [(0.3, 0.3, 0.4), (0.5, 0.0, 0.5)], [101], seed=0)
panel = returns_panel(table)

# The accounting identity holds to rounding.
print("identity error:", np.abs(panel.y - np.sum(panel.X * table.holdings, axis=1)).max())

# The regressors are slow random walks: consecutive rows differ by about 2%,
# so a shift in holdings changes the fit only slightly around any date and
# the holdings are hard to pin down even without noise.
step = np.abs(np.diff(np.log(panel.X[:, :3]), axis=0)).mean()
print("mean absolute day-to-day log change of held-asset regressors: %.4f" % step)

est = estimate_holdings(table, IflConfig())
print("true rebalancing date:", table.dates[101])
print("estimated rebalancing dates:", est.rebalancing_dates[:10])
print("true shares, first regime:", table.holdings[0, :3].round(1))
print("estimated shares at t = 0:", est.N_hat[0, :3].round(1))
