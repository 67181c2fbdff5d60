"""Province-level dengue forecasting pipeline.

Turns time-stamped case records into biweekly series, fits a penalized
Poisson regression with seasonal and trend splines per province, generates
multi-step stochastic forecasts, and scores them against seasonal and
full-data baselines under reporting delays.
"""

__version__ = "0.1.0"
