"""Option hedging and pricing with policy-gradient agents.

Black-Scholes, Merton jump-diffusion and Heston pricers, self-financing
ledgers, the QLBS and RLOP environments, a small numpy policy learner,
calibration and backtest tooling, and the ``hedgelab`` command line.
"""

__version__ = "0.1.0"
