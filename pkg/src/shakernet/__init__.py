"""Market-shaker detection from multi-view panels via robust low-rank influence matrices."""

from .errors import ConfigError, DataError, ShakerNetError, SolverError
from .evalkit import BacktestConfig, predict_trend, run_backtest, screening, smape
from .panel import LagPair, PanelSeries, ingest_csv, make_lag_pair
from .phase1 import Phase1Config, fit_all, fit_view
from .phase2 import Phase2Config, fit_multiview
from .shaker import ShakerReport, accumulate_influence, detect_shakers
from .synth import generate

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig", "ConfigError", "DataError", "LagPair", "PanelSeries", "Phase1Config",
    "Phase2Config", "ShakerNetError", "ShakerReport", "SolverError", "accumulate_influence",
    "detect_shakers", "fit_all", "fit_multiview", "fit_view", "generate", "ingest_csv",
    "make_lag_pair", "predict_trend", "run_backtest", "screening", "smape",
]
