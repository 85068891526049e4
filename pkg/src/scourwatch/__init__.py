"""Early-warning toolkit for bridge scour: sensor ingest, cleaning,
LSTM forecasting, grid search, and threshold-based alerting."""

__version__ = "0.1.0"
