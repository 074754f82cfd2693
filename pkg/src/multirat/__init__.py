"""Multi-RAT mobility simulator with signal-quality forecasting and
predictive conditional handover."""

__version__ = "0.1.0"
