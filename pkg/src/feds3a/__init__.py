"""Semi-supervised, semi-asynchronous federated learning simulator.

Labeled data lives only on the server; clients train on unlabeled data
with confidence-thresholded pseudo-labels.  The server aggregates as soon
as a fraction of clients has reported, discounts stale models, and ships
sparse model differences.
"""

from .config import ExperimentConfig, parse_and_validate
from .protocol import RunResult, run_experiment

__all__ = ["ExperimentConfig", "parse_and_validate", "run_experiment", "RunResult"]
__version__ = "0.1.0"
