"""Self-recalibrating binary classifier: a small policy network trained by
CMA-ES on a rehearsal window, with PSI and performance-decay drift checks."""

__version__ = "0.1.0"
