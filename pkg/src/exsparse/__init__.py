"""Sparse excitation-string effective Hamiltonians: multi-exciton BSE and
linearized coupled cluster, with lightcone instrumentation and a symbolic
resource estimator."""

__version__ = "0.1.0"
