"""Simulation and analysis of the repeated-evolution (sigma_n) noise estimator."""
from .weights import WeightVector, combine_sigma, sigma_weights, vandermonde_matrix
from .noise import OUParams, calibrate_b_for_t2, empirical_stats, ou_trajectory
from .qubit import QubitState, purity, projection_fidelity, trace_fidelity
from .trajectories import SequenceSpec, measure_rk, run_ensemble, run_trajectory, tomography
from .liouville import ChannelSpec, convergence_order, dissipator_expectation, exact_rk, propagator
from .estimation import FitResult, fit_sigma_model, fit_stretched_exp

__version__ = "0.1.0"
