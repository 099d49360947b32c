"""Pilot reuse and robust transceiver simulations for single-cell massive MIMO
over spatially correlated Rayleigh fading."""

from .channel import (ArrayGeometry, AsymptoticCovariance, ChannelCovariance, PASKind,
                      PowerAngleSpectrum, Scenario, array_response, covariance_asymptotic,
                      covariance_exact, empirical_covariance, matrix_angle, pas_density,
                      sample_channels)
from .experiments import (ExperimentConfig, generate_scenario, run)
from .scheduling import (CRITERIA, SearchBudgetError, exhaustive_search, mse_sd_lb_minimum,
                         mse_sd_lower_bound, omega_matrix, sgps)
from .simulation import (ExperimentResult, LinkConfig, avg_mse_sd, dl_sum_rate,
                         net_spectral_efficiency, optimize_pilot_length, ot_baseline_tau,
                         rate_vs_tau, ul_sum_rate)
from .training import (MMSEEstimator, PilotConfig, PRPattern, TrainingOutput, block_pattern,
                       cross_error_covariance, error_covariances, mmse_estimate, mse_ce,
                       mse_ce_minimum, obs_covariance, observe_pilots, orthogonal_pattern,
                       pilot_matrix)
from .transceiver import (DownlinkPrecoder, UplinkReceiver, analytic_mse_dl, analytic_mse_ul,
                          conventional_receiver, effective_noise_cov, mmse_sd_closed_form,
                          robust_dl_precoder, robust_ul_receiver)

__version__ = "0.1.0"
