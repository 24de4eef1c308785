"""Low-rank positive semidefinite matrix recovery from random quadratic
measurements: a factored gradient solver with spectral initialization,
classic baselines (singular value projection, nuclear-norm ADMM,
alternating minimization), a bridge from trace-form semidefinite programs,
concentration diagnostics, and an experiment harness with a CLI.
"""

from .baselines import (AdmmConfig, AltMinConfig, SvpConfig, solve_altmin,
                        solve_nuclear_admm, solve_svp)
from .diagnostics import (ConcentrationReport, RateEstimate, check_a1,
                          check_hessian_expectation, check_mean_estimator,
                          check_regularity, estimate_rate, mean_deviation)
from .errors import (GramFactorizationError, IndefiniteCostError,
                     InsufficientDataError, MatsenseError, NumericError,
                     RankError)
from .estimators import (AltMinRecovery, GradientRecovery,
                         NuclearNormRecovery, SvpRecovery)
from .gd import (TRACE_COLUMNS, GdConfig, SolveResult, gradient,
                 mean_estimate, objective, residuals, solve_gd,
                 solve_gd_auto_rank, spectral_init)
from .harness import (BenchConfig, ExperimentGrid, PhaseCell, TraceConfig,
                      crossing_m, grid_from_config, parse_config,
                      read_bench_csv, read_phase_csv, read_trace_csv,
                      run_convergence_trace, run_method,
                      run_phase_transition, run_runtime_bench,
                      time_to_tolerance, write_bench_csv, write_phase_csv,
                      write_trace_csv)
from .linalg import (AlignmentResult, EigenPairs, best_rank_r,
                     factor_distance, operator_norm, procrustes_align,
                     randomized_svd, spectral_ball_project, svt_prox,
                     top_r_eigenpairs)
from .measurement import (Instance, MeasurementEnsemble, Truth,
                          apply_adjoint, apply_operator, generate_ensemble,
                          generate_instance, load_instance, make_truth,
                          sample_bernoulli, sample_goe, sample_goe_batch,
                          save_instance)
from .rng import make_rng, seed_sequence
from .sdp import (SdpProblem, SdpSolution, cost_cholesky, lift_solution,
                  load_sdp, reduce_sdp, reduced_instance, save_sdp,
                  solve_sdp)

__version__ = "0.1.0"
