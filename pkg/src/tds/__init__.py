"""Testable regression under distribution shift.

Two learner/tester pipelines — a kernel method for bounded marginals
(`tds_kernel_learn`) and a moment-matching method for subexponential
marginals (`tds_uniform_learn`) — plus the kernels, polynomial
approximation, network, scenario, and experiment machinery around them.
"""

from . import backend
from .core import (Accept, ContractViolation, Dataset, DeskOverrides,
                   DimensionMismatch, InfeasibleScaleError, LabeledSample,
                   NumericalFailure, Reject, TdsParams, as_seed_sequence, clip,
                   clip_array, clip_labels, load_dataset, save_dataset,
                   squared_loss)
from .kernels import GramMatrix, KernelSpec, cmk_eval, explicit_feature_map, \
    gram_matrix, kernel_matrix, mk_eval
from .nets import Activation, NetNorms, NeuralNet, net_eval, net_eval_batch, \
    net_norms, net_sup_estimate, random_net, RELU, SIGMOID
from .polyapprox import (ApproxCertificate, ChebyshevPolynomial, DensePolynomial,
                         NotReachable, chebyshev_approx_univariate, coeff_bounds,
                         compose_sigmoid_net_approx, degree_for_target,
                         grid_sup_error, out_of_radius_bound)
from .kernel_pipeline import (KernelHypothesis, ReferenceFeatureMap, SpectralReport,
                              empirical_second_moment, fit_constrained_kernel_regression,
                              radius_check, spectral_shift_statistic,
                              strict_kernel_sizes, tds_kernel_learn)
from .moment_pipeline import (ClippedPolynomial, MomentReport, MultiIndexSet,
                              UniformApproxParams, empirical_moment,
                              empirical_moments_all, fit_constrained_poly_regression,
                              moment_concentration_envelope, moment_test,
                              reference_moments, strict_uniform_params,
                              strict_uniform_sizes, tds_uniform_learn)
from .scenarios import (AdversarialInstancePair, Gaussian, LabelRecord,
                        LabeledTestSource, MarginalSpec, PointMassMixture,
                        ScenarioSpec, StudentT, TestSource, TrainSource,
                        UniformBall, UniformCube, adversarial_label_scenario,
                        label, marginal_from_json, sample, sources)
from .harness import (ExperimentConfig, ExperimentReport, emit_report,
                      report_csv_bytes, report_json_bytes, run_experiment)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
