from importlib.metadata import PackageNotFoundError, version
import logging

from harmonic_rank.configuration import Configuration, Missing, NotConfigured, unwrap
from harmonic_rank.exceptions import AmbiguousKernel, ConfigurationError, DisagreementWithRankKernel, EmptyKernel, \
    EmptySubspace, EquivalenceMismatch, FlatModel, GridMismatch, HarmonicRankError, IntegrationDiverged, \
    InvalidConfigurationError, InvalidSpec, MergeConflictError, NoConvergence, NotConfiguredError, NumericalError, \
    OracleUnavailable, SingularFundamental, SingularTensor, StepSizeUnderflow
from harmonic_rank.fields import CurvatureBlock, CurvatureField
from harmonic_rank.flow import build_splitting, exponent_fit, ExponentFit, flow_derivative, invariance_angles, \
    linear_growth_check, parallel_field_detect, SasakiVector, SplittingFrame, Subspace
from harmonic_rank.hyperbolicity import busemann_value, delta_four_point, DeltaEstimate, divergence_rate, \
    gromov_product, hyperbolicity_report, HyperbolicityReport, HyperbolicityVerdict, thin_triangle_delta, \
    volume_comparison
from harmonic_rank.identities import identity_suite, IdentityReport, IdentityTag
from harmonic_rank.io import dumpf, dumps, load_name, loadf, loads, read_columns, write_columns
from harmonic_rank.jacobi import asymptotic_slope, asymptotic_tensor, boundary_slopes, boundary_tensor, \
    fundamental_tensor, integrate_jacobi, JacobiSettings, TensorKind, TensorTrajectory, time_grid, wronskian
from harmonic_rank.models import build_model, Model, ModelKind, ModelSpec, parse_model
from harmonic_rank.rank import AnosovCertificate, anosov_certificate, AnosovVerdict, constrank_bounds_check, \
    density_profile, DensityProfile, F_consistency, GrowthClass, harmonicity_check, minimal_growth_gap, rank_of, \
    RankReport, volume_growth_class


__all__ = (
    'Configuration', 'Missing', 'NotConfigured', 'unwrap',
    'AmbiguousKernel', 'ConfigurationError', 'DisagreementWithRankKernel', 'EmptyKernel', 'EmptySubspace',
    'EquivalenceMismatch', 'FlatModel', 'GridMismatch', 'HarmonicRankError', 'IntegrationDiverged',
    'InvalidConfigurationError', 'InvalidSpec', 'MergeConflictError', 'NoConvergence', 'NotConfiguredError',
    'NumericalError', 'OracleUnavailable', 'SingularFundamental', 'SingularTensor', 'StepSizeUnderflow',
    'CurvatureBlock', 'CurvatureField',
    'build_splitting', 'exponent_fit', 'ExponentFit', 'flow_derivative', 'invariance_angles', 'linear_growth_check',
    'parallel_field_detect', 'SasakiVector', 'SplittingFrame', 'Subspace',
    'busemann_value', 'delta_four_point', 'DeltaEstimate', 'divergence_rate', 'gromov_product',
    'hyperbolicity_report', 'HyperbolicityReport', 'HyperbolicityVerdict', 'thin_triangle_delta',
    'volume_comparison',
    'identity_suite', 'IdentityReport', 'IdentityTag',
    'dumpf', 'dumps', 'load_name', 'loadf', 'loads', 'read_columns', 'write_columns',
    'asymptotic_slope', 'asymptotic_tensor', 'boundary_slopes', 'boundary_tensor', 'fundamental_tensor',
    'integrate_jacobi', 'JacobiSettings', 'TensorKind', 'TensorTrajectory', 'time_grid', 'wronskian',
    'build_model', 'Model', 'ModelKind', 'ModelSpec', 'parse_model',
    'AnosovCertificate', 'anosov_certificate', 'AnosovVerdict', 'constrank_bounds_check', 'density_profile',
    'DensityProfile', 'F_consistency', 'GrowthClass', 'harmonicity_check', 'minimal_growth_gap', 'rank_of',
    'RankReport', 'volume_growth_class',
)


try:
    __version__ = version('harmonic-rank')
except PackageNotFoundError:
    # running from a source tree
    __version__ = '0.0.0.dev0'


# default harmonic_rank loggers to silence, can be overridden from logging later if needed
logging.getLogger(__name__).addHandler(logging.NullHandler())
