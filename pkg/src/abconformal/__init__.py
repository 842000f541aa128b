"""Conformal vector fields of Riemannian and (alpha, beta)-metrics, checked numerically.

The package is layered: :mod:`jets` supplies exact derivatives to third
order, :mod:`geometry` builds Levi-Civita data on top of it, :mod:`catalog`
holds the concrete models, :mod:`checks` turns the defining equations into
per-sample residuals, :mod:`deformation` and :mod:`randers` cover metric
deformations and projectively flat Randers metrics, and :mod:`cli` runs
JSON scenarios.
"""

__version__ = "0.1.0"

from .jets import DomainError, Jet3, NotPositiveDefiniteError, jet_inverse, spd_inverse
from .geometry import (Connection, Domain, MetricField, OneFormField, ScalarField, VectorField,
                       christoffel, closedness_residual, constant_oneform, covariant_d1_oneform,
                       covariant_d2_oneform, euclidean_metric, grad_norm_sq, lower, riemann,
                       sectional_curvature)
from .catalog import (CATALOG, FAMILIES, ConstraintError, FinslerMetric, ModelParams, PhiFunction,
                      RegularityError, ab_metric, conformal_field, constant_curvature_metric,
                      family_metric, phi_ode_residual, projective_pair, prop52_fields,
                      randers_beta_prop52)
from .checks import (AdaptedFrameData, CheckReport, FlowState, Samples, adapted_frame_data,
                     c_invariant_report, check_ab_system, check_conformal_finsler,
                     check_conformal_riemann, closed_conformal_residual, draw_samples, flow_check,
                     kang_residual, series_coefficients, xv_apply)
from .deformation import (UVWTriple, check_lemma41, deform, deformed_fields, randers_b2_from_p2,
                          uvw_closed_form, uvw_ode_solve)
from .randers import (RandersModel, compact_case_quantities, flag_curvature_closed_form,
                      flag_curvature_projective, s_curvature_residual, tau0_identity_residual)
