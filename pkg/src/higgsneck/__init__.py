"""Numerical workbench for self-duality equations near nodes of Riemann surfaces."""
from .errors import *  # noqa: F401,F403
from .grid import LogPolarGrid
from .fields import (BundleData, FieldPair, GaugeTransformation, HiggsField, ResidualReport,
                     UnitaryConnection, curvature_decompose, det_higgs, dolbeault_ops, gauge_act,
                     residual_decoupled, residual_fixed_det, residual_full, residual_rescaled)
from .surface import (AnnulusChart, NodeParameter, PlumbingSurface, QuadraticDifferential,
                      build_plumbing, classify_zeros, pole_order_at_node, transition_pushforward)
from .models import (ModelParameters, approximate_glue_desingularization, biquard_boalch_proximity,
                     fiducial_pair, fiducial_profile, glue_model_neck, limiting_fiducial_pair,
                     model_pair, singular_gauge)
from .localsys import (LocalSystemPresentation, NeckLineBundleForm, TwistedCochainComplex,
                       build_local_system, euler_check, fiber_dimension, flat_translate_check,
                       line_bundle_parallel_check, metric_pairing, twisted_cohomology)
from .linop import (BOperatorFamily, GraphProjection, LinearizedInput, assemble_b_family,
                    graph_continuity_experiment, graph_projection, hodge_identity_check,
                    l2_divergence_scan, linearized_apply, small_singular_values, w_space_check)
from .records import RunRecord, __version__
