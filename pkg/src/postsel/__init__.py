"""Post-selection point and interval estimation for Gaussian means."""

from .api import PostSelectionMeans
from .ebayes import (DensityFit, ExtrapolationWarning, FitError, GridPrior,
                     NaturalSplineBasis, efron_moments, fit_lindsay,
                     gmleb_fit, gmleb_mean, local_fdr, tweedie_mean)
from .estimators import (EstimateReport, approx_abs_orderstat_mean,
                         est_bias_corrected, est_bootstrap, est_ht, est_js,
                         est_st, est_sure, est_tn, estimate_selected,
                         sure_objective, sure_threshold)
from .intervals import (InstabilityError, IntervalReport, SolverError,
                        ci_by, ci_efron, ci_fisher, ci_tn, interval_metrics)
from .selection import (AffineConstraint, ConsistencyError, SelectionOutcome,
                        TieAtBoundary, affine_build, affine_verify,
                        bh_thresholds, event_matches, profile_bh_index,
                        same_outcome, select_bh, select_fixed, select_topk,
                        sign_conditioned_bounds, sk_profile, truncation_for)
from .simlab import (InsufficientData, MSEReport, RiskBoundSpec, SimConfig,
                     gen_sparse_sample, integrated_mse, partial_mse,
                     pivot_uniformity, risk_bound_check, run_bh_experiment,
                     run_efron_experiment, run_topk_experiment, squeeze_audit,
                     winners_curse_demo)
from .truncnorm import (DegenerateRegion, TruncRegion, TruncatedGaussian,
                        selective_pivot, std_cdf, std_pdf, std_quantile,
                        trunc_cdf, trunc_mass, trunc_mean, trunc_pdf,
                        trunc_quantile, trunc_sample, trunc_var)

__all__ = [n for n in dir() if not n.startswith("_")]
