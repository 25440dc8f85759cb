//! Spline trends and bootstrap intervals for rate series.

mod bootstrap;
mod gcv;
pub mod rng;
mod spline;

pub use bootstrap::{
    estimate_drop, estimate_with_ci, moving_block_resample, nearest_rank, nonoverlapping_block_resample,
    post_blacken, BlockScheme, BootstrapConfig, ResidualKind, DEFAULT_BLOCK_LENGTH, DropEstimate, IntervalEstimate, ReplicateSet,
    MAX_EXCLUDED_FRACTION,
};
pub use gcv::{
    gcv_score, lambda_grid, lambda_scale, leave_block_out_predictions, leave_block_out_residuals,
    select_lambda_block_cv_points, select_lambda_gcv, select_lambda_gcv_points, LambdaSelection, GCV_DECADES,
    GCV_GRID_POINTS, MIN_GCV_POINTS,
};
pub use spline::{
    fit_points, fit_smoothing_spline, Lambda, SplineCurve, SplineFit, SplineSmoother, MIN_SPLINE_POINTS,
};
