//! Predictions: moments of Bessel products, the covariance table of the fourth-chaos blocks and Kac-Rice integrals.

mod integrate;
mod kac_rice;
mod moments;
mod table;

pub use integrate::{
    angular_covariogram, covariance_integral, covariogram_mass, disk_covariogram, radial_reduction,
    CovarianceIntegrator, IntegralEstimate, SeparationWeight, COVARIANCE_TOLERANCE, RADIAL_PANELS_PER_UNIT,
};
pub use kac_rice::{
    conditional_gradients, expected_norm_product, gradient_norm_mean, kac_rice_mean, kac_rice_variance_length,
    kac_rice_variance_length_with, two_point_density, ConditionalGradients, ExpectationMethod, KacRiceVariance,
    NodalStatistic, DIAGONAL_CUTOFF,
};
pub use moments::{
    angular_factor, angular_moment, is_sine, leading_constant, radial_factor, radial_moment, trig_mean,
    QExponent, RadialMoment,
};
pub use table::{
    appendix_b_table, combined_constants, diagram_terms, predicted_fourth_variances, CovarianceTable, Family,
    FourthVariances, HermiteDegrees, TableEntry,
    A_BLOCKS, B_BLOCKS, LENGTH_WEIGHTS, MIXED_WEIGHTS,
};
