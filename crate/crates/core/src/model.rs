//! Kernelized Bayesian occupancy model.
//!
//! Occupancy at `x` is `sigmoid(Σ_m w_m exp(-γ_m ‖x - h_m‖²))`. Each kernel
//! carries distributions over its weight, width and position; predictions use
//! the width and position means and integrate the Gaussian weight posterior
//! with the probit approximation.

use std::f64::consts::PI;

use crate::Vec2;

/// One squared-exponential basis function and its parameter distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub pos_mean: Vec2,
    /// Per-axis variance of the position.
    pub pos_var: Vec2,
    /// Mean of the Gamma-distributed inverse squared lengthscale.
    pub width_mean: f64,
    /// Scale of the width Gamma distribution.
    pub width_disp: f64,
    pub weight_mean: f64,
    pub weight_var: f64,
}

impl Kernel {
    /// `exp(-γ̄ ‖x - h̄‖²)`
    #[inline]
    pub fn feature(&self, x: Vec2) -> f64 {
        (-self.width_mean * (x - self.pos_mean).norm_squared()).exp()
    }

    /// Shape and scale of the width Gamma distribution.
    pub fn width_shape_scale(&self) -> (f64, f64) {
        (self.width_mean / self.width_disp, self.width_disp)
    }

    pub fn is_valid(&self) -> bool {
        self.pos_var.x > 0.0
            && self.pos_var.y > 0.0
            && self.width_mean > 0.0
            && self.width_disp > 0.0
            && self.weight_var > 0.0
            && self.weight_mean.is_finite()
            && self.pos_mean.iter().all(|v| v.is_finite())
    }
}

/// Ordered kernel collection of an occupancy model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    pub kernels: Vec<Kernel>,
}

/// Predicted occupancy with the variance of the latent logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupancy {
    pub mean: f64,
    pub logit_var: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ParameterSet {
    pub fn new(kernels: Vec<Kernel>) -> Self {
        Self { kernels }
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn feature_vector(&self, x: Vec2) -> Vec<f64> {
        self.kernels.iter().map(|k| k.feature(x)).collect()
    }

    /// Logit mean and variance at `x` under independent Gaussian weights.
    pub fn logit_moments(&self, x: Vec2) -> (f64, f64) {
        self.kernels.iter().fold((0.0, 0.0), |(m, v), k| {
            let phi = k.feature(x);
            (m + k.weight_mean * phi, v + k.weight_var * phi * phi)
        })
    }

    /// Occupancy probability using the weight means.
    pub fn predict_mean(&self, x: Vec2) -> f64 {
        let z: f64 = self.kernels.iter().map(|k| k.weight_mean * k.feature(x)).sum();
        sigmoid(z)
    }

    /// Occupancy probability moderated by the weight uncertainty.
    pub fn predict_with_uncertainty(&self, x: Vec2) -> Occupancy {
        let (mu, var) = self.logit_moments(x);
        Occupancy {
            mean: moderated(mu, var),
            logit_var: var,
        }
    }
}

/// `sigmoid(μ / sqrt(1 + π σ² / 8))`
pub fn moderated(mu: f64, var: f64) -> f64 {
    sigmoid(mu / (1.0 + PI * var / 8.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn kernel(x: f64, y: f64, gamma: f64, w: f64, wv: f64) -> Kernel {
        Kernel {
            pos_mean: Vec2::new(x, y),
            pos_var: Vec2::new(0.1, 0.1),
            width_mean: gamma,
            width_disp: 0.25 * gamma,
            weight_mean: w,
            weight_var: wv,
        }
    }

    #[test]
    fn feature_is_one_at_center() {
        let p = ParameterSet::new(vec![kernel(1.0, 2.0, 3.0, 0.0, 1.0)]);
        assert_eq!(p.feature_vector(Vec2::new(1.0, 2.0)), vec![1.0]);
    }

    #[test]
    fn feature_closed_form() {
        // ‖x - h‖² = 2, γ = 0.5
        let p = ParameterSet::new(vec![kernel(0.0, 0.0, 0.5, 0.0, 1.0)]);
        let f = p.feature_vector(Vec2::new(1.0, 1.0))[0];
        assert!((f - (-1.0f64).exp()).abs() < 1e-15);
        assert!((f - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn empty_set_has_empty_features_and_half_probability() {
        let p = ParameterSet::default();
        assert!(p.feature_vector(Vec2::new(3.0, 1.0)).is_empty());
        assert_eq!(p.predict_mean(Vec2::zeros()), 0.5);
    }

    #[test]
    fn zero_weights_predict_half() {
        let p = ParameterSet::new(vec![kernel(0.0, 0.0, 1.0, 0.0, 1.0), kernel(2.0, 0.0, 2.0, 0.0, 3.0)]);
        assert_eq!(p.predict_mean(Vec2::new(0.3, 0.2)), 0.5);
    }

    #[test]
    fn single_kernel_at_center() {
        let p = ParameterSet::new(vec![kernel(0.0, 0.0, 1.0, 2.0, 1.0)]);
        assert!((p.predict_mean(Vec2::zeros()) - 0.880797).abs() < 1e-6);
    }

    #[test]
    fn far_away_is_maximally_uncertain() {
        let p = ParameterSet::new(vec![kernel(0.0, 0.0, 1.0, 5.0, 1.0)]);
        assert_eq!(p.predict_mean(Vec2::new(1e3, 0.0)), 0.5);
    }

    #[test]
    fn zero_weight_variance_matches_point_estimate() {
        let mut k = kernel(0.0, 0.0, 1.0, 1.7, 1.0);
        k.weight_var = 0.0;
        let p = ParameterSet::new(vec![k]);
        let x = Vec2::new(0.4, -0.1);
        assert_eq!(p.predict_with_uncertainty(x).mean, p.predict_mean(x));
    }

    #[test]
    fn moderation_by_half() {
        // μ = 2, σ² = 24/π gives a factor 1/√4
        let p = ParameterSet::new(vec![kernel(0.0, 0.0, 1.0, 2.0, 24.0 / PI)]);
        let o = p.predict_with_uncertainty(Vec2::zeros());
        assert!((o.mean - 0.731059).abs() < 1e-6);
        assert!((o.logit_var - 24.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn zero_logit_mean_is_half_for_any_variance() {
        let p = ParameterSet::new(vec![kernel(0.0, 0.0, 1.0, 0.0, 77.0)]);
        assert_eq!(p.predict_with_uncertainty(Vec2::new(0.1, 0.0)).mean, 0.5);
    }

    #[test]
    fn width_shape_scale() {
        let k = kernel(0.0, 0.0, 2.0, 0.0, 1.0);
        assert_eq!(k.width_shape_scale(), (4.0, 0.5));
    }

    fn arb_kernel() -> impl Strategy<Value = Kernel> {
        (-5.0f64..5.0, -5.0f64..5.0, 0.05f64..5.0, -8.0f64..8.0, 0.0f64..10.0)
            .prop_map(|(x, y, g, w, v)| kernel(x, y, g, w, v))
    }

    proptest! {
        #[test]
        fn moderation_shrinks_toward_half(ks in prop::collection::vec(arb_kernel(), 1..8), qx in -6.0f64..6.0, qy in -6.0f64..6.0) {
            let p = ParameterSet::new(ks);
            let x = Vec2::new(qx, qy);
            let point = p.predict_mean(x);
            let o = p.predict_with_uncertainty(x);
            prop_assert!(point > 0.0 && point < 1.0);
            prop_assert!((o.mean - 0.5).abs() <= (point - 0.5).abs() + 1e-15);
        }

        #[test]
        fn ordering_does_not_matter(ks in prop::collection::vec(arb_kernel(), 1..8), qx in -6.0f64..6.0, qy in -6.0f64..6.0) {
            let x = Vec2::new(qx, qy);
            let a = ParameterSet::new(ks.clone());
            let mut rev = ks;
            rev.reverse();
            let b = ParameterSet::new(rev);
            prop_assert!((a.predict_mean(x) - b.predict_mean(x)).abs() < 1e-12);
            prop_assert!((a.predict_with_uncertainty(x).mean - b.predict_with_uncertainty(x).mean).abs() < 1e-12);
        }

        #[test]
        fn features_decrease_with_distance(g in 0.05f64..5.0, d1 in 0.0f64..4.0, dd in 0.001f64..4.0) {
            let k = kernel(0.0, 0.0, g, 1.0, 1.0);
            let near = k.feature(Vec2::new(d1, 0.0));
            let far = k.feature(Vec2::new(0.0, d1 + dd));
            prop_assert!(far <= near);
            prop_assert!(far > 0.0 || g * (d1 + dd).powi(2) > 700.0);
        }
    }
}
