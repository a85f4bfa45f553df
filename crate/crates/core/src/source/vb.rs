//! Variational Bayesian logistic regression with the quadratic (Jaakkola–Jordan)
//! bound on the logistic likelihood.
//!
//! For fixed kernel geometry the weights have a Gaussian prior
//! `N(m0, diag(v0))`. Each iteration solves the Gaussian posterior for the
//! current local variational parameters `ξ` and then re-estimates `ξ`; the
//! evidence lower bound is non-decreasing across iterations.

use nalgebra::{DMatrix, DVector};

use crate::model::ParameterSet;
use crate::world::LabeledPoint;
use crate::{PotError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbConfig {
    pub max_iter: usize,
    /// Stop when the bound improves by less than this.
    pub tol: f64,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-4 }
    }
}

/// Evidence lower bound after each iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VbTrace {
    pub elbo_per_iter: Vec<f64>,
    pub iterations: usize,
}

/// `λ(ξ) = tanh(ξ/2) / (4ξ)`, with the limit `1/8` at zero.
pub fn jj_lambda(xi: f64) -> f64 {
    if xi.abs() < 1e-6 {
        0.125 - xi * xi / 96.0
    } else {
        (xi / 2.0).tanh() / (4.0 * xi)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Posterior weight means and variances given the data. Kernel positions and
/// widths are held fixed; the kernels' current weight distributions are the prior.
pub fn learn_weights_vb(points: &[LabeledPoint], params: &ParameterSet, cfg: &VbConfig) -> Result<(ParameterSet, VbTrace)> {
    if let Some(k) = params.kernels.iter().find(|k| !(k.weight_var > 0.0)) {
        return Err(PotError::InvalidArgument(format!("prior weight variance {} is not positive", k.weight_var)));
    }
    let m = params.len();
    let n = points.len();
    if n == 0 || m == 0 {
        return Ok((params.clone(), VbTrace::default()));
    }

    let p = Problem {
        phi: DMatrix::from_fn(n, m, |i, j| params.kernels[j].feature(points[i].position)),
        m0: DVector::from_iterator(m, params.kernels.iter().map(|k| k.weight_mean)),
        v0: DVector::from_iterator(m, params.kernels.iter().map(|k| k.weight_var)),
        y_half: DVector::from_iterator(n, points.iter().map(|p| p.label as f64 - 0.5)),
    };
    // fewer points than kernels: work with n × n systems instead of m × m
    let (mean, var, trace) = if n < m { p.solve_dual(cfg)? } else { p.solve_primal(cfg)? };

    let mut out = params.clone();
    for (j, k) in out.kernels.iter_mut().enumerate() {
        k.weight_mean = mean[j];
        // never let rounding push the posterior variance above the prior
        k.weight_var = var[j].min(p.v0[j]);
    }
    Ok((out, trace))
}

struct Problem {
    phi: DMatrix<f64>,
    m0: DVector<f64>,
    v0: DVector<f64>,
    y_half: DVector<f64>,
}

/// Sum over data of the bound's per-point terms.
fn local_terms(xi: &DVector<f64>, lam: &DVector<f64>) -> f64 {
    xi.iter().zip(lam.iter()).map(|(&x, &l)| log_sigmoid(x) - x / 2.0 + l * x * x).sum()
}

impl Problem {
    fn rhs(&self) -> DVector<f64> {
        self.m0.component_div(&self.v0) + self.phi.tr_mul(&self.y_half)
    }

    fn quad_prior(&self) -> f64 {
        self.m0.dot(&self.m0.component_div(&self.v0))
    }

    /// ξ under the prior.
    fn initial_xi(&self) -> DVector<f64> {
        let proj = &self.phi * &self.m0;
        DVector::from_fn(self.phi.nrows(), |i, _| {
            let s: f64 = self.phi.row(i).iter().zip(self.v0.iter()).map(|(f, v)| f * f * v).sum();
            (s + proj[i].powi(2)).sqrt()
        })
    }

    fn push(trace: &mut VbTrace, elbo: f64, prev: &mut f64, cfg: &VbConfig) -> Result<bool> {
        let iter = trace.iterations;
        if !elbo.is_finite() {
            return Err(PotError::Numerical(format!("non-finite ELBO at iteration {iter}")));
        }
        trace.elbo_per_iter.push(elbo);
        trace.iterations += 1;
        let done = trace.iterations >= cfg.max_iter || elbo - *prev < cfg.tol;
        *prev = elbo;
        Ok(done)
    }

    /// Posterior in weight space: `S⁻¹ = V0⁻¹ + Φᵀ 2Λ Φ`.
    fn solve_primal(&self, cfg: &VbConfig) -> Result<(DVector<f64>, DVector<f64>, VbTrace)> {
        let (n, m) = self.phi.shape();
        let phi = &self.phi;
        let prior_prec = self.v0.map(|v| 1.0 / v);
        let rhs = self.rhs();
        let logdet_prior: f64 = self.v0.iter().map(|v| v.ln()).sum();
        let quad_prior = self.quad_prior();
        let mut xi = self.initial_xi();
        let mut trace = VbTrace::default();
        let mut prev = f64::NEG_INFINITY;
        let mut scaled = phi.clone();
        let (mean, chol) = loop {
            let iter = trace.iterations;
            let lam = xi.map(jj_lambda);
            for i in 0..n {
                let s = 2.0 * lam[i];
                for j in 0..m {
                    scaled[(i, j)] = s * phi[(i, j)];
                }
            }
            let mut prec = phi.tr_mul(&scaled);
            for j in 0..m {
                prec[(j, j)] += prior_prec[j];
            }
            let chol = prec
                .cholesky()
                .ok_or_else(|| PotError::Numerical(format!("posterior precision not positive definite at iteration {iter}")))?;
            let mean = chol.solve(&rhs);
            let logdet_post: f64 = -2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let elbo = 0.5 * (logdet_post - logdet_prior) + 0.5 * mean.dot(&rhs) - 0.5 * quad_prior + local_terms(&xi, &lam);
            if Self::push(&mut trace, elbo, &mut prev, cfg)? {
                break (mean, chol);
            }
            // ξ² = φᵀ S φ + (φᵀ μ)²
            let z = chol
                .l_dirty()
                .solve_lower_triangular(&phi.transpose())
                .ok_or_else(|| PotError::Numerical(format!("triangular solve failed at iteration {iter}")))?;
            let proj = phi * &mean;
            for i in 0..n {
                xi[i] = (z.column(i).norm_squared() + proj[i].powi(2)).sqrt();
            }
        };
        let l_inv = chol
            .l_dirty()
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .ok_or_else(|| PotError::Numerical("covariance inversion failed".into()))?;
        // diag(S) = column norms of L⁻¹
        let var = DVector::from_fn(m, |j, _| l_inv.column(j).norm_squared());
        Ok((mean, var, trace))
    }

    /// Same posterior through the Woodbury identity. With `G = Φ V0 Φᵀ` and
    /// `s = sqrt(2λ)`, `B = I + diag(s) G diag(s)` and
    /// `S = V0 - V0 Φᵀ diag(s) B⁻¹ diag(s) Φ V0`.
    fn solve_dual(&self, cfg: &VbConfig) -> Result<(DVector<f64>, DVector<f64>, VbTrace)> {
        let (n, m) = self.phi.shape();
        let phi = &self.phi;
        let phi_v0 = DMatrix::from_fn(n, m, |i, j| phi[(i, j)] * self.v0[j]);
        let g = &phi_v0 * phi.transpose();
        let rhs = self.rhs();
        let v0_rhs = self.v0.component_mul(&rhs);
        let c = phi * &v0_rhs;
        let rvr = rhs.dot(&v0_rhs);
        let quad_prior = self.quad_prior();
        let mut xi = self.initial_xi();
        let mut trace = VbTrace::default();
        let mut prev = f64::NEG_INFINITY;
        let (s, chol) = loop {
            let iter = trace.iterations;
            let lam = xi.map(jj_lambda);
            let s = lam.map(|l| (2.0 * l).sqrt());
            let mut b = DMatrix::from_fn(n, n, |i, k| s[i] * g[(i, k)] * s[k]);
            for i in 0..n {
                b[(i, i)] += 1.0;
            }
            let chol = b
                .cholesky()
                .ok_or_else(|| PotError::Numerical(format!("posterior precision not positive definite at iteration {iter}")))?;
            let w = s.component_mul(&c);
            let binv_w = chol.solve(&w);
            let logdet_b: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            // μᵀ r = rᵀ V0 r - wᵀ B⁻¹ w
            let elbo = -0.5 * logdet_b + 0.5 * (rvr - w.dot(&binv_w)) - 0.5 * quad_prior + local_terms(&xi, &lam);
            if Self::push(&mut trace, elbo, &mut prev, cfg)? {
                break (s, chol);
            }
            // Φ S Φᵀ = G - G diag(s) B⁻¹ diag(s) G and Φ μ = c - G diag(s) B⁻¹ w
            let sg = DMatrix::from_fn(n, n, |i, k| s[i] * g[(i, k)]);
            let z = chol
                .l_dirty()
                .solve_lower_triangular(&sg)
                .ok_or_else(|| PotError::Numerical(format!("triangular solve failed at iteration {iter}")))?;
            let proj = &c - &g * s.component_mul(&binv_w);
            for i in 0..n {
                let var = (g[(i, i)] - z.column(i).norm_squared()).max(0.0);
                xi[i] = (var + proj[i].powi(2)).sqrt();
            }
        };
        let w = s.component_mul(&c);
        let t = s.component_mul(&chol.solve(&w));
        let mean = &v0_rhs - phi_v0.tr_mul(&t);
        let s_phi = DMatrix::from_fn(n, m, |i, j| s[i] * phi[(i, j)]);
        let y = chol
            .l_dirty()
            .solve_lower_triangular(&s_phi)
            .ok_or_else(|| PotError::Numerical("covariance inversion failed".into()))?;
        let var = DVector::from_fn(m, |j, _| {
            let v = self.v0[j];
            (v - v * v * y.column(j).norm_squared()).max(v * 1e-12)
        });
        Ok((mean, var, trace))
    }
}
