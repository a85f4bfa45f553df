//! Refinement of transported weights: the transported kernels act as the prior
//! of the variational learner, with positions and widths frozen.

use crate::model::ParameterSet;
use crate::pot::MapState;
use crate::source::{learn_weights_vb, VbConfig, VbTrace};
use crate::world::LabeledPoint;
use crate::{PotError, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Only kernels within this distance (m) of some data point are refined.
    pub neighborhood: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
            neighborhood: 5.0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(PotError::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.neighborhood >= 0.0) {
            return Err(PotError::InvalidArgument("tol must be positive and neighborhood nonnegative".into()));
        }
        Ok(())
    }
}

/// Re-learns the weight distributions of the kernels near `data`.
pub fn refine_weights(state: &MapState, data: &[LabeledPoint], cfg: &RefineConfig) -> Result<(MapState, VbTrace)> {
    cfg.validate()?;
    if state.is_empty() {
        return Err(PotError::InvalidArgument("cannot refine an empty map".into()));
    }
    let positions: Vec<Vec2> = data.iter().map(|p| p.position).collect();
    let local = state.kernels_near(&positions, cfg.neighborhood);
    if local.is_empty() {
        return Ok((state.clone(), VbTrace::default()));
    }
    let prior = ParameterSet::new(local.iter().map(|&i| state.params.kernels[i].clone()).collect());
    let vb = VbConfig {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
    };
    let (post, trace) = learn_weights_vb(data, &prior, &vb)?;
    let mut out = state.clone();
    for (&i, k) in local.iter().zip(&post.kernels) {
        let dst = &mut out.params.kernels[i];
        dst.weight_mean = k.weight_mean;
        dst.weight_var = k.weight_var;
    }
    Ok((out, trace))
}
