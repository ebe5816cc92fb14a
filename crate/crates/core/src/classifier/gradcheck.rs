//! Central finite-difference check of the analytic loss gradient.

use ndarray::ArrayView2;

use super::network::{init_params, loss_and_gradient};
use super::ModelSpec;
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor so parameters with a vanishing gradient compare on an
/// absolute scale instead of amplifying rounding noise.
const REL_FLOOR: f64 = 1e-6;

/// Maximum relative error between the analytic gradient of the mean loss and
/// central differences, over every parameter, at the initialization drawn
/// from `spec.init_seed`.
pub fn gradient_check(spec: &ModelSpec, data: &Dataset) -> Result<f64> {
    spec.validate()?;
    gradient_check_at(spec, &init_params(spec), data)
}

pub fn gradient_check_at(spec: &ModelSpec, params: &[f64], data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let targets = data.labels()?;
    let flat: Vec<f64> = data.iter().flat_map(|ex| ex.features().iter().copied()).collect();
    let x = ArrayView2::from_shape((data.len(), data.feature_dim()), &flat).expect("data view");

    let mut analytic = vec![0.0; params.len()];
    loss_and_gradient(spec, params, x, &targets, 0.0, &mut analytic)?;

    let mut probe = params.to_vec();
    let mut scratch = vec![0.0; params.len()];
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let plus = loss_and_gradient(spec, &probe, x, &targets, 0.0, &mut scratch)?;
        probe[i] = orig - FD_STEP;
        let minus = loss_and_gradient(spec, &probe, x, &targets, 0.0, &mut scratch)?;
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}
