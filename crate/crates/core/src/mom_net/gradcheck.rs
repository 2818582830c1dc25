//! Central finite-difference check of [`MomNet::backward`].

use serde::Serialize;

use super::model::MomNet;
use super::NetError;
use crate::sampling::TrainingPair;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
pub const GRADCHECK_REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub count: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub lambda: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("tensor,count,max_relative_error,max_absolute_error\n");
        for t in &self.tensors {
            out.push_str(&format!(
                "{},{},{:e},{:e}\n",
                t.name, t.count, t.max_relative_error, t.max_absolute_error
            ));
        }
        out
    }
}

/// Compares analytic gradients of `loss_loc + λ·loss_rec` against
/// `(L(θ + ε) − L(θ − ε)) / 2ε` for every parameter.
pub fn gradient_check(
    net: &MomNet,
    pairs: &[TrainingPair],
    lambda: f64,
    step: f64,
) -> Result<GradCheckReport, NetError> {
    let refs: Vec<&TrainingPair> = pairs.iter().collect();
    let (_, analytic) = net.backward(&refs, lambda)?;
    let analytic: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();

    let mut work = net.clone();
    let mut tensors = Vec::with_capacity(analytic.len());
    for (ti, (name, grads)) in analytic.iter().enumerate() {
        let mut check = TensorCheck {
            name: name.clone(),
            count: grads.len(),
            max_relative_error: 0.0,
            max_absolute_error: 0.0,
        };
        for (i, &a) in grads.iter().enumerate() {
            let original = work.params.tensors_mut()[ti][i];
            work.params.tensors_mut()[ti][i] = original + step;
            let plus = work.losses_of(&refs)?.total(lambda);
            work.params.tensors_mut()[ti][i] = original - step;
            let minus = work.losses_of(&refs)?.total(lambda);
            work.params.tensors_mut()[ti][i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(GRADCHECK_REL_FLOOR);
            check.max_absolute_error = check.max_absolute_error.max(abs);
            check.max_relative_error = check.max_relative_error.max(rel);
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        step,
        lambda,
        tensors,
    })
}
