use rand::seq::index::sample;
use rand::Rng;

use super::{Gradients, ParamId, ParamStore};
use crate::error::Result;

/// Central-difference check of analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: Option<String>,
    pub coordinates_checked: usize,
}

/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)` so
/// coordinates with vanishing gradients are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `loss` evaluates the scalar loss and, when given a buffer, accumulates the
/// analytic gradient into it. Up to `per_param` coordinates of every trainable
/// parameter are sampled.
pub fn grad_check<F, R>(
    store: &mut ParamStore,
    loss: F,
    eps: f64,
    per_param: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, Option<&mut Gradients>) -> Result<f64>,
    R: Rng,
{
    let mut grads = Gradients::for_store(store);
    loss(store, Some(&mut grads))?;

    let targets: Vec<(ParamId, String, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, p)| (id, p.name.clone(), p.value.len()))
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: None,
        coordinates_checked: 0,
    };
    for (id, name, len) in targets {
        let coords: Vec<usize> = if len <= per_param {
            (0..len).collect()
        } else {
            sample(rng, len, per_param).into_vec()
        };
        for j in coords {
            let original = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = original + eps;
            let plus = loss(store, None)?;
            store.value_mut(id).data_mut()[j] = original - eps;
            let minus = loss(store, None)?;
            store.value_mut(id).data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(id).data()[j];
            let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_param = Some(name.clone());
            }
            report.coordinates_checked += 1;
        }
    }
    Ok(report)
}
