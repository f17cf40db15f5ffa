//! Central finite-difference verification of analytic gradients.

use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates checked per parameter; larger tensors are sampled.
    pub max_coords: usize,
    /// Lower bound on the relative-error denominator, so gradients that
    /// vanish to roundoff level are judged by absolute error.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            max_coords: 64,
            denom_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<40} coords={:<4} max_rel_err={:.3e} max_abs_err={:.3e}",
                p.name, p.checked, p.max_rel_err, p.max_abs_err
            )?;
        }
        let status = if self.passed() { "PASS" } else { "FAIL" };
        match self.worst() {
            Some(w) => write!(
                f,
                "{status}: worst parameter {} rel_err={:.3e} (tolerance {:.1e})",
                w.name, w.max_rel_err, self.tolerance
            ),
            None => write!(f, "{status}: no parameters"),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient of `loss` with central differences.
///
/// `loss` must be deterministic. It is called once with a gradient buffer
/// to collect the analytic gradient, then twice per checked coordinate
/// without one. Parameter values are restored before returning.
pub fn grad_check<F>(store: &mut ParamStore, mut loss: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, Option<&mut Gradients>) -> Result<f64>,
{
    let mut grads = Gradients::new(store);
    loss(store, Some(&mut grads))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ids: Vec<_> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let analytic = grads.dense(store, id);
        let len = analytic.len();
        let coords: Vec<usize> = if len <= opts.max_coords {
            (0..len).collect()
        } else {
            let mut picked = sample(&mut rng, len, opts.max_coords).into_vec();
            picked.sort_unstable();
            picked
        };
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            checked: coords.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for i in coords {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + opts.step;
            let plus = loss(store, None);
            store.value_mut(id).data_mut()[i] = orig - opts.step;
            let minus = loss(store, None);
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.step);
            let a = analytic.data()[i];
            check.max_abs_err = check.max_abs_err.max((a - numeric).abs());
            check.max_rel_err = check
                .max_rel_err
                .max(relative_error(a, numeric, opts.denom_floor));
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        params,
    })
}
