use rand::seq::index::sample;

use super::{ParamSet, Rng};
use crate::error::{Error, Result};

/// Magnitudes below this are treated as this value in the relative error
/// denominator, so coordinates with vanishing gradient do not blow up.
const REL_FLOOR: f64 = 1e-7;

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// (tensor name, flat index) of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `analytic` against central differences of `loss_fn` around
/// `params` on up to `samples` coordinates chosen by `rng`.
///
/// The relative error of one coordinate is `|a − n| / max(|n|, 1e-7)`.
pub fn grad_check<P, F>(
    params: &P,
    analytic: &P,
    mut loss_fn: F,
    rng: &mut Rng,
    samples: usize,
    h: f64,
) -> Result<GradCheck>
where
    P: ParamSet,
    F: FnMut(&P) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step {h} must be > 0")));
    }
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let picks: Vec<usize> = if samples >= total {
        (0..total).collect()
    } else {
        let mut v = sample(rng, total, samples).into_vec();
        v.sort_unstable();
        v
    };
    let names = params.names();
    let analytic_flat: Vec<f64> = analytic.tensors().iter().flat_map(|t| t.data().iter().copied()).collect();

    let mut work = params.clone();
    let mut report = GradCheck { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0, checked: 0 };
    for flat in picks {
        let (ti, idx) = locate(&sizes, flat);
        let orig = work.tensors()[ti].data()[idx];
        work.tensors_mut()[ti].data_mut()[idx] = orig + h;
        let plus = loss_fn(&work)?;
        work.tensors_mut()[ti].data_mut()[idx] = orig - h;
        let minus = loss_fn(&work)?;
        work.tensors_mut()[ti].data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss while perturbing {}[{idx}]", names[ti])));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic_flat[flat];
        let rel = (a - numeric).abs() / numeric.abs().max(REL_FLOOR);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((names[ti].clone(), idx));
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &s) in sizes.iter().enumerate() {
        if flat < s {
            return (i, flat);
        }
        flat -= s;
    }
    unreachable!("flat index beyond parameter set")
}
