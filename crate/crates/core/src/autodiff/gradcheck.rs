//! Central finite-difference validation of analytic gradients.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{self, tag};

/// Fewest coordinates a check samples (all of them if the model is smaller).
pub const MIN_SAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            samples: MIN_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

impl GradCheck {
    /// Compare the gradient returned by `loss` against central differences
    /// on a seeded sample of coordinates.
    ///
    /// `loss` returns the scalar loss and its gradient with the same layout as
    /// `params`; only the value is used at the perturbed points.
    pub fn run<F>(&self, loss: F, params: &ModelParams) -> Result<GradCheckReport>
    where
        F: Fn(&ModelParams) -> Result<(f64, ModelParams)>,
    {
        if !(1e-7..=1e-3).contains(&self.eps) {
            return Err(Error::domain(format!(
                "finite-difference step {} outside [1e-7, 1e-3]",
                self.eps
            )));
        }
        let (_, analytic) = loss(params)?;
        if !analytic.same_layout(params) {
            return Err(Error::Protocol(
                "gradient layout differs from parameter layout".into(),
            ));
        }
        let analytic = analytic.flatten();
        let base = params.flatten();
        let total = base.len();
        let count = total.min(self.samples.max(MIN_SAMPLES));
        let mut rng = rng::keyed(self.seed, &[tag::GRADCHECK]);
        let mut picked = index::sample(&mut rng, total, count).into_vec();
        picked.sort_unstable();

        let locate = locator(params);
        let mut report = GradCheckReport {
            max_relative_error: 0.0,
            coordinates_checked: count,
            worst: None,
        };
        let mut probe = base.clone();
        for i in picked {
            probe[i] = base[i] + self.eps;
            let plus = loss(&params.unflatten(&probe)?)?.0;
            probe[i] = base[i] - self.eps;
            let minus = loss(&params.unflatten(&probe)?)?.0;
            probe[i] = base[i];
            let numeric = (plus - minus) / (2.0 * self.eps);
            let err = relative_error(analytic[i], numeric);
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some(locate(i));
            }
        }
        Ok(report)
    }
}

/// Check with the default sample size and seed.
pub fn gradient_check<F>(loss: F, params: &ModelParams, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<(f64, ModelParams)>,
{
    GradCheck {
        eps,
        ..GradCheck::default()
    }
    .run(loss, params)
}

fn locator(params: &ModelParams) -> impl Fn(usize) -> (String, usize) + '_ {
    move |flat| {
        let mut offset = 0;
        for (name, t) in params.iter() {
            if flat < offset + t.len() {
                return (name.to_string(), flat - offset);
            }
            offset += t.len();
        }
        unreachable!("index {flat} beyond parameter count")
    }
}
