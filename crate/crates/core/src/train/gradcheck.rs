//! Central finite-difference verification of analytic gradients.
//!
//! Works over a flat parameter vector; callers that keep parameters in
//! structured form scatter the vector back into their structs inside the
//! loss closure.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// How many coordinates to probe; 0 or >= len means all of them.
    pub n_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-3,
            n_coords: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoordError {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub mean_rel_err: f64,
    pub worst: Option<CoordError>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.worst.map_or(0.0, |w| w.rel_err)
    }
}

/// Compares `analytic` against central differences of `f` at `theta`.
/// Relative error uses `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    theta: &mut [f64],
    analytic: &[f64],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if theta.len() != analytic.len() {
        return Err(Error::LengthMismatch {
            what: "gradient check vectors".to_string(),
            left: theta.len(),
            right: analytic.len(),
        });
    }
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {}",
            opts.eps
        )));
    }
    let n = theta.len();
    let coords: Vec<usize> = if opts.n_coords == 0 || opts.n_coords >= n {
        (0..n).collect()
    } else {
        // Partial Fisher-Yates: the first n_coords entries are a uniform
        // sample without replacement.
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for i in 0..opts.n_coords {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(opts.n_coords);
        idx
    };

    let mut worst: Option<CoordError> = None;
    let mut sum_rel = 0.0;
    for &i in &coords {
        let orig = theta[i];
        theta[i] = orig + opts.eps;
        let up = f(theta)?;
        theta[i] = orig - opts.eps;
        let down = f(theta)?;
        theta[i] = orig;
        let numeric = (up - down) / (2.0 * opts.eps);
        if !numeric.is_finite() {
            return Err(Error::NonFinite {
                context: format!("finite difference at coordinate {i}"),
            });
        }
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        sum_rel += rel;
        if worst.map_or(true, |w| rel > w.rel_err) {
            worst = Some(CoordError {
                index: i,
                analytic: a,
                numeric,
                rel_err: rel,
            });
        }
    }
    Ok(GradCheckReport {
        checked: coords.len(),
        mean_rel_err: if coords.is_empty() {
            0.0
        } else {
            sum_rel / coords.len() as f64
        },
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(theta: &[f64]) -> Result<f64> {
        // f = sum (t_i - i)^2, grad_i = 2 (t_i - i).
        Ok(theta
            .iter()
            .enumerate()
            .map(|(i, &t)| (t - i as f64) * (t - i as f64))
            .sum())
    }

    #[test]
    fn correct_gradients_pass() {
        let mut theta: Vec<f64> = vec![0.5, -1.0, 4.0, 2.0];
        let analytic: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| 2.0 * (t - i as f64))
            .collect();
        let before = theta.clone();
        let rep = grad_check(quad, &mut theta, &analytic, &GradCheckOptions::default()).unwrap();
        assert_eq!(rep.checked, 4);
        assert!(rep.max_rel_err() < 1e-7, "{:?}", rep.worst);
        assert_eq!(theta, before, "parameters must be restored");
    }

    #[test]
    fn corrupted_gradient_is_flagged_with_its_index() {
        let mut theta: Vec<f64> = vec![1.0, 2.0, 3.0];
        let mut analytic: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| 2.0 * (t - i as f64))
            .collect();
        analytic[1] += 0.5;
        let rep = grad_check(quad, &mut theta, &analytic, &GradCheckOptions::default()).unwrap();
        assert!(rep.max_rel_err() > 0.01);
        assert_eq!(rep.worst.unwrap().index, 1);
    }

    #[test]
    fn subsampling_checks_requested_count() {
        let mut theta: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let analytic: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| 2.0 * (t - i as f64))
            .collect();
        let opts = GradCheckOptions {
            n_coords: 10,
            seed: 3,
            ..Default::default()
        };
        let rep = grad_check(quad, &mut theta, &analytic, &opts).unwrap();
        assert_eq!(rep.checked, 10);
        assert!(rep.max_rel_err() < 1e-6);
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut theta = vec![0.0];
        assert!(grad_check(quad, &mut theta, &[0.0, 1.0], &GradCheckOptions::default()).is_err());
    }
}
