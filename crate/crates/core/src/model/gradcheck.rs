//! Central finite-difference gradient checking. Guards every loss in the
//! unlearning engine.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates to probe; large parameter vectors are sampled (the
    /// largest-gradient half plus a random half).
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { epsilon: 1e-5, max_coords: 200, seed: 0 }
    }
}

/// Maximum relative error between the analytic gradient and central finite
/// differences. `f(params, need_grad)` returns the loss and, when asked, the
/// analytic gradient. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1)`.
pub fn grad_check(
    params: &[f64],
    f: &mut dyn FnMut(&[f64], bool) -> Result<(f64, Option<Vec<f64>>)>,
    cfg: &GradCheckConfig,
) -> Result<f64> {
    let (loss0, grad) = f(params, true)?;
    if !loss0.is_finite() {
        return Err(Error::numeric("loss is not finite at the evaluation point"));
    }
    let grad = grad.ok_or_else(|| Error::config("loss function returned no gradient"))?;
    if grad.len() != params.len() {
        return Err(Error::config("gradient length mismatch"));
    }

    let coords: Vec<usize> = if params.len() <= cfg.max_coords {
        (0..params.len()).collect()
    } else {
        let mut by_magnitude: Vec<usize> = (0..params.len()).collect();
        by_magnitude.sort_by(|&a, &b| grad[b].abs().partial_cmp(&grad[a].abs()).unwrap().then(a.cmp(&b)));
        let head = cfg.max_coords / 2;
        let mut chosen: Vec<usize> = by_magnitude[..head].to_vec();
        let mut rest: Vec<usize> = by_magnitude[head..].to_vec();
        rest.shuffle(&mut Stream::new(cfg.seed).child("gradcheck").rng());
        chosen.extend(rest.into_iter().take(cfg.max_coords - head));
        chosen
    };

    let mut work: Vec<f64> = params.to_vec();
    let mut max_err = 0.0f64;
    for &i in &coords {
        let orig = work[i];
        work[i] = orig + cfg.epsilon;
        let (plus, _) = f(&work, false)?;
        work[i] = orig - cfg.epsilon;
        let (minus, _) = f(&work, false)?;
        work[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric("loss is not finite near the evaluation point"));
        }
        let numeric = (plus - minus) / (2.0 * cfg.epsilon);
        let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        // central differences are truncation-exact on quadratics; epsilon only
        // has to beat floating-point cancellation
        let theta: Vec<f64> = (0..20).map(|i| (i as f64 - 10.0) * 0.3).collect();
        let err = grad_check(
            &theta,
            &mut |p, _| {
                let loss = 0.5 * p.iter().map(|x| x * x).sum::<f64>();
                Ok((loss, Some(p.to_vec())))
            },
            &GradCheckConfig { epsilon: 1e-4, ..GradCheckConfig::default() },
        )
        .unwrap();
        assert!(err < 1e-10, "quadratic error {err}");
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let theta = [1.0, -2.0, 3.0];
        let err = grad_check(
            &theta,
            &mut |p, _| Ok((7.5, Some(alloc::vec![0.0; p.len()]))),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let theta = [0.4, -0.8];
        let err = grad_check(
            &theta,
            &mut |p, _| {
                let loss = p[0] * p[0] + p[1];
                // sign bug in the first coordinate
                Ok((loss, Some(alloc::vec![-2.0 * p[0], 1.0])))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err > 0.5);
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let theta = [1.0];
        let out = grad_check(
            &theta,
            &mut |_p, _| Ok((f64::NAN, Some(alloc::vec![0.0]))),
            &GradCheckConfig::default(),
        );
        assert!(matches!(out, Err(Error::Numeric(_))));
    }
}
