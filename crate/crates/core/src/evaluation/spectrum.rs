//! Weight-spectrum diagnostics: eigenvalues of each weight matrix's
//! correlation matrix and a power-law fit to the spectral tail.
//!
//! For a weight matrix W oriented N x M with N >= M, the spectrum is the
//! eigenvalue set of (1/N) W^T W, computed with a cyclic Jacobi sweep. The
//! tail exponent alpha is the continuous maximum-likelihood estimate
//! `alpha = 1 + n / sum(ln(x / x_min))`, with `x_min` chosen over the
//! distinct eigenvalues to minimize the Kolmogorov-Smirnov distance between
//! the empirical tail and the fitted law.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::math::Scalar;
use crate::model::{Classifier, TensorRef};

/// Minimum tail size for a usable fit.
const MIN_TAIL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub lambda_min: f64,
    pub ks: f64,
    pub n_tail: usize,
}

/// Spectrum of one weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpectrum {
    pub name: String,
    pub n_eigs: usize,
    pub lambda_max: f64,
    /// Absent when the power-law fit failed for this layer.
    pub alpha: Option<f64>,
    pub lambda_min_fit: Option<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub layers: Vec<LayerSpectrum>,
}

impl SpectrumReport {
    /// CSV rendering: `layer,n_eigs,alpha,lambda_max` (alpha empty when the
    /// fit failed).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,n_eigs,alpha,lambda_max\n");
        for l in &self.layers {
            let alpha = l.alpha.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", l.name, l.n_eigs, alpha, l.lambda_max));
        }
        out
    }
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix stored row-major.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![];
    }
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + diag_norm(&a, n)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[idx(i, i)]).collect()
}

fn diag_norm(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum::<f64>().sqrt()
}

/// Eigenvalues of the correlation matrix (1/N) W^T W with W oriented so that
/// rows >= columns. Ascending order.
pub fn esd_eigenvalues(w: &Array2<f64>) -> Vec<f64> {
    let (r, c) = w.dim();
    let x = if r >= c { w.clone() } else { w.t().to_owned() };
    let (n, m) = x.dim();
    let corr = x.t().dot(&x) / n as f64;
    let flat: Vec<f64> = corr.iter().copied().collect();
    let mut eigs = jacobi_eigenvalues(flat, m);
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

/// Continuous-MLE power-law fit with KS-selected lower cutoff.
pub fn fit_power_law(eigenvalues: &[f64]) -> Result<PowerLawFit, EvalError> {
    let mut xs: Vec<f64> = eigenvalues.iter().copied().filter(|&x| x > 0.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if xs.len() < MIN_TAIL {
        return Err(EvalError::FitFailed {
            reason: format!("only {} positive eigenvalues", xs.len()),
        });
    }
    let n = xs.len();
    let mut best: Option<PowerLawFit> = None;
    let mut i = 0;
    while i < n {
        let xmin = xs[i];
        let tail = &xs[i..];
        let m = tail.len();
        if m < MIN_TAIL {
            break;
        }
        let log_sum: f64 = tail.iter().map(|&x| (x / xmin).ln()).sum();
        if log_sum > 1e-12 {
            let alpha = 1.0 + m as f64 / log_sum;
            let mut ks = 0.0f64;
            for (j, &x) in tail.iter().enumerate() {
                let fit_cdf = 1.0 - (xmin / x).powf(alpha - 1.0);
                let lo = j as f64 / m as f64;
                let hi = (j + 1) as f64 / m as f64;
                ks = ks.max((fit_cdf - lo).abs()).max((fit_cdf - hi).abs());
            }
            if best.as_ref().is_none_or(|b| ks < b.ks) {
                best = Some(PowerLawFit {
                    alpha,
                    lambda_min: xmin,
                    ks,
                    n_tail: m,
                });
            }
        }
        // Advance past this distinct value.
        let mut j = i;
        while j < n && xs[j] == xmin {
            j += 1;
        }
        i = j;
    }
    best.ok_or_else(|| EvalError::FitFailed {
        reason: "no candidate cutoff left a usable tail".into(),
    })
}

/// Samples one Pareto draw with tail exponent `alpha` and minimum 1.
/// Test oracle helper: `x = (1 - u)^(-1/(alpha - 1))`.
pub fn pareto_sample(alpha: f64, u: f64) -> f64 {
    (1.0 - u).powf(-1.0 / (alpha - 1.0))
}

/// Spectrum and tail fit of every 2-D weight matrix with min dimension >= 2.
pub fn esd_alpha<F: Scalar>(model: &Classifier<F>) -> SpectrumReport {
    let mut layers = Vec::new();
    for (name, tensor) in model.params.tensors() {
        let TensorRef::T2(w) = tensor else { continue };
        let (r, c) = w.dim();
        if r.min(c) < 2 {
            continue;
        }
        let w64 = w.mapv(|v| v.to_f64().unwrap());
        let eigenvalues = esd_eigenvalues(&w64);
        let lambda_max = eigenvalues.last().copied().unwrap_or(0.0);
        let fit = fit_power_law(&eigenvalues).ok();
        layers.push(LayerSpectrum {
            name,
            n_eigs: eigenvalues.len(),
            lambda_max,
            alpha: fit.as_ref().map(|f| f.alpha),
            lambda_min_fit: fit.as_ref().map(|f| f.lambda_min),
            eigenvalues,
        });
    }
    SpectrumReport { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Classifier, ModelConfig};
    use rand::{Rng, SeedableRng};

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut eigs = jacobi_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
        // diag(5, -2, 7) is already diagonal.
        let mut eigs = jacobi_eigenvalues(
            vec![5.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 7.0],
            3,
        );
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] + 2.0).abs() < 1e-12);
        assert!((eigs[2] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn esd_eigenvalues_are_nonnegative_and_orientation_free() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let w = Array2::from_shape_fn((20, 6), |_| rng.gen::<f64>() - 0.5);
        let eigs = esd_eigenvalues(&w);
        assert_eq!(eigs.len(), 6);
        let lambda_max = eigs.last().unwrap();
        for &e in &eigs {
            assert!(e >= -1e-9 * lambda_max);
        }
        let transposed = esd_eigenvalues(&w.t().to_owned());
        for (a, b) in eigs.iter().zip(&transposed) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_weight_has_no_tail_to_fit() {
        let eigs = vec![1.0; 16];
        assert!(matches!(
            fit_power_law(&eigs),
            Err(EvalError::FitFailed { .. })
        ));
    }

    #[test]
    fn pareto_tail_exponent_is_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for &alpha in &[2.0, 2.5, 4.0] {
            let xs: Vec<f64> = (0..1000).map(|_| pareto_sample(alpha, rng.gen())).collect();
            let fit = fit_power_law(&xs).unwrap();
            let rel = (fit.alpha - alpha).abs() / alpha;
            assert!(rel < 0.10, "alpha {alpha}: fitted {} (rel {rel})", fit.alpha);
            assert!(fit.alpha > 1.0);
        }
    }

    #[test]
    fn model_spectrum_covers_all_weight_matrices() {
        let config = ModelConfig {
            vocab_size: 64,
            hidden: 8,
            layers: 2,
            heads: 2,
            intermediate: 16,
            max_position: 16,
            type_vocab: 2,
            dropout: 0.0,
            n_classes: 3,
        };
        let model: Classifier<f32> = Classifier::build(config, 17).unwrap();
        let report = esd_alpha(&model);
        // word, position, token_type, 2 layers x 6 projections, pooler,
        // classifier.
        assert_eq!(report.layers.len(), 3 + 2 * 6 + 2);
        for l in &report.layers {
            assert!(l.lambda_max >= 0.0);
            assert_eq!(l.n_eigs, l.eigenvalues.len());
            for &e in &l.eigenvalues {
                assert!(e >= -1e-9 * l.lambda_max.max(1e-30));
            }
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("layer,n_eigs,alpha,lambda_max\n"));
        assert_eq!(csv.lines().count(), 1 + report.layers.len());
    }
}
