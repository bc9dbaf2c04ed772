//! Single-sample inference latency benchmark: tokenization plus forward
//! pass, timed end to end on one thread.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::math::Scalar;
use crate::model::{Classifier, ModelError};
use crate::tokenizer::TokenizerModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub hardware: String,
    pub n_runs: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    /// The timed region runs on a single thread; no internal parallelism.
    pub single_threaded: bool,
}

impl std::fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "hardware: {}", self.hardware)?;
        writeln!(f, "runs: {}", self.n_runs)?;
        writeln!(f, "mean: {:.6} s", self.mean_s)?;
        writeln!(f, "p50:  {:.6} s", self.p50_s)?;
        writeln!(f, "p95:  {:.6} s", self.p95_s)?;
        writeln!(f, "single-threaded: {}", self.single_threaded)
    }
}

/// First `model name` entry from /proc/cpuinfo, or "unknown cpu".
pub fn detect_hardware() -> String {
    if let Ok(text) = std::fs::read_to_string("/proc/cpuinfo") {
        for line in text.lines() {
            if let Some((key, value)) = line.split_once(':') {
                if key.trim() == "model name" {
                    return value.trim().to_string();
                }
            }
        }
    }
    "unknown cpu".to_string()
}

/// Times `n_runs` single-sample inferences (encode + forward), after at
/// least 10 excluded warm-up runs. Percentiles use the nearest-rank method,
/// so `p95 >= p50` by construction.
pub fn bench_inference<F: Scalar>(
    model: &Classifier<F>,
    tokenizer: &TokenizerModel,
    sample_line: &str,
    n_runs: usize,
    max_len: usize,
) -> Result<LatencyReport, ModelError> {
    let one_pass = |line: &str| -> Result<(), ModelError> {
        let batch = tokenizer.encode_batch(&[line.to_string()], max_len);
        model.forward(&batch)?;
        Ok(())
    };
    let warmup = 10.max(n_runs / 100);
    for _ in 0..warmup {
        one_pass(sample_line)?;
    }
    let mut samples = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let t0 = Instant::now();
        one_pass(sample_line)?;
        samples.push(t0.elapsed().as_secs_f64());
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_s = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
    Ok(LatencyReport {
        hardware: detect_hardware(),
        n_runs,
        mean_s,
        p50_s: percentile(&samples, 0.50),
        p95_s: percentile(&samples, 0.95),
        single_threaded: true,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
