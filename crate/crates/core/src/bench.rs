//! Selection-time benchmark: single-threaded wall clock per target count.

use std::time::Instant;

use serde::Serialize;

use crate::csod;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::prototypes::{build_imagewise, PrototypeIndex};
use crate::selection::SelectionConfig;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub count: usize,
    /// Median over the repeats.
    pub seconds: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 && sxx > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Times CSOD selection (state initialization plus the greedy loop) for each
/// count, on a single thread, `repeats` times each. Prototypes are built once.
pub fn bench_selection(
    dataset: &Dataset,
    counts: &[usize],
    repeats: usize,
    lambda: Option<f64>,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    let index = build_imagewise(dataset);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        counts
            .iter()
            .map(|&count| time_count(dataset, &index, count, repeats, lambda))
            .collect()
    })
}

fn time_count(
    dataset: &Dataset,
    index: &PrototypeIndex,
    count: usize,
    repeats: usize,
    lambda: Option<f64>,
) -> Result<BenchRow> {
    let mut config = SelectionConfig::new(count);
    if let Some(l) = lambda {
        config = config.with_lambda(l);
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let started = Instant::now();
        let result = csod::select(dataset, index, &config)?;
        samples.push(started.elapsed().as_secs_f64());
        std::hint::black_box(result);
    }
    Ok(BenchRow {
        count,
        seconds: median(&samples),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_fits_perfectly() {
        let fit = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
