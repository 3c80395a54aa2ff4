//! Gaussian-kernel maximum mean discrepancy (biased V-statistic).

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the pooled sample.
    #[default]
    MedianHeuristic,
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "median" | "median-heuristic" => Ok(Bandwidth::MedianHeuristic),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
                _ => Err(Error::config(format!(
                    "bandwidth must be a positive number or `median`, got `{other}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn check_dims(xs: &ArrayView2<'_, f64>, ys: &ArrayView2<'_, f64>) -> Result<()> {
    if xs.nrows() == 0 || ys.nrows() == 0 {
        return Err(Error::EmptyInput("MMD needs two nonempty sets".into()));
    }
    if xs.ncols() != ys.ncols() {
        return Err(Error::DimensionMismatch {
            expected: xs.ncols(),
            actual: ys.ncols(),
        });
    }
    Ok(())
}

/// Median of all pairwise distances in `xs ∪ ys`. A zero median is replaced
/// by the smallest positive distance; if every point coincides the result
/// is 1.
pub fn median_heuristic(xs: ArrayView2<'_, f64>, ys: ArrayView2<'_, f64>) -> Result<f64> {
    check_dims(&xs, &ys)?;
    let pooled: Vec<ArrayView1<'_, f64>> = xs.rows().into_iter().chain(ys.rows()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if median > 0.0 {
        return Ok(median);
    }
    Ok(dists.iter().copied().find(|&d| d > 0.0).unwrap_or(1.0))
}

fn mean_kernel(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            total += (-sq_dist(x, y) * gamma).exp();
        }
    }
    total / (a.nrows() * b.nrows()) as f64
}

/// Squared MMD with kernel `exp(-|a-b|^2 / (2 sigma^2))` and a fixed
/// bandwidth `sigma`.
pub fn mmd2_with_bandwidth(xs: ArrayView2<'_, f64>, ys: ArrayView2<'_, f64>, sigma: f64) -> Result<f64> {
    check_dims(&xs, &ys)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config("MMD bandwidth must be positive"));
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let kxx = mean_kernel(xs, xs, gamma);
    let kyy = mean_kernel(ys, ys, gamma);
    let kxy = mean_kernel(xs, ys, gamma);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

pub fn mmd2(xs: ArrayView2<'_, f64>, ys: ArrayView2<'_, f64>, cfg: &MmdConfig) -> Result<f64> {
    let sigma = match cfg.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => median_heuristic(xs, ys)?,
    };
    mmd2_with_bandwidth(xs, ys, sigma)
}
