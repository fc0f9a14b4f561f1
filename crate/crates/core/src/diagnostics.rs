//! Phase well-differentiation statistics, residual whiteness and empirical
//! convergence rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{wrap_unit, PhasePrior};

/// Occupancy counts of folded phases on an `N^h`-cell partition of `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub h: f64,
    pub cells: usize,
    pub len: usize,
    /// `D^i_h(m)`, one row of `cells` counts per component.
    pub single: Vec<Vec<u64>>,
    /// `D^{ij}_h(m, n)` for ordered pairs `i ≠ j`, row-major in `(m, n)`.
    pub pairs: Vec<PairCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    pub i: usize,
    pub j: usize,
    pub counts: Vec<u64>,
}

impl PairCounts {
    pub fn get(&self, m: usize, n: usize, cells: usize) -> u64 {
        self.counts[m * cells + n]
    }
}

/// `N^h = 1/h`, which must be an integer of at least 2.
pub fn cells_for_step(h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep(h));
    }
    let inv = 1.0 / h;
    let n = inv.round();
    if n < 2.0 || (inv - n).abs() > 1e-9 * n {
        return Err(Error::InvalidStep(h));
    }
    Ok(n as usize)
}

fn cell_of(p: f64, cells: usize) -> usize {
    ((wrap_unit(p) * cells as f64) as usize).min(cells - 1)
}

/// Counts folded phase pairs over the `N^h × N^h` grid and the marginals.
pub fn partition_counts(priors: &[PhasePrior], h: f64) -> Result<PartitionCounts> {
    let cells = cells_for_step(h)?;
    let len = priors.first().map_or(0, PhasePrior::len);
    for p in priors {
        p.check_len(len)?;
    }
    let idx: Vec<Vec<usize>> = priors
        .iter()
        .map(|p| p.phase().iter().map(|&v| cell_of(v, cells)).collect())
        .collect();
    let single = idx
        .iter()
        .map(|row| {
            let mut c = vec![0u64; cells];
            for &m in row {
                c[m] += 1;
            }
            c
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..idx.len() {
        for j in 0..idx.len() {
            if i == j {
                continue;
            }
            let mut counts = vec![0u64; cells * cells];
            for (&m, &n) in idx[i].iter().zip(&idx[j]) {
                counts[m * cells + n] += 1;
            }
            pairs.push(PairCounts { i, j, counts });
        }
    }
    Ok(PartitionCounts {
        h,
        cells,
        len,
        single,
        pairs,
    })
}

/// γ, β and the contraction bound derived from partition counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellDiffStats {
    pub h: f64,
    pub counts: PartitionCounts,
    pub gamma: f64,
    /// `β_{i,j}` in the order of `counts.pairs`.
    pub beta_per_pair: Vec<f64>,
    pub beta: f64,
    pub contraction_bound: f64,
    pub well_differentiated: bool,
}

/// Computes `γ = min D^{ij}_h(m,n)`, `β_{i,j}`, `β = max β_{i,j}` and
/// `M²(K−1)β`. For a single component γ is the smallest marginal count and
/// β is 0. An empty marginal cell makes β infinite.
pub fn well_diff_stats(counts: PartitionCounts, m_bound: f64) -> Result<WellDiffStats> {
    if !(m_bound > 0.0) || !m_bound.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "M must be positive, got {m_bound}"
        )));
    }
    let k = counts.single.len();
    let cells = counts.cells;
    let gamma = if counts.pairs.is_empty() {
        counts
            .single
            .iter()
            .flat_map(|r| r.iter().copied())
            .min()
            .unwrap_or(0) as f64
    } else {
        counts
            .pairs
            .iter()
            .flat_map(|p| p.counts.iter().copied())
            .min()
            .unwrap_or(0) as f64
    };
    let beta_per_pair: Vec<f64> = counts
        .pairs
        .iter()
        .map(|p| {
            let marg = &counts.single[p.i];
            let mut total = 0.0;
            for (m, &d) in marg.iter().enumerate() {
                let inner: f64 = (0..cells)
                    .map(|n| (p.get(m, n, cells) as f64 - gamma).powi(2))
                    .sum();
                if d == 0 {
                    if inner > 0.0 {
                        return f64::INFINITY;
                    }
                    continue;
                }
                total += inner / d as f64;
            }
            total.sqrt()
        })
        .collect();
    let beta = beta_per_pair.iter().copied().fold(0.0, f64::max);
    let contraction_bound = m_bound * m_bound * k.saturating_sub(1) as f64 * beta;
    Ok(WellDiffStats {
        h: counts.h,
        counts,
        gamma,
        beta_per_pair,
        beta,
        contraction_bound,
        well_differentiated: gamma > 0.0 && contraction_bound < 1.0,
    })
}

/// Biased sample autocorrelation of the mean-removed values, `ρ(0) = 1`.
/// A constant input yields `[1, 0, …, 0]`.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let len = values.len();
    if max_lag >= len {
        return Err(Error::LagTooLarge { max_lag, len });
    }
    let mean = values.iter().sum::<f64>() / len as f64;
    let x: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = x.iter().map(|v| v * v).sum();
    let mut rho = vec![0.0; max_lag + 1];
    rho[0] = 1.0;
    if c0 == 0.0 {
        return Ok(rho);
    }
    for (lag, r) in rho.iter_mut().enumerate().skip(1) {
        let c: f64 = x[..len - lag]
            .iter()
            .zip(&x[lag..])
            .map(|(a, b)| a * b)
            .sum();
        *r = c / c0;
    }
    Ok(rho)
}

/// Largest `|ρ(ℓ)|` over `1 ≤ ℓ ≤ max_lag`.
pub fn max_abs_autocorrelation(values: &[f64], max_lag: usize) -> Result<f64> {
    Ok(autocorrelation(values, max_lag)?[1..]
        .iter()
        .map(|r| r.abs())
        .fold(0.0, f64::max))
}

/// Geometric decay fitted to a residual trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Per-iteration ratio `exp(slope)` of the fitted log-norm line.
    pub ratio: f64,
    /// Coefficient of determination of the fit (1 for an exact fit).
    pub goodness: f64,
    /// Number of trace points used.
    pub points: usize,
}

/// [`fit_decay_rate_above`] with no floor beyond positivity.
pub fn fit_decay_rate(norms: &[f64]) -> Result<DecayFit> {
    fit_decay_rate_above(norms, 0.0)
}

/// Least-squares slope of `ln ‖r‖` against iteration.
///
/// Points at or below `floor` are dropped. The fit uses the pre-plateau
/// segment, the points more than twice the final norm; when that leaves
/// fewer than 3 points the whole remaining trace is used.
pub fn fit_decay_rate_above(norms: &[f64], floor: f64) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > floor && v.is_finite())
        .map(|(i, &v)| (i as f64, v.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::TraceTooShort(usable.len()));
    }
    let last = usable[usable.len() - 1].1;
    let plateau = last + std::f64::consts::LN_2;
    let head: Vec<(f64, f64)> = usable.iter().copied().filter(|p| p.1 > plateau).collect();
    let pts = if head.len() >= 3 { head } else { usable };
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let goodness = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        ratio: slope.exp(),
        goodness,
        points: pts.len(),
    })
}
