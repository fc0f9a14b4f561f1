//! Multiresolution mode decomposition: band-by-band demodulated RDBR inside
//! an outer refinement loop, plus the banded approximation operators.
//!
//! One outer iteration costs `K·(4·M0 + 1)·J2` regressions, i.e. about
//! `J2·M0` times a generalized-mode sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fold_regress::{carrier_samples, center_shape, fold, PartitionEstimate, ShapeRegressor};
use crate::gmd::{DecompositionReport, Scheme, StopReason, StopTest};
use crate::signal_model::{
    reconstruct_bands, rms, sort_components, Carrier, MimfEstimate, PhasePrior, SampledSignal,
    ShapeTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    /// Band-width parameter M0; bands `n ∈ [−M0, M0]` are estimated.
    pub bandwidth: usize,
    /// Outer accuracy ε₁ on the relative residual.
    pub eps_outer: f64,
    /// Inner accuracy ε₂ for each demodulated RDBR call.
    pub eps_inner: f64,
    /// Maximum outer iterations J₁.
    pub max_outer: usize,
    /// Maximum inner sweeps J₂.
    pub max_inner: usize,
    pub bins: usize,
    pub scheme: Scheme,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            bandwidth: 10,
            eps_outer: 1e-6,
            eps_inner: 1e-6,
            max_outer: 200,
            max_inner: 10,
            bins: 200,
            scheme: Scheme::GaussSeidel,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, eps) in [("eps_outer", self.eps_outer), ("eps_inner", self.eps_inner)] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {eps} not in (0, 1)"
                )));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig(
                "iteration limits must be at least 1".into(),
            ));
        }
        if self.bins < 2 {
            return Err(Error::InvalidBins(self.bins));
        }
        Ok(())
    }
}

/// Bands in processing order: `0, 1, −1, 2, −2, …, M0, −M0`.
pub fn band_order(bandwidth: usize) -> Vec<i32> {
    let mut order = vec![0];
    for n in 1..=bandwidth as i32 {
        order.push(n);
        order.push(-n);
    }
    order
}

/// Output of one demodulated RDBR call, in the order of the priors passed in.
#[derive(Debug, Clone)]
pub struct RdbrOutput {
    /// Accumulated (and, for `n ≠ 0`, doubled) shape increments.
    pub shapes: Vec<ShapeTable>,
    /// Accumulated mode increments at the sample points.
    pub modes: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub trace: DecompositionReport,
}

/// Demodulated RDBR for one band and carrier.
///
/// Priors must be sorted by fundamental; their amplitudes are not used.
/// Stop tests run on norms relative to the entering residual.
#[allow(clippy::too_many_arguments)]
pub fn modified_rdbr(
    residual: &SampledSignal,
    priors: &[PhasePrior],
    n: i32,
    carrier: Carrier,
    eps: f64,
    max_iter: usize,
    bins: usize,
    scheme: Scheme,
) -> Result<RdbrOutput> {
    let regressor = PartitionEstimate::new(bins)?;
    for p in priors {
        p.check_len(residual.len())?;
    }
    modified_rdbr_values(
        residual.values(),
        priors,
        n,
        carrier,
        eps,
        max_iter,
        &regressor,
        scheme,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn modified_rdbr_values(
    residual: &[f64],
    priors: &[PhasePrior],
    n: i32,
    carrier: Carrier,
    eps: f64,
    max_iter: usize,
    regressor: &dyn ShapeRegressor,
    scheme: Scheme,
) -> Result<RdbrOutput> {
    let carriers = priors
        .iter()
        .map(|p| carrier_samples(p, n, carrier))
        .collect::<Result<Vec<_>>>()?;
    let len = residual.len();
    let bins = regressor.bins();
    let mut shapes = vec![ShapeTable::zeros(bins)?; priors.len()];
    let mut modes = vec![vec![0.0; len]; priors.len()];
    let mut current = residual.to_vec();
    let mut trace = DecompositionReport::empty(StopReason::ResidualSmall);
    let c = rms(residual);
    if c == 0.0 {
        return Ok(RdbrOutput {
            shapes,
            modes,
            residual: current,
            trace,
        });
    }

    let mut stop = StopTest::new(eps, max_iter);
    let mut j = 0;
    trace.stop_reason = loop {
        if let Some(reason) = stop.check(j) {
            break reason;
        }
        let entering = current.clone();
        let mut max_inc = 0.0f64;
        for (k, prior) in priors.iter().enumerate() {
            let g = &carriers[k];
            let source = match scheme {
                Scheme::GaussSeidel => &current,
                Scheme::Jacobi => &entering,
            };
            let ys: Vec<f64> = if n == 0 {
                source.clone()
            } else {
                source.iter().zip(g).map(|(r, g)| r * g).collect()
            };
            let mut inc = center_shape(&regressor.regress(&fold(prior.phase(), &ys))?);
            let mode_inc: Vec<f64> = if n == 0 {
                prior.phase().iter().map(|&p| inc.eval(p)).collect()
            } else {
                inc = inc.scaled(2.0);
                prior
                    .phase()
                    .iter()
                    .zip(g)
                    .map(|(&p, g)| g * inc.eval(p))
                    .collect()
            };
            for ((r, m), d) in current.iter_mut().zip(modes[k].iter_mut()).zip(&mode_inc) {
                *r -= d;
                *m += d;
            }
            max_inc = max_inc.max(inc.l2_norm());
            shapes[k] = shapes[k].add_scaled(&inc, 1.0)?;
        }
        let eps1 = rms(&current) / c;
        let eps2 = max_inc / c;
        stop.record(eps1, eps2);
        trace.residual_norms.push(eps1);
        trace.shape_increment_norms.push(eps2);
        j += 1;
    };
    trace.iterations = j;
    Ok(RdbrOutput {
        shapes,
        modes,
        residual: current,
        trace,
    })
}

/// Result of [`mmd_decompose`]; estimates follow the caller's prior order and
/// carry their reconstructed modes.
#[derive(Debug, Clone)]
pub struct MmdResult {
    pub estimates: Vec<MimfEstimate>,
    pub residual: SampledSignal,
    /// Outer-loop trace; norms are relative to the input RMS.
    pub report: DecompositionReport,
}

/// Multiresolution mode decomposition with the partitioning estimate.
pub fn mmd_decompose(
    signal: &SampledSignal,
    priors: &[PhasePrior],
    cfg: &MmdConfig,
) -> Result<MmdResult> {
    cfg.validate()?;
    let regressor = PartitionEstimate::new(cfg.bins)?;
    mmd_decompose_with(signal, priors, cfg, &regressor)
}

/// Multiresolution mode decomposition with an arbitrary regression backend.
pub fn mmd_decompose_with(
    signal: &SampledSignal,
    priors: &[PhasePrior],
    cfg: &MmdConfig,
    regressor: &dyn ShapeRegressor,
) -> Result<MmdResult> {
    if priors.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one phase prior is required".into(),
        ));
    }
    let len = signal.len();
    for p in priors {
        p.check_len(len)?;
    }
    let (sorted, perm) = sort_components(priors.to_vec());
    let k = sorted.len();
    let m0 = cfg.bandwidth;
    let width = 2 * m0 + 1;
    let bins = regressor.bins();
    let zero = ShapeTable::zeros(bins)?;

    let mut cos_acc = vec![vec![zero.clone(); width]; k];
    let mut sin_acc = vec![vec![zero; width]; k];
    let mut modes = vec![vec![0.0; len]; k];
    let mut residual = signal.values().to_vec();
    let c = signal.rms();
    let mut report = DecompositionReport::empty(StopReason::ResidualSmall);

    if c > 0.0 {
        let mut e = 1.0;
        report.stop_reason = StopReason::MaxIter;
        for _ in 0..cfg.max_outer {
            let mut max_inc = 0.0f64;
            for n in band_order(m0) {
                let slot = (n + m0 as i32) as usize;
                let carriers: &[Carrier] = if n == 0 {
                    &[Carrier::Cos]
                } else {
                    &[Carrier::Cos, Carrier::Sin]
                };
                for &carrier in carriers {
                    let out = modified_rdbr_values(
                        &residual,
                        &sorted,
                        n,
                        carrier,
                        cfg.eps_inner,
                        cfg.max_inner,
                        regressor,
                        cfg.scheme,
                    )?;
                    for idx in 0..k {
                        let acc = match carrier {
                            Carrier::Cos => &mut cos_acc[idx][slot],
                            Carrier::Sin => &mut sin_acc[idx][slot],
                        };
                        *acc = acc.add_scaled(&out.shapes[idx], 1.0)?;
                        for (m, d) in modes[idx].iter_mut().zip(&out.modes[idx]) {
                            *m += d;
                        }
                        max_inc = max_inc.max(out.shapes[idx].l2_norm());
                    }
                    residual = out.residual;
                }
            }
            let rel = rms(&residual) / c;
            report.residual_norms.push(rel);
            report.shape_increment_norms.push(max_inc / c);
            report.iterations += 1;
            if rel <= cfg.eps_outer {
                report.stop_reason = StopReason::ResidualSmall;
                break;
            }
            if rel >= e - cfg.eps_outer {
                report.stop_reason = StopReason::Stalled;
                break;
            }
            e = rel;
        }
    }

    let estimates = cos_acc
        .into_iter()
        .zip(sin_acc)
        .zip(modes)
        .map(|((cos, sin), mode)| {
            let mut est = MimfEstimate::from_accumulators(m0, cos, sin)?;
            est.mode = Some(signal.with_values(mode)?);
            Ok(est)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MmdResult {
        estimates: perm.restore(estimates),
        residual: signal.with_values(residual)?,
        report,
    })
}

/// The ℓ-banded approximation: the estimate restricted to bands `|n| ≤ ℓ`.
pub fn ell_band_approx(
    est: &MimfEstimate,
    prior: &PhasePrior,
    ell: usize,
    grid: &[f64],
) -> Result<SampledSignal> {
    if ell > est.bandwidth() {
        return Err(Error::BandOutOfRange {
            ell,
            max: est.bandwidth(),
        });
    }
    prior.check_len(grid.len())?;
    let ell = ell as i32;
    SampledSignal::new(
        grid.to_vec(),
        reconstruct_bands(est, prior, |n| n.abs() <= ell),
    )
}

/// Contribution of the single band `n` (cosine and sine parts).
pub fn band_contribution(
    est: &MimfEstimate,
    prior: &PhasePrior,
    n: i32,
    grid: &[f64],
) -> Result<SampledSignal> {
    if n.unsigned_abs() as usize > est.bandwidth() {
        return Err(Error::BandOutOfRange {
            ell: n.unsigned_abs() as usize,
            max: est.bandwidth(),
        });
    }
    prior.check_len(grid.len())?;
    SampledSignal::new(grid.to_vec(), reconstruct_bands(est, prior, |m| m == n))
}

/// `R_ℓ(f) = f − M_ℓ(f)` for a component-attributed signal `f`.
pub fn band_residual(
    signal: &SampledSignal,
    est: &MimfEstimate,
    prior: &PhasePrior,
    ell: usize,
) -> Result<SampledSignal> {
    let approx = ell_band_approx(est, prior, ell, signal.times())?;
    signal.with_values(
        signal
            .values()
            .iter()
            .zip(approx.values())
            .map(|(f, m)| f - m)
            .collect(),
    )
}
