//! Recursive diffeomorphism-based regression for the generalized mode
//! decomposition, with Gauss-Seidel or Jacobi update order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fold_regress::{regress_centered, unwarp_values, PartitionEstimate, ShapeRegressor};
use crate::signal_model::{rms, sort_components, PhasePrior, SampledSignal, ShapeTable};

/// Order in which the components of one sweep see the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Each component regresses the residual already reduced by the
    /// components before it in the same sweep.
    #[default]
    GaussSeidel,
    /// All components regress the sweep-entering residual; the updates are
    /// subtracted together afterwards.
    Jacobi,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss_seidel" | "gauss-seidel" => Ok(Scheme::GaussSeidel),
            "jacobi" => Ok(Scheme::Jacobi),
            other => Err(Error::InvalidConfig(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Why an iteration loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxIter,
    ResidualSmall,
    IncrementSmall,
    Stalled,
}

/// Per-iteration convergence trace.
///
/// Norms are root-mean-square values relative to the RMS of the input signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub residual_norms: Vec<f64>,
    pub shape_increment_norms: Vec<f64>,
    pub stop_reason: StopReason,
    pub iterations: usize,
}

impl DecompositionReport {
    pub(crate) fn empty(stop_reason: StopReason) -> Self {
        Self {
            residual_norms: Vec::new(),
            shape_increment_norms: Vec::new(),
            stop_reason,
            iterations: 0,
        }
    }

    /// First iteration (1-based) whose relative residual is at most `target`.
    pub fn iterations_to_reach(&self, target: f64) -> Option<usize> {
        self.residual_norms
            .iter()
            .position(|&r| r <= target)
            .map(|i| i + 1)
    }
}

/// Stop test shared by the inner loops: returns a reason once any of
/// `j ≥ J`, `ε₁ ≤ ε`, `ε₂ ≤ ε`, `|ε₁ − ε₀| ≤ ε` holds.
pub(crate) struct StopTest {
    pub eps: f64,
    pub max_iter: usize,
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl StopTest {
    pub fn new(eps: f64, max_iter: usize) -> Self {
        Self {
            eps,
            max_iter,
            eps0: 2.0,
            eps1: 1.0,
            eps2: 1.0,
        }
    }

    pub fn record(&mut self, residual: f64, increment: f64) {
        self.eps0 = self.eps1;
        self.eps1 = residual;
        self.eps2 = increment;
    }

    pub fn check(&self, iterations: usize) -> Option<StopReason> {
        if self.eps1 <= self.eps {
            Some(StopReason::ResidualSmall)
        } else if self.eps2 <= self.eps {
            Some(StopReason::IncrementSmall)
        } else if (self.eps1 - self.eps0).abs() <= self.eps {
            Some(StopReason::Stalled)
        } else if iterations >= self.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmdConfig {
    /// Accuracy parameter ε ∈ (0, 1), applied to relative norms.
    pub eps: f64,
    /// Maximum number of sweeps J.
    pub max_iter: usize,
    /// Bin count of the partitioning estimate.
    pub bins: usize,
    pub scheme: Scheme,
}

impl Default for GmdConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_iter: 200,
            bins: 200,
            scheme: Scheme::GaussSeidel,
        }
    }
}

impl GmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps = {} not in (0, 1)",
                self.eps
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::InvalidBins(self.bins));
        }
        Ok(())
    }
}

/// Output of one sweep over all components.
#[derive(Debug, Clone)]
pub(crate) struct Sweep {
    pub increments: Vec<ShapeTable>,
    pub mode_increments: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

pub(crate) fn sweep_values(
    residual: &[f64],
    priors: &[PhasePrior],
    regressor: &dyn ShapeRegressor,
    scheme: Scheme,
) -> Result<Sweep> {
    let mut current = residual.to_vec();
    let mut increments = Vec::with_capacity(priors.len());
    let mut mode_increments = Vec::with_capacity(priors.len());
    for prior in priors {
        prior.check_len(residual.len())?;
        let source = match scheme {
            Scheme::GaussSeidel => current.as_slice(),
            Scheme::Jacobi => residual,
        };
        let ys = unwarp_values(source, prior)?;
        let inc = regress_centered(prior.phase(), &ys, regressor)?;
        let mode: Vec<f64> = prior
            .phase()
            .iter()
            .enumerate()
            .map(|(i, &p)| prior.amplitude_at(i) * inc.eval(p))
            .collect();
        for (r, m) in current.iter_mut().zip(&mode) {
            *r -= m;
        }
        increments.push(inc);
        mode_increments.push(mode);
    }
    Ok(Sweep {
        increments,
        mode_increments,
        residual: current,
    })
}

/// One sweep over the (sorted) priors. Returns the centered shape increments
/// and the updated residual.
pub fn rdbr_sweep(
    residual: &SampledSignal,
    priors: &[PhasePrior],
    bins: usize,
    scheme: Scheme,
) -> Result<(Vec<ShapeTable>, SampledSignal)> {
    let regressor = PartitionEstimate::new(bins)?;
    let sweep = sweep_values(residual.values(), priors, &regressor, scheme)?;
    Ok((sweep.increments, residual.with_values(sweep.residual)?))
}

/// Result of [`gmd_decompose`]; per-component vectors follow the caller's prior order.
#[derive(Debug, Clone)]
pub struct GmdResult {
    /// Accumulated shape estimates `s̄_k`.
    pub shapes: Vec<ShapeTable>,
    /// Modes `q_k(t)·s̄_k(2π p_k(t))`.
    pub modes: Vec<SampledSignal>,
    pub residual: SampledSignal,
    pub trace: DecompositionReport,
}

/// Generalized mode decomposition with the partitioning estimate.
pub fn gmd_decompose(
    signal: &SampledSignal,
    priors: &[PhasePrior],
    cfg: &GmdConfig,
) -> Result<GmdResult> {
    cfg.validate()?;
    let regressor = PartitionEstimate::new(cfg.bins)?;
    gmd_decompose_with(signal, priors, cfg, &regressor)
}

/// Generalized mode decomposition with an arbitrary regression backend.
/// `cfg.bins` is ignored in favour of the backend's own bin count.
pub fn gmd_decompose_with(
    signal: &SampledSignal,
    priors: &[PhasePrior],
    cfg: &GmdConfig,
    regressor: &dyn ShapeRegressor,
) -> Result<GmdResult> {
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
    let bins = regressor.bins();

    let mut shapes = vec![ShapeTable::zeros(bins)?; k];
    let mut modes = vec![vec![0.0; len]; k];
    let mut residual = signal.values().to_vec();
    let c = signal.rms();

    let mut trace = DecompositionReport::empty(StopReason::ResidualSmall);
    if c > 0.0 {
        let mut stop = StopTest::new(cfg.eps, cfg.max_iter);
        let mut j = 0;
        trace.stop_reason = loop {
            if let Some(reason) = stop.check(j) {
                break reason;
            }
            let sweep = sweep_values(&residual, &sorted, regressor, cfg.scheme)?;
            let mut max_inc = 0.0f64;
            for (idx, (inc, mode_inc)) in sweep
                .increments
                .iter()
                .zip(&sweep.mode_increments)
                .enumerate()
            {
                shapes[idx] = shapes[idx].add_scaled(inc, 1.0)?;
                for (m, d) in modes[idx].iter_mut().zip(mode_inc) {
                    *m += d;
                }
                max_inc = max_inc.max(inc.l2_norm());
            }
            residual = sweep.residual;
            let eps1 = rms(&residual) / c;
            let eps2 = max_inc / c;
            stop.record(eps1, eps2);
            trace.residual_norms.push(eps1);
            trace.shape_increment_norms.push(eps2);
            j += 1;
        };
        trace.iterations = j;
    }

    let modes = modes
        .into_iter()
        .map(|m| signal.with_values(m))
        .collect::<Result<Vec<_>>>()?;
    Ok(GmdResult {
        shapes: perm.restore(shapes),
        modes: perm.restore(modes),
        residual: signal.with_values(residual)?,
        trace,
    })
}

/// Bin-wise sums of accumulated shapes over groups of components.
///
/// `groups` must partition the component indices `0..K̄`; an empty group
/// yields a zero table.
pub fn group_sum_shapes(result: &GmdResult, groups: &[Vec<usize>]) -> Result<Vec<ShapeTable>> {
    let k = result.shapes.len();
    let mut seen = vec![false; k];
    for &i in groups.iter().flatten() {
        if i >= k {
            return Err(Error::InvalidPartition(format!(
                "component {i} out of range 0..{k}"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidPartition(format!(
                "component {i} listed twice"
            )));
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition(format!("component {i} missing")));
    }
    let bins = result.shapes.first().map_or(2, ShapeTable::len);
    groups
        .iter()
        .map(|g| {
            g.iter().try_fold(ShapeTable::zeros(bins)?, |acc, &i| {
                acc.add_scaled(&result.shapes[i], 1.0)
            })
        })
        .collect()
}
