//! Warping, demodulation, folding, and the partitioning estimate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal_model::{bin_index, wrap_unit, Carrier, PhasePrior, SampledSignal, ShapeTable};

/// Amplitudes below this magnitude are rejected when dividing them out.
pub const MIN_AMPLITUDE: f64 = 1e-8;

/// Samples per chunk in the binning reduction. Fixed so that the reduction
/// tree, and therefore the rounding, does not depend on the thread count.
const CHUNK: usize = 8192;

/// Phase positions folded into one period, with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedSamples {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl FoldedSamples {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                what: "responses",
                expected: xs.len(),
                got: ys.len(),
            });
        }
        for (index, &x) in xs.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite { what: "xs", index });
            }
            if !(0.0..1.0).contains(&x) {
                return Err(Error::InvalidConfig(format!(
                    "folded position {x} outside [0, 1)"
                )));
            }
        }
        if let Some(index) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFinite { what: "ys", index });
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Re-indexes the residual by `v = p_k(t)` and divides out the amplitude prior.
pub fn unwarp_samples(
    residual: &SampledSignal,
    prior: &PhasePrior,
) -> Result<(Vec<f64>, Vec<f64>)> {
    prior.check_len(residual.len())?;
    Ok((
        prior.phase().to_vec(),
        unwarp_values(residual.values(), prior)?,
    ))
}

pub(crate) fn unwarp_values(values: &[f64], prior: &PhasePrior) -> Result<Vec<f64>> {
    match prior.amplitude() {
        None => Ok(values.to_vec()),
        Some(amp) => values
            .iter()
            .zip(amp)
            .enumerate()
            .map(|(index, (r, &q))| {
                if q.abs() < MIN_AMPLITUDE {
                    Err(Error::AmplitudeTooSmall { index, value: q })
                } else {
                    Ok(r / q)
                }
            })
            .collect(),
    }
}

/// Multiplies the residual by `cos` or `sin` of `2π·n·p_k/N_k` and re-indexes
/// it by `v = p_k(t)`. No amplitude is divided out.
pub fn demodulate(
    residual: &SampledSignal,
    prior: &PhasePrior,
    n: i32,
    carrier: Carrier,
) -> Result<(Vec<f64>, Vec<f64>)> {
    prior.check_len(residual.len())?;
    Ok((
        prior.phase().to_vec(),
        demodulate_values(residual.values(), prior, n, carrier)?,
    ))
}

/// Carrier samples `g(t_ℓ)` for band `n`.
pub(crate) fn carrier_samples(prior: &PhasePrior, n: i32, carrier: Carrier) -> Result<Vec<f64>> {
    if carrier == Carrier::Sin && n == 0 {
        return Err(Error::SinZeroBand);
    }
    let scale = n as f64 / prior.fundamental() as f64;
    Ok(prior
        .phase()
        .iter()
        .map(|&p| carrier.eval(scale * p))
        .collect())
}

pub(crate) fn demodulate_values(
    values: &[f64],
    prior: &PhasePrior,
    n: i32,
    carrier: Carrier,
) -> Result<Vec<f64>> {
    if n == 0 {
        // cos(0) = 1 exactly
        carrier_samples(prior, n, carrier)?;
        return Ok(values.to_vec());
    }
    let g = carrier_samples(prior, n, carrier)?;
    Ok(values.iter().zip(&g).map(|(r, g)| r * g).collect())
}

/// The folding map `(v, y) ↦ (v mod 1, y)`.
pub fn fold(vs: &[f64], ys: &[f64]) -> FoldedSamples {
    assert_eq!(vs.len(), ys.len(), "fold on unequal lengths");
    FoldedSamples {
        xs: vs.iter().map(|&v| wrap_unit(v)).collect(),
        ys: ys.to_vec(),
    }
}

/// A regression backend that turns folded samples into a shape table.
pub trait ShapeRegressor: Sync {
    fn regress(&self, samples: &FoldedSamples) -> Result<ShapeTable>;

    /// Number of bins of the tables this backend produces.
    fn bins(&self) -> usize;
}

/// The partitioning estimate on `bins` uniform cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionEstimate {
    pub bins: usize,
}

impl PartitionEstimate {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidBins(bins));
        }
        Ok(Self { bins })
    }
}

impl ShapeRegressor for PartitionEstimate {
    fn regress(&self, samples: &FoldedSamples) -> Result<ShapeTable> {
        partition_regress(samples, self.bins)
    }

    fn bins(&self) -> usize {
        self.bins
    }
}

struct BinSums {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl BinSums {
    fn accumulate(xs: &[f64], ys: &[f64], bins: usize) -> Self {
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0u64; bins];
        for (&x, &y) in xs.iter().zip(ys) {
            let j = bin_index(x, bins);
            sums[j] += y;
            counts[j] += 1;
        }
        Self { sums, counts }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }
}

/// Pairwise reduction in a fixed tree shape.
fn tree_reduce(mut parts: Vec<BinSums>) -> BinSums {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Per-bin mean of the responses; empty bins are filled by periodic linear
/// interpolation between the nearest non-empty bins on either side.
pub fn partition_regress(samples: &FoldedSamples, bins: usize) -> Result<ShapeTable> {
    if bins < 2 {
        return Err(Error::InvalidBins(bins));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let parts: Vec<BinSums> = if samples.len() <= CHUNK {
        vec![BinSums::accumulate(&samples.xs, &samples.ys, bins)]
    } else {
        samples
            .xs
            .par_chunks(CHUNK)
            .zip(samples.ys.par_chunks(CHUNK))
            .map(|(xs, ys)| BinSums::accumulate(xs, ys, bins))
            .collect()
    };
    let total = tree_reduce(parts);

    let mut values = vec![0.0; bins];
    let mut filled = Vec::with_capacity(bins);
    for j in 0..bins {
        if total.counts[j] > 0 {
            values[j] = total.sums[j] / total.counts[j] as f64;
            filled.push(j);
        }
    }
    fill_empty_bins(&mut values, &filled);
    ShapeTable::new(values)
}

fn fill_empty_bins(values: &mut [f64], filled: &[usize]) {
    let bins = values.len();
    if filled.len() == bins {
        return;
    }
    for (i, &lo) in filled.iter().enumerate() {
        let hi = filled[(i + 1) % filled.len()];
        // circular gap from lo to hi (a full turn when only one bin is filled)
        let gap = (hi + bins - lo - 1) % bins + 1;
        let (vlo, vhi) = (values[lo], values[hi]);
        for d in 1..gap {
            let w = d as f64 / gap as f64;
            values[(lo + d) % bins] = (1.0 - w) * vlo + w * vhi;
        }
    }
}

/// Removes the bin mean so that the shape has zero average over one period.
pub fn center_shape(shape: &ShapeTable) -> ShapeTable {
    shape.centered()
}

/// Demodulate (or unwarp), fold, regress and center in one step.
pub(crate) fn regress_centered(
    vs: &[f64],
    ys: &[f64],
    regressor: &dyn ShapeRegressor,
) -> Result<ShapeTable> {
    Ok(center_shape(&regressor.regress(&fold(vs, ys))?))
}
