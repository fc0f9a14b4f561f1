//! Sampled signals, phase priors, shape tables and MIMF estimates.
//!
//! Phases are carried in cycles: a prior stores `p(t) = N·φ(t)` and every
//! angle is multiplied by `2π` only at evaluation time.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root-mean-square of a sample vector; the discrete L2 norm on `[0, 1]`.
pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// `rms(a - b) / rms(b)`; returns the absolute RMS difference when `b` is zero.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_l2 on unequal lengths");
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let den = rms(b);
    if den == 0.0 {
        rms(&diff)
    } else {
        rms(&diff) / den
    }
}

/// Maps `v` into `[0, 1)`, including for negative inputs.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let x = v.rem_euclid(1.0);
    // rem_euclid can round tiny negative inputs up to exactly 1.0
    if x >= 1.0 {
        0.0
    } else {
        x
    }
}

/// A real-valued series sampled on strictly increasing times in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledSignal {
    /// Validates and canonicalizes a signal. Samples are sorted by time;
    /// duplicate times are rejected rather than merged.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "values",
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::TooShort {
                min: 2,
                got: times.len(),
            });
        }
        for (index, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFinite {
                    what: "times",
                    index,
                });
            }
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::OutOfDomain { time: t });
            }
        }
        check_finite("values", &values)?;

        let sorted = times.windows(2).all(|w| w[0] < w[1]);
        let (times, values) = if sorted {
            (times, values)
        } else {
            let mut pairs: Vec<(f64, f64)> = times.into_iter().zip(values).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            pairs.into_iter().unzip()
        };
        if let Some(w) = times.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::DuplicateTime { time: w[0] });
        }
        Ok(Self { times, values })
    }

    /// A new signal on the same grid with different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.times.len() {
            return Err(Error::LengthMismatch {
                what: "values",
                expected: self.times.len(),
                got: values.len(),
            });
        }
        check_finite("values", &values)?;
        Ok(Self {
            times: self.times.clone(),
            values,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            times: self.times.clone(),
            values: vec![0.0; self.times.len()],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Discrete L2 norm (root mean square over samples).
    pub fn rms(&self) -> f64 {
        rms(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Instantaneous phase `p_k(t_ℓ)` (cycles) and amplitude `q_k(t_ℓ)` of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePrior {
    phase: Vec<f64>,
    amplitude: Option<Vec<f64>>,
    fundamental: u32,
}

impl PhasePrior {
    /// Builds a prior aligned with `grid`. The fundamental `N_k` is derived
    /// with [`round_fundamental`].
    pub fn new(grid: &[f64], phase: Vec<f64>, amplitude: Option<Vec<f64>>) -> Result<Self> {
        if phase.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what: "phase",
                expected: grid.len(),
                got: phase.len(),
            });
        }
        check_finite("phase", &phase)?;
        if let Some(amp) = &amplitude {
            if amp.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    what: "amplitude",
                    expected: grid.len(),
                    got: amp.len(),
                });
            }
            check_finite("amplitude", amp)?;
            if let Some(index) = amp.iter().position(|&a| a <= 0.0) {
                return Err(Error::NonPositiveAmplitude {
                    index,
                    value: amp[index],
                });
            }
        }
        let fundamental = round_fundamental(&phase, grid)?;
        Ok(Self {
            phase,
            amplitude,
            fundamental,
        })
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    /// Amplitude samples, or `None` for the implicit all-ones amplitude.
    pub fn amplitude(&self) -> Option<&[f64]> {
        self.amplitude.as_deref()
    }

    /// Amplitude at sample `i` (1 when no amplitude was supplied).
    #[inline]
    pub fn amplitude_at(&self, i: usize) -> f64 {
        self.amplitude.as_ref().map_or(1.0, |a| a[i])
    }

    pub fn fundamental(&self) -> u32 {
        self.fundamental
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    /// The same prior with the amplitude dropped (unit amplitude).
    pub fn without_amplitude(&self) -> Self {
        Self {
            phase: self.phase.clone(),
            amplitude: None,
            fundamental: self.fundamental,
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if self.phase.len() != len {
            return Err(Error::GridMismatch(format!(
                "phase has {} samples, signal has {len}",
                self.phase.len()
            )));
        }
        Ok(())
    }
}

/// Nearest integer to the grid average of the discrete phase derivative.
///
/// Central differences in the interior, one-sided at the endpoints. The
/// result is clamped to at least 1.
pub fn round_fundamental(phase: &[f64], grid: &[f64]) -> Result<u32> {
    if phase.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "phase",
            expected: grid.len(),
            got: phase.len(),
        });
    }
    let l = phase.len();
    if l < 2 {
        return Err(Error::TooShort { min: 2, got: l });
    }
    if let Some(i) = phase.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotonePhase { index: i + 1 });
    }
    let mut total = 0.0;
    for i in 0..l {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == l - 1 => (l - 2, l - 1),
            _ => (i - 1, i + 1),
        };
        let d = (phase[b] - phase[a]) / (grid[b] - grid[a]);
        if !(d > 0.0) {
            return Err(Error::NonMonotonePhase { index: i });
        }
        total += d;
    }
    Ok((total / l as f64).round().max(1.0) as u32)
}

/// Records how [`sort_components`] reordered its input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    /// `order[i]` is the original index of the item now at position `i`.
    pub order: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    /// Puts items produced in sorted order back into the original order.
    pub fn restore<T>(&self, sorted: Vec<T>) -> Vec<T> {
        assert_eq!(sorted.len(), self.order.len());
        let mut slots: Vec<Option<T>> = (0..sorted.len()).map(|_| None).collect();
        for (item, &orig) in sorted.into_iter().zip(&self.order) {
            slots[orig] = Some(item);
        }
        slots
            .into_iter()
            .map(|s| s.expect("permutation is a bijection"))
            .collect()
    }
}

/// Stable sort of priors by ascending fundamental.
pub fn sort_components(priors: Vec<PhasePrior>) -> (Vec<PhasePrior>, Permutation) {
    let mut indexed: Vec<(usize, PhasePrior)> = priors.into_iter().enumerate().collect();
    indexed.sort_by_key(|(_, p)| p.fundamental);
    let order = indexed.iter().map(|(i, _)| *i).collect();
    let sorted = indexed.into_iter().map(|(_, p)| p).collect();
    (sorted, Permutation { order })
}

/// One period of a periodic shape function tabulated on `B` uniform bins.
///
/// Bin `j` covers `[j/B, (j+1)/B)`. Evaluation interpolates linearly between
/// bin centers with periodic wrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTable {
    bins: Vec<f64>,
    l2norm: f64,
}

impl ShapeTable {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.len() < 2 {
            return Err(Error::InvalidBins(bins.len()));
        }
        check_finite("bins", &bins)?;
        let l2norm = rms(&bins);
        Ok(Self { bins, l2norm })
    }

    pub fn zeros(bins: usize) -> Result<Self> {
        Self::new(vec![0.0; bins])
    }

    /// Tabulates `f` at the bin centers.
    pub fn from_fn(bins: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..bins).map(|j| f(bin_center(j, bins))).collect())
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Unit-interval L2 norm of the piecewise-constant table.
    pub fn l2_norm(&self) -> f64 {
        self.l2norm
    }

    pub fn mean(&self) -> f64 {
        self.bins.iter().sum::<f64>() / self.bins.len() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.bins.iter().all(|&b| b == 0.0)
    }

    /// Value at `v` cycles: linear interpolation between bin centers, periodic in `v`.
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let b = self.bins.len();
        let pos = wrap_unit(v) * b as f64 - 0.5;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return self.bins[(nearest as isize).rem_euclid(b as isize) as usize];
        }
        let lo = pos.floor();
        let frac = pos - lo;
        let j0 = (lo as isize).rem_euclid(b as isize) as usize;
        let j1 = if j0 + 1 == b { 0 } else { j0 + 1 };
        (1.0 - frac) * self.bins[j0] + frac * self.bins[j1]
    }

    /// Value of the bin containing `v` (piecewise-constant reading).
    pub fn eval_piecewise(&self, v: f64) -> f64 {
        self.bins[bin_index(wrap_unit(v), self.bins.len())]
    }

    /// The table with its bin mean removed.
    pub fn centered(&self) -> Self {
        let m = self.mean();
        let bins: Vec<f64> = self.bins.iter().map(|b| b - m).collect();
        let l2norm = rms(&bins);
        Self { bins, l2norm }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let bins: Vec<f64> = self.bins.iter().map(|b| b * factor).collect();
        let l2norm = rms(&bins);
        Self { bins, l2norm }
    }

    /// Bin-wise `self + factor·other`.
    pub fn add_scaled(&self, other: &ShapeTable, factor: f64) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::InvalidConfig(format!(
                "shape tables have {} and {} bins",
                self.len(),
                other.len()
            )));
        }
        Self::new(
            self.bins
                .iter()
                .zip(&other.bins)
                .map(|(a, b)| a + factor * b)
                .collect(),
        )
    }
}

/// Free-function form of [`ShapeTable::eval`].
pub fn eval_shape(shape: &ShapeTable, v: f64) -> f64 {
    shape.eval(v)
}

/// Center of bin `j` of `bins` uniform bins on `[0, 1)`.
#[inline]
pub fn bin_center(j: usize, bins: usize) -> f64 {
    (j as f64 + 0.5) / bins as f64
}

/// Index of the bin containing `x ∈ [0, 1)`.
#[inline]
pub(crate) fn bin_index(x: f64, bins: usize) -> usize {
    ((x * bins as f64) as usize).min(bins - 1)
}

/// Demodulating carrier of a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Carrier {
    Cos,
    Sin,
}

impl Carrier {
    /// `cos(2π·cycles)` or `sin(2π·cycles)`.
    #[inline]
    pub fn eval(self, cycles: f64) -> f64 {
        match self {
            Carrier::Cos => (TAU * cycles).cos(),
            Carrier::Sin => (TAU * cycles).sin(),
        }
    }
}

/// Estimate of one band `n` of an MIMF.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEstimate {
    pub n: i32,
    /// Accumulated product `a_n·s_cn`.
    pub cos_acc: ShapeTable,
    /// Accumulated product `b_n·s_sn`; always zero for `n = 0`.
    pub sin_acc: ShapeTable,
    /// `a_n = ‖cos_acc‖`.
    pub cos_coeff: f64,
    /// `b_n = ‖sin_acc‖`.
    pub sin_coeff: f64,
}

impl BandEstimate {
    fn new(n: i32, cos_acc: ShapeTable, sin_acc: ShapeTable) -> Self {
        let cos_coeff = cos_acc.l2_norm();
        let sin_coeff = sin_acc.l2_norm();
        Self {
            n,
            cos_acc,
            sin_acc,
            cos_coeff,
            sin_coeff,
        }
    }

    /// Unit-norm cosine shape `s_cn` (zero when `a_n = 0`).
    pub fn cos_shape(&self) -> ShapeTable {
        normalize(&self.cos_acc, self.cos_coeff)
    }

    /// Unit-norm sine shape `s_sn` (zero when `b_n = 0`).
    pub fn sin_shape(&self) -> ShapeTable {
        normalize(&self.sin_acc, self.sin_coeff)
    }

    pub fn acc(&self, carrier: Carrier) -> &ShapeTable {
        match carrier {
            Carrier::Cos => &self.cos_acc,
            Carrier::Sin => &self.sin_acc,
        }
    }
}

fn normalize(acc: &ShapeTable, coeff: f64) -> ShapeTable {
    if coeff == 0.0 {
        acc.scaled(0.0)
    } else {
        acc.scaled(1.0 / coeff)
    }
}

/// Multiresolution expansion of one component over bands `n ∈ [−M0, M0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimfEstimate {
    bandwidth: usize,
    bands: Vec<BandEstimate>,
    /// Reconstructed component samples, when produced by a decomposition.
    pub mode: Option<SampledSignal>,
}

impl MimfEstimate {
    /// Builds an estimate from accumulated band products, indexed by
    /// `n + M0`. Coefficients are the L2 norms of the accumulators.
    pub fn from_accumulators(
        bandwidth: usize,
        cos_acc: Vec<ShapeTable>,
        sin_acc: Vec<ShapeTable>,
    ) -> Result<Self> {
        let width = 2 * bandwidth + 1;
        if cos_acc.len() != width || sin_acc.len() != width {
            return Err(Error::InvalidConfig(format!(
                "expected {width} band tables, got {} cosine and {} sine",
                cos_acc.len(),
                sin_acc.len()
            )));
        }
        let bins = cos_acc[0].len();
        if cos_acc.iter().chain(&sin_acc).any(|s| s.len() != bins) {
            return Err(Error::InvalidConfig(
                "band tables differ in bin count".into(),
            ));
        }
        let m0 = bandwidth as i32;
        let bands = cos_acc
            .into_iter()
            .zip(sin_acc)
            .enumerate()
            .map(|(i, (c, s))| {
                let n = i as i32 - m0;
                let s = if n == 0 { s.scaled(0.0) } else { s };
                BandEstimate::new(n, c, s)
            })
            .collect();
        Ok(Self {
            bandwidth,
            bands,
            mode: None,
        })
    }

    /// All-zero estimate with `bins` bins per table.
    pub fn zeros(bandwidth: usize, bins: usize) -> Result<Self> {
        let zero = ShapeTable::zeros(bins)?;
        let width = 2 * bandwidth + 1;
        Self::from_accumulators(bandwidth, vec![zero.clone(); width], vec![zero; width])
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn bins(&self) -> usize {
        self.bands[0].cos_acc.len()
    }

    /// Bands in ascending `n`.
    pub fn bands(&self) -> &[BandEstimate] {
        &self.bands
    }

    pub fn band(&self, n: i32) -> Option<&BandEstimate> {
        let idx = n + self.bandwidth as i32;
        if idx < 0 {
            return None;
        }
        self.bands.get(idx as usize)
    }
}

/// Evaluates the bands selected by `keep` at every sample of the prior.
pub(crate) fn reconstruct_bands(
    est: &MimfEstimate,
    prior: &PhasePrior,
    keep: impl Fn(i32) -> bool,
) -> Vec<f64> {
    let nk = prior.fundamental() as f64;
    let active: Vec<&BandEstimate> = est
        .bands()
        .iter()
        .filter(|b| keep(b.n) && !(b.cos_acc.is_zero() && b.sin_acc.is_zero()))
        .collect();
    prior
        .phase()
        .iter()
        .map(|&p| {
            active
                .iter()
                .map(|b| {
                    let angle = b.n as f64 * p / nk;
                    let mut v = Carrier::Cos.eval(angle) * b.cos_acc.eval(p);
                    if b.n != 0 {
                        v += Carrier::Sin.eval(angle) * b.sin_acc.eval(p);
                    }
                    v
                })
                .sum()
        })
        .collect()
}

/// Evaluates `Σ a_n cos(2πnφ) s_cn(2πNφ) + b_n sin(2πnφ) s_sn(2πNφ)` on `grid`.
pub fn reconstruct_mimf(
    est: &MimfEstimate,
    prior: &PhasePrior,
    grid: &[f64],
) -> Result<SampledSignal> {
    prior.check_len(grid.len())?;
    SampledSignal::new(grid.to_vec(), reconstruct_bands(est, prior, |_| true))
}
