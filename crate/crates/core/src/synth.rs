//! Ground-truth generators: GIMFs, MIMFs, the two-component ECG-like test
//! signal, seeded noise, SNR, and sampling grids.
//!
//! All randomness comes from `ChaCha8Rng` (rand_chacha 0.9) seeded with
//! `seed_from_u64`; grid draws use stream 0 and noise draws stream 1.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{rms, Carrier, PhasePrior, SampledSignal, ShapeTable};

/// Identity string of the random generator, recorded in output metadata.
pub const RNG_IDENTITY: &str = "rand_chacha 0.9 ChaCha8Rng::seed_from_u64";

const GRID_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `c + λ·t + Σ_j cos_j·cos(2πjt) + sin_j·sin(2πjt)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub linear: f64,
    /// Cosine coefficients for harmonics 1, 2, …
    #[serde(default)]
    pub cos: Vec<f64>,
    /// Sine coefficients for harmonics 1, 2, …
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Default::default()
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.constant + self.linear * t;
        for (j, c) in self.cos.iter().enumerate() {
            v += c * (TAU * (j + 1) as f64 * t).cos();
        }
        for (j, s) in self.sin.iter().enumerate() {
            v += s * (TAU * (j + 1) as f64 * t).sin();
        }
        v
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let mut v = self.linear;
        for (j, c) in self.cos.iter().enumerate() {
            let w = TAU * (j + 1) as f64;
            v -= c * w * (w * t).sin();
        }
        for (j, s) in self.sin.iter().enumerate() {
            let w = TAU * (j + 1) as f64;
            v += s * w * (w * t).cos();
        }
        v
    }
}

/// One Gaussian bump of the ECG surrogate, in fractions of a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

const fn bump(center: f64, width: f64, height: f64) -> Bump {
    Bump {
        center,
        width,
        height,
    }
}

/// P, QRS and T analogs of variant 1.
pub const ECG_VARIANT_1: [Bump; 3] = [
    bump(0.20, 0.05, 0.15),
    bump(0.45, 0.09, 1.00),
    bump(0.75, 0.08, 0.25),
];

/// P, QRS and inverted-T analogs of variant 2.
pub const ECG_VARIANT_2: [Bump; 3] = [
    bump(0.15, 0.05, 0.20),
    bump(0.42, 0.08, 1.00),
    bump(0.72, 0.09, -0.20),
];

fn ecg_bumps(variant: u8) -> Result<&'static [Bump; 3]> {
    match variant {
        1 => Ok(&ECG_VARIANT_1),
        2 => Ok(&ECG_VARIANT_2),
        v => Err(Error::InvalidConfig(format!(
            "ECG variant {v} (expected 1 or 2)"
        ))),
    }
}

/// Periodized sum of Gaussian bumps at `x` (cycles).
fn raw_bumps(bumps: &[Bump], x: f64) -> f64 {
    let x = x.rem_euclid(1.0);
    let mut v = 0.0;
    for b in bumps {
        for m in -3..=3 {
            let d = x - b.center - m as f64;
            v += b.height * (-(d * d) / (2.0 * b.width * b.width)).exp();
        }
    }
    v
}

/// Scaling applied to the ECG surrogate after centering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EcgScale {
    /// Unit L2 norm over one period.
    #[default]
    UnitL2,
    /// Raw bump heights (QRS analog of height 1), centered only.
    RPeak,
}

/// Declarative description of a periodic shape function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Ecg {
        variant: u8,
        #[serde(default)]
        scale: EcgScale,
    },
    /// `√2·cos(2π·harmonic·x)` (unit L2).
    Cosine { harmonic: u32 },
    /// Tabulated bins, evaluated with the table interpolation rule.
    Table { bins: Vec<f64> },
}

/// A closed-form, evaluable shape function (argument in cycles).
#[derive(Debug, Clone)]
pub enum Shape {
    Ecg {
        bumps: [Bump; 3],
        offset: f64,
        factor: f64,
    },
    Cosine {
        harmonic: u32,
    },
    Table(ShapeTable),
}

/// Midpoint quadrature nodes used to center and normalize closed forms;
/// the rule is spectrally accurate for smooth periodic integrands.
const QUADRATURE_NODES: usize = 1 << 16;

impl Shape {
    pub fn from_spec(spec: &ShapeSpec) -> Result<Self> {
        match spec {
            ShapeSpec::Ecg { variant, scale } => Ok(ecg_shape(*variant, *scale)?),
            ShapeSpec::Cosine { harmonic } => Ok(Shape::Cosine {
                harmonic: *harmonic,
            }),
            ShapeSpec::Table { bins } => Ok(Shape::Table(ShapeTable::new(bins.clone())?)),
        }
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Shape::Ecg {
                bumps,
                offset,
                factor,
            } => factor * (raw_bumps(bumps, v) - offset),
            Shape::Cosine { harmonic } => {
                std::f64::consts::SQRT_2 * (TAU * *harmonic as f64 * v).cos()
            }
            Shape::Table(t) => t.eval(v),
        }
    }

    /// Tabulates the shape at `bins` bin centers.
    pub fn tabulate(&self, bins: usize) -> Result<ShapeTable> {
        ShapeTable::from_fn(bins, |x| self.eval(x))
    }

    /// L2 norm over one period.
    pub fn l2_norm(&self) -> f64 {
        let vals: Vec<f64> = (0..QUADRATURE_NODES)
            .map(|i| self.eval((i as f64 + 0.5) / QUADRATURE_NODES as f64))
            .collect();
        rms(&vals)
    }
}

/// The closed-form ECG surrogate, centered and scaled.
pub fn ecg_shape(variant: u8, scale: EcgScale) -> Result<Shape> {
    let bumps = *ecg_bumps(variant)?;
    let nodes: Vec<f64> = (0..QUADRATURE_NODES)
        .map(|i| raw_bumps(&bumps, (i as f64 + 0.5) / QUADRATURE_NODES as f64))
        .collect();
    let offset = nodes.iter().sum::<f64>() / QUADRATURE_NODES as f64;
    let factor = match scale {
        EcgScale::RPeak => 1.0,
        EcgScale::UnitL2 => {
            let var =
                nodes.iter().map(|v| (v - offset).powi(2)).sum::<f64>() / QUADRATURE_NODES as f64;
            1.0 / var.sqrt()
        }
    };
    Ok(Shape::Ecg {
        bumps,
        offset,
        factor,
    })
}

/// ECG-like shape table: three Gaussian bumps (P, QRS and T analogs)
/// sampled at bin centers, then centered and normalized to unit L2 norm.
pub fn ecg_like_shape(bins: usize, variant: u8) -> Result<ShapeTable> {
    if bins < 64 {
        return Err(Error::InvalidConfig(format!(
            "ECG shape needs at least 64 bins, got {bins}"
        )));
    }
    let bumps = ecg_bumps(variant)?;
    let raw = ShapeTable::from_fn(bins, |x| raw_bumps(bumps, x))?.centered();
    Ok(raw.scaled(1.0 / raw.l2_norm()))
}

/// One band of an MIMF: `a_n cos(2πnφ) s_cn + b_n sin(2πnφ) s_sn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub n: i32,
    #[serde(default)]
    pub cos_coeff: f64,
    #[serde(default)]
    pub cos_shape: Option<ShapeSpec>,
    #[serde(default)]
    pub sin_coeff: f64,
    #[serde(default)]
    pub sin_shape: Option<ShapeSpec>,
}

/// A synthetic component `α·s(2π N φ(t))`, or an MIMF when `bands` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub amplitude: TrigSeries,
    /// Evaluate the amplitude at `φ(t)` instead of `t`.
    #[serde(default)]
    pub amplitude_in_phase: bool,
    /// Normalized phase `φ(t)`; must be strictly increasing on `[0, 1]`.
    pub phase: TrigSeries,
    pub fundamental: u32,
    pub shape: ShapeSpec,
    /// When present, the component is `Σ_n` of these bands and
    /// `amplitude`/`shape` are used only for the amplitude prior.
    #[serde(default)]
    pub bands: Option<Vec<BandSpec>>,
}

impl ComponentSpec {
    /// Checks the fundamental and phase monotonicity. Amplitude positivity
    /// is enforced only when a prior is built from the spec.
    pub fn validate(&self) -> Result<()> {
        const CHECK: usize = 4096;
        if self.fundamental == 0 {
            return Err(Error::InvalidConfig("fundamental must be positive".into()));
        }
        for i in 0..=CHECK {
            if self.phase.derivative(i as f64 / CHECK as f64) <= 0.0 {
                return Err(Error::NonMonotonePhase { index: i });
            }
        }
        Ok(())
    }

    pub fn amplitude_value(&self, t: f64) -> f64 {
        if self.amplitude_in_phase {
            self.amplitude.eval(self.phase.eval(t))
        } else {
            self.amplitude.eval(t)
        }
    }

    /// Phase prior `p = N·φ(t)` and amplitude prior on `grid`.
    pub fn prior(&self, grid: &[f64]) -> Result<PhasePrior> {
        let n = self.fundamental as f64;
        PhasePrior::new(
            grid,
            grid.iter().map(|&t| n * self.phase.eval(t)).collect(),
            Some(grid.iter().map(|&t| self.amplitude_value(t)).collect()),
        )
    }
}

/// Samples `α(t)·s(2π N φ(t))` (or the band sum) on `grid`.
pub fn gen_gimf(spec: &ComponentSpec, grid: &[f64]) -> Result<SampledSignal> {
    spec.validate()?;
    let n = spec.fundamental as f64;
    let values = match &spec.bands {
        None => {
            let shape = Shape::from_spec(&spec.shape)?;
            grid.iter()
                .map(|&t| spec.amplitude_value(t) * shape.eval(n * spec.phase.eval(t)))
                .collect()
        }
        Some(bands) => {
            let built = bands
                .iter()
                .map(|b| {
                    let cos = b.cos_shape.as_ref().map(Shape::from_spec).transpose()?;
                    let sin = b.sin_shape.as_ref().map(Shape::from_spec).transpose()?;
                    Ok((b, cos, sin))
                })
                .collect::<Result<Vec<_>>>()?;
            grid.iter()
                .map(|&t| {
                    let phi = spec.phase.eval(t);
                    built
                        .iter()
                        .map(|(b, cos, sin)| {
                            let angle = b.n as f64 * phi;
                            let mut v = 0.0;
                            if let Some(s) = cos {
                                v += b.cos_coeff * Carrier::Cos.eval(angle) * s.eval(n * phi);
                            }
                            if let Some(s) = sin {
                                v += b.sin_coeff * Carrier::Sin.eval(angle) * s.eval(n * phi);
                            }
                            v
                        })
                        .sum()
                })
                .collect()
        }
    };
    SampledSignal::new(grid.to_vec(), values)
}

/// Sampling-grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `t_ℓ = ℓ/L`.
    #[default]
    Uniform,
    /// Sorted i.i.d. uniform draws.
    IidUniform,
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GridMode::Uniform),
            "iid" | "iid_uniform" => Ok(GridMode::IidUniform),
            other => Err(Error::InvalidConfig(format!("unknown grid mode {other:?}"))),
        }
    }
}

/// `L` sample times in `[0, 1)`.
pub fn sample_grid(len: usize, mode: GridMode, seed: u64) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::TooShort { min: 2, got: len });
    }
    match mode {
        GridMode::Uniform => Ok((0..len).map(|i| i as f64 / len as f64).collect()),
        GridMode::IidUniform => {
            let mut r = rng(seed, GRID_STREAM);
            let mut times: Vec<f64> = (0..len).map(|_| r.random::<f64>()).collect();
            loop {
                times.sort_by(f64::total_cmp);
                let dups: Vec<usize> = (1..len).filter(|&i| times[i] == times[i - 1]).collect();
                if dups.is_empty() {
                    return Ok(times);
                }
                for i in dups {
                    times[i] = r.random::<f64>();
                }
            }
        }
    }
}

/// Adds i.i.d. `N(0, σ²)` noise. `σ² = 0` returns the signal unchanged.
pub fn add_noise(signal: &SampledSignal, variance: f64, seed: u64) -> Result<SampledSignal> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::InvalidConfig(format!("noise variance {variance}")));
    }
    if variance == 0.0 {
        return Ok(signal.clone());
    }
    let normal =
        Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut r = rng(seed, NOISE_STREAM);
    signal.with_values(
        signal
            .values()
            .iter()
            .map(|v| v + normal.sample(&mut r))
            .collect(),
    )
}

/// `10·log10(‖f‖ / σ²)` with the RMS norm.
///
/// This divides a norm by a variance rather than forming a power ratio; the
/// formula is kept as is so that reported values are comparable.
pub fn snr(signal: &[f64], variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::NonPositiveVariance(variance));
    }
    Ok(10.0 * (rms(signal) / variance).log10())
}

/// Ground truth for one component of the two-component example.
#[derive(Debug, Clone)]
pub struct TruthComponent {
    pub spec: ComponentSpec,
    /// Closed-form shape `s_k` as used by the generator.
    pub shape: Shape,
    /// The clean component `f_k` on the grid.
    pub mode: SampledSignal,
    /// Leading term `M_0(f_k)(t) = a_0·s_k(2π p_k(t))`.
    pub leading: SampledSignal,
    /// Band products as `(n, cos coefficient, sin coefficient)`; the band
    /// shape is `shape` for each. Bands absent from the list are zero.
    pub bands: Vec<(i32, f64, f64)>,
}

impl TruthComponent {
    /// True product `a_n s_cn` (or `b_n s_sn`) tabulated on `bins` bins.
    pub fn band_product(&self, n: i32, carrier: Carrier, bins: usize) -> Result<ShapeTable> {
        let coeff = self
            .bands
            .iter()
            .find(|b| b.0 == n)
            .map_or(0.0, |b| match carrier {
                Carrier::Cos => b.1,
                Carrier::Sin => b.2,
            });
        Ok(self.shape.tabulate(bins)?.scaled(coeff))
    }
}

/// Output of [`gen_example_4_1`].
#[derive(Debug, Clone)]
pub struct Example41 {
    pub signal: SampledSignal,
    pub clean: SampledSignal,
    pub components: Vec<TruthComponent>,
    /// Priors with `p_k = N_k φ_k` and amplitude `α_k(φ_k(t))`.
    pub priors: Vec<PhasePrior>,
    pub noise_variance: f64,
    pub seed: u64,
}

/// Component specs of the two-component example: amplitudes
/// `1 + 0.2cos + 0.1sin` and `1 + 0.1cos + 0.2sin` evaluated at the phase,
/// phases `t + 0.006 sin 2πt` and `t + 0.006 cos 2πt`, fundamentals 150 and
/// 220, and ECG-like shapes at R-peak scale.
pub fn example_4_1_specs() -> [ComponentSpec; 2] {
    let ecg = |variant| ShapeSpec::Ecg {
        variant,
        scale: EcgScale::RPeak,
    };
    [
        ComponentSpec {
            amplitude: TrigSeries {
                constant: 1.0,
                cos: vec![0.2],
                sin: vec![0.1],
                ..Default::default()
            },
            amplitude_in_phase: true,
            phase: TrigSeries {
                linear: 1.0,
                sin: vec![0.006],
                ..Default::default()
            },
            fundamental: 150,
            shape: ecg(1),
            bands: None,
        },
        ComponentSpec {
            amplitude: TrigSeries {
                constant: 1.0,
                cos: vec![0.1],
                sin: vec![0.2],
                ..Default::default()
            },
            amplitude_in_phase: true,
            phase: TrigSeries {
                linear: 1.0,
                cos: vec![0.006],
                ..Default::default()
            },
            fundamental: 220,
            shape: ecg(2),
            bands: None,
        },
    ]
}

/// The two-component ECG-like test signal with optional Gaussian noise.
pub fn gen_example_4_1(
    len: usize,
    noise_variance: f64,
    seed: u64,
    grid_mode: GridMode,
) -> Result<Example41> {
    let grid = sample_grid(len, grid_mode, seed)?;
    let mut components = Vec::with_capacity(2);
    let mut priors = Vec::with_capacity(2);
    for spec in example_4_1_specs() {
        let shape = Shape::from_spec(&spec.shape)?;
        let mode = gen_gimf(&spec, &grid)?;
        let prior = spec.prior(&grid)?;
        let leading = SampledSignal::new(
            grid.clone(),
            prior.phase().iter().map(|&p| shape.eval(p)).collect(),
        )?;
        // α(φ) = c + a cos 2πφ + b sin 2πφ expands into bands 0 and 1
        let bands = vec![
            (0, spec.amplitude.constant, 0.0),
            (1, spec.amplitude.cos[0], spec.amplitude.sin[0]),
        ];
        components.push(TruthComponent {
            spec,
            shape,
            mode,
            leading,
            bands,
        });
        priors.push(prior);
    }
    let clean_values: Vec<f64> = (0..len)
        .map(|i| components.iter().map(|c| c.mode.values()[i]).sum())
        .collect();
    let clean = SampledSignal::new(grid, clean_values)?;
    let signal = add_noise(&clean, noise_variance, seed)?;
    Ok(Example41 {
        signal,
        clean,
        components,
        priors,
        noise_variance,
        seed,
    })
}
