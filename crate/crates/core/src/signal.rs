//! Pulse shaping and pulse-amplitude modulation, plus lag-indexed
//! correlation containers.
//!
//! Time is measured in seconds with the symbol period `T` carried
//! explicitly; the simulation grid has spacing `T / κ` where `κ` is the
//! oversampling factor.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dsp;
use crate::error::{ensure, Result};

/// Default truncation of the root-raised-cosine pulse, in symbols per side.
pub const DEFAULT_SPAN: usize = 32;

/// A unit-energy pulse sampled on the grid `T / κ`, centered at tap
/// `span * κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    taps: Vec<Complex64>,
    symbol_period: f64,
    oversampling: usize,
    rolloff: f64,
    span: usize,
}

impl Pulse {
    /// Truncated root-raised-cosine pulse normalized so that
    /// `Σ|p|² · T/κ = 1`.
    pub fn root_raised_cosine(
        rolloff: f64,
        span: usize,
        oversampling: usize,
        symbol_period: f64,
    ) -> Result<Self> {
        ensure!(
            (0.0..=1.0).contains(&rolloff),
            Parameter,
            "rolloff {rolloff} outside [0, 1]"
        );
        ensure!(span >= 8, Parameter, "span {span} < 8 symbols");
        ensure!(oversampling >= 2, Parameter, "oversampling {oversampling} < 2");
        ensure!(
            symbol_period > 0.0 && symbol_period.is_finite(),
            Parameter,
            "symbol period must be positive"
        );

        let center = (span * oversampling) as isize;
        let mut taps: Vec<Complex64> = (0..=2 * center)
            .map(|i| {
                let x = (i - center) as f64 / oversampling as f64;
                Complex64::new(rrc(x, rolloff), 0.0)
            })
            .collect();
        let dt = symbol_period / oversampling as f64;
        let energy: f64 = taps.iter().map(|p| p.norm_sqr()).sum::<f64>() * dt;
        let norm = energy.sqrt().recip();
        taps.iter_mut().for_each(|p| *p *= norm);

        Ok(Pulse {
            taps,
            symbol_period,
            oversampling,
            rolloff,
            span,
        })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn rolloff(&self) -> f64 {
        self.rolloff
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn sample_spacing(&self) -> f64 {
        self.symbol_period / self.oversampling as f64
    }

    pub fn sample_rate(&self) -> f64 {
        self.oversampling as f64 / self.symbol_period
    }

    /// Occupied bandwidth `B = (1 + rolloff) / T`.
    pub fn bandwidth(&self) -> f64 {
        (1.0 + self.rolloff) / self.symbol_period
    }

    pub fn center(&self) -> usize {
        self.span * self.oversampling
    }

    pub fn autocorrelation(&self) -> PulseAutocorr {
        pulse_autocorr(self)
    }
}

/// Root-raised-cosine impulse response at `x = t / T` for unit `T`.
fn rrc(x: f64, rolloff: f64) -> f64 {
    if x.abs() < 1e-12 {
        return 1.0 - rolloff + 4.0 * rolloff / PI;
    }
    if rolloff > 0.0 && (1.0 - (4.0 * rolloff * x).powi(2)).abs() < 1e-10 {
        let a = PI / (4.0 * rolloff);
        return rolloff * FRAC_1_SQRT_2
            * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * x * (1.0 - rolloff)).sin() + 4.0 * rolloff * x * (PI * x * (1.0 + rolloff)).cos();
    let den = PI * x * (1.0 - (4.0 * rolloff * x).powi(2));
    num / den
}

/// The pulse autocorrelation `g(τ) = ∫ p(t) p*(t - τ) dt` on the grid `T/κ`,
/// supported on lags `-half..=half`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseAutocorr {
    values: Vec<Complex64>,
    half: usize,
    oversampling: usize,
    symbol_period: f64,
}

impl PulseAutocorr {
    /// `g` at lag `n` samples; zero outside the support.
    pub fn at(&self, n: isize) -> Complex64 {
        let i = n + self.half as isize;
        if i < 0 || i as usize >= self.values.len() {
            Complex64::default()
        } else {
            self.values[i as usize]
        }
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn spacing(&self) -> f64 {
        self.symbol_period / self.oversampling as f64
    }
}

pub fn pulse_autocorr(p: &Pulse) -> PulseAutocorr {
    let n = p.taps.len();
    let conj_rev: Vec<Complex64> = p.taps.iter().rev().map(|c| c.conj()).collect();
    let dt = p.sample_spacing();
    let values = dsp::convolve(&p.taps, &conj_rev)
        .into_iter()
        .map(|v| v * dt)
        .collect();
    PulseAutocorr {
        values,
        half: n - 1,
        oversampling: p.oversampling,
        symbol_period: p.symbol_period,
    }
}

/// Per-antenna complex baseband samples at a common rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<Vec<Complex64>>,
    sample_rate: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<Vec<Complex64>>, sample_rate: f64) -> Result<Self> {
        ensure!(!samples.is_empty(), Dimension, "signal has no antennas");
        let len = samples[0].len();
        ensure!(
            samples.iter().all(|s| s.len() == len),
            Dimension,
            "antenna sequences differ in length"
        );
        ensure!(sample_rate > 0.0, Parameter, "sample rate must be positive");
        Ok(SampledSignal {
            samples,
            sample_rate,
        })
    }

    pub fn antennas(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn antenna(&self, m: usize) -> &[Complex64] {
        &self.samples[m]
    }

    pub fn samples(&self) -> &[Vec<Complex64>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Vec<Complex64>> {
        self.samples
    }

    /// Time-averaged power per antenna.
    pub fn powers(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len().max(1) as f64)
            .collect()
    }
}

/// Pulse-amplitude modulates symbol-rate sequences. Output sample `j`
/// corresponds to time `(j - span κ) T/κ`; the output has
/// `(N + 2 span) κ` samples.
pub fn modulate(x_sym: &[Vec<Complex64>], p: &Pulse) -> Result<SampledSignal> {
    ensure!(!x_sym.is_empty(), Dimension, "no antennas to modulate");
    let n = x_sym[0].len();
    ensure!(
        x_sym.iter().all(|x| x.len() == n),
        Dimension,
        "symbol sequences differ in length"
    );
    let k = p.oversampling;
    ensure!(
        p.taps.len() == 2 * p.span * k + 1,
        Grid,
        "pulse taps do not match span {} and oversampling {k}",
        p.span
    );
    let out_len = (n + 2 * p.span) * k;
    let samples = x_sym
        .iter()
        .map(|x| {
            let mut up = vec![Complex64::default(); n * k];
            for (i, &v) in x.iter().enumerate() {
                up[i * k] = v;
            }
            let mut y = dsp::convolve(&up, &p.taps);
            y.resize(out_len, Complex64::default());
            y
        })
        .collect();
    SampledSignal::new(samples, p.sample_rate())
}

/// Matrix-valued correlation `R[ν]` for lags `-max_lag..=max_lag` with a
/// fixed lag spacing in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCorrelation {
    max_lag: usize,
    matrices: Vec<DMatrix<Complex64>>,
    spacing: f64,
}

impl LagCorrelation {
    pub fn new(max_lag: usize, matrices: Vec<DMatrix<Complex64>>, spacing: f64) -> Result<Self> {
        ensure!(
            matrices.len() == 2 * max_lag + 1,
            Dimension,
            "expected {} lag matrices, got {}",
            2 * max_lag + 1,
            matrices.len()
        );
        let m = matrices[0].nrows();
        ensure!(
            matrices.iter().all(|r| r.nrows() == m && r.ncols() == m),
            Dimension,
            "lag matrices must all be {m}x{m}"
        );
        ensure!(spacing > 0.0, Parameter, "lag spacing must be positive");
        Ok(LagCorrelation {
            max_lag,
            matrices,
            spacing,
        })
    }

    pub fn zeros(dim: usize, max_lag: usize, spacing: f64) -> Self {
        LagCorrelation {
            max_lag,
            matrices: vec![DMatrix::zeros(dim, dim); 2 * max_lag + 1],
            spacing,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lag_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn lags(&self) -> impl Iterator<Item = isize> {
        let l = self.max_lag as isize;
        -l..=l
    }

    /// Matrix at `lag`, or `None` outside the support.
    pub fn get(&self, lag: isize) -> Option<&DMatrix<Complex64>> {
        let i = lag + self.max_lag as isize;
        if i < 0 {
            None
        } else {
            self.matrices.get(i as usize)
        }
    }

    pub fn at(&self, lag: isize) -> &DMatrix<Complex64> {
        self.get(lag)
            .unwrap_or_else(|| panic!("lag {lag} outside ±{}", self.max_lag))
    }

    pub fn at_mut(&mut self, lag: isize) -> &mut DMatrix<Complex64> {
        let i = (lag + self.max_lag as isize) as usize;
        &mut self.matrices[i]
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    /// Largest elementwise deviation from `R[-ν] = R[ν]^H`.
    pub fn hermitian_lag_error(&self) -> f64 {
        self.lags()
            .filter(|&l| l >= 0)
            .map(|l| {
                let d = self.at(-l) - self.at(l).adjoint();
                d.iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Replaces `R[ν]` by `(R[ν] + R[-ν]^H) / 2`.
    pub fn symmetrize(&mut self) {
        for l in 0..=self.max_lag as isize {
            let avg = (self.at(l) + self.at(-l).adjoint()) * Complex64::new(0.5, 0.0);
            *self.at_mut(-l) = avg.adjoint();
            *self.at_mut(l) = avg;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        LagCorrelation {
            max_lag: self.max_lag,
            matrices: self.matrices.iter().map(|r| r * Complex64::new(s, 0.0)).collect(),
            spacing: self.spacing,
        }
    }
}

/// `R(τ) = (1/T) Σ_ν R[ν] g(τ - νT)` on the grid `T/κ`.
pub fn discrete_to_continuous_corr(rd: &LagCorrelation, g: &PulseAutocorr) -> Result<LagCorrelation> {
    let t = g.symbol_period;
    let k = g.oversampling;
    ensure!(
        ((rd.spacing - t) / t).abs() < 1e-9,
        Grid,
        "discrete correlation spacing {} is not the symbol period {t}",
        rd.spacing
    );
    let dim = rd.dim();
    let max_lag = rd.max_lag * k + g.half;
    let inv_t = 1.0 / t;
    let mut out = LagCorrelation::zeros(dim, max_lag, g.spacing());
    for nu in rd.lags() {
        let r = rd.at(nu);
        if r.iter().all(|z| *z == Complex64::default()) {
            continue;
        }
        let center = nu * k as isize;
        for d in -(g.half as isize)..=g.half as isize {
            let w = g.at(d) * inv_t;
            if w == Complex64::default() {
                continue;
            }
            let target = out.at_mut(center + d);
            target.zip_apply(r, |acc, v| *acc += v * w);
        }
    }
    Ok(out)
}
