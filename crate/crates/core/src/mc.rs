//! Monte-Carlo waveform simulation and spectral estimation.
//!
//! Waveforms are generated end to end (symbols, precoder, pulse, drive
//! scaling, amplifier) and measured with Welch's method. Large arrays are
//! simulated one antenna at a time so memory stays proportional to a single
//! antenna's waveform.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::dsp::{fftshift, hann, FreqGrid};
use crate::error::{ensure, Result};
use crate::precode::SymbolSpectra;
use crate::rng::{complex_gaussian, stream, Stream};
use crate::signal::{modulate, LagCorrelation, SampledSignal};
use crate::spectral::SpectralMatrix;
use crate::system::{AntennaSpectra, Transmitter};

pub const DEFAULT_SEGMENT: usize = 4096;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_SYMBOLS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Gaussian,
    /// Square QAM with the given number of points.
    Qam(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_symbols: usize,
    pub welch_segment: usize,
    pub welch_overlap: f64,
    pub symbol_kind: SymbolKind,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_symbols: DEFAULT_SYMBOLS,
            welch_segment: DEFAULT_SEGMENT,
            welch_overlap: DEFAULT_OVERLAP,
            symbol_kind: SymbolKind::Gaussian,
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_symbols >= 1, Parameter, "need at least one symbol");
        ensure!(
            (0.0..1.0).contains(&self.welch_overlap),
            Parameter,
            "Welch overlap must lie in [0, 1)"
        );
        ensure!(self.welch_segment >= 2, Parameter, "Welch segment too short");
        if let SymbolKind::Qam(n) = self.symbol_kind {
            let side = (n as f64).sqrt().round() as usize;
            ensure!(side >= 2 && side * side == n, Parameter, "QAM order {n} is not a square");
        }
        Ok(())
    }

    fn hop(&self) -> usize {
        (((1.0 - self.welch_overlap) * self.welch_segment as f64).round() as usize).max(1)
    }
}

/// Unit-energy i.i.d. symbols for `users` streams, one random stream per user.
pub fn generate_symbols(users: usize, n: usize, kind: SymbolKind, seed: u64) -> Result<Vec<Vec<Complex64>>> {
    let qam = match kind {
        SymbolKind::Gaussian => None,
        SymbolKind::Qam(order) => {
            let side = (order as f64).sqrt().round() as usize;
            ensure!(side >= 2 && side * side == order, Parameter, "QAM order {order} is not a square");
            // Average energy of the grid {±1, ±3, ...}² is 2(side² - 1)/3.
            let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
            Some((side, norm))
        }
    };
    Ok((0..users)
        .map(|k| {
            let mut rng = stream(seed, Stream::Symbols, k as u64);
            (0..n)
                .map(|_| match qam {
                    None => complex_gaussian(&mut rng, 1.0),
                    Some((side, norm)) => {
                        let mut level = || (2.0 * rng.gen_range(0..side) as f64 - (side as f64 - 1.0)) * norm;
                        let re = level();
                        Complex64::new(re, level())
                    }
                })
                .collect()
        })
        .collect())
}

/// Samples removed from each end of a simulated waveform so only the
/// steady state remains.
pub fn transient_samples(tx: &Transmitter) -> usize {
    (tx.precoder().taps().len() + 2 * tx.pulse().span()) * tx.pulse().oversampling()
}

/// Streams one antenna's amplified waveform at a time.
pub struct AntennaSimulator<'a> {
    tx: &'a Transmitter,
    spectra: SymbolSpectra,
    trim: usize,
}

impl<'a> AntennaSimulator<'a> {
    pub fn new(tx: &'a Transmitter, mc: &McConfig) -> Result<Self> {
        mc.validate()?;
        let symbols = generate_symbols(tx.precoder().users(), mc.n_symbols, mc.symbol_kind, mc.seed)?;
        let trim = transient_samples(tx);
        let total = (mc.n_symbols + tx.precoder().taps().len() - 1 + 2 * tx.pulse().span()) * tx.pulse().oversampling();
        ensure!(
            total > 2 * trim,
            Parameter,
            "{} symbols do not outlast the transients",
            mc.n_symbols
        );
        Ok(AntennaSimulator {
            tx,
            spectra: SymbolSpectra::new(&symbols, tx.precoder().taps().len()),
            trim,
        })
    }

    /// Post-amplifier steady-state samples of antenna `m`.
    pub fn antenna(&self, m: usize) -> Result<Vec<Complex64>> {
        let z = self.spectra.precode_antenna(self.tx.precoder(), m);
        let x = modulate(&[z], self.tx.pulse())?.into_samples().pop().expect("one antenna");
        let s = self.tx.operating_point().scale(m);
        let scaled: Vec<Complex64> = x[self.trim..x.len() - self.trim].iter().map(|v| v * s).collect();
        Ok(self.tx.pa().amplify_antenna(m, &scaled))
    }
}

/// All antennas' amplified waveforms. Memory grows with `M × n_symbols κ`;
/// use [`AntennaSimulator`] or [`welch_antenna_psds`] for large arrays.
pub fn simulate_waveform(tx: &Transmitter, mc: &McConfig) -> Result<SampledSignal> {
    let sim = AntennaSimulator::new(tx, mc)?;
    let y = (0..tx.antennas()).map(|m| sim.antenna(m)).collect::<Result<Vec<_>>>()?;
    SampledSignal::new(y, tx.pulse().sample_rate())
}

struct Welch {
    segment: usize,
    hop: usize,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    grid: FreqGrid,
    norm_base: f64,
}

impl Welch {
    fn new(mc: &McConfig, sample_rate: f64) -> Self {
        let window = hann(mc.welch_segment);
        let energy: f64 = window.iter().map(|w| w * w).sum();
        Welch {
            segment: mc.welch_segment,
            hop: mc.hop(),
            fft: FftPlanner::new().plan_fft_forward(mc.welch_segment),
            grid: FreqGrid::centered(mc.welch_segment, sample_rate),
            norm_base: energy * sample_rate,
            window,
        }
    }

    fn segments(&self, len: usize) -> Result<usize> {
        ensure!(
            len >= self.segment + self.hop,
            Parameter,
            "{len} samples hold fewer than two Welch segments of {}",
            self.segment
        );
        Ok((len - self.segment) / self.hop + 1)
    }

    fn spectrum(&self, x: &[Complex64], seg: usize) -> Vec<Complex64> {
        let start = seg * self.hop;
        let mut buf: Vec<Complex64> = x[start..start + self.segment]
            .iter()
            .zip(&self.window)
            .map(|(v, w)| v * *w)
            .collect();
        self.fft.process(&mut buf);
        fftshift(&buf)
    }

    fn auto(&self, x: &[Complex64]) -> Result<Vec<f64>> {
        let nseg = self.segments(x.len())?;
        let mut acc = vec![0.0; self.segment];
        for s in 0..nseg {
            for (a, v) in acc.iter_mut().zip(self.spectrum(x, s)) {
                *a += v.norm_sqr();
            }
        }
        let norm = 1.0 / (self.norm_base * nseg as f64);
        acc.iter_mut().for_each(|a| *a *= norm);
        Ok(acc)
    }
}

/// Welch estimate of a single signal's PSD on the centered grid.
pub fn welch_auto_psd(x: &[Complex64], sample_rate: f64, mc: &McConfig) -> Result<(FreqGrid, Vec<f64>)> {
    mc.validate()?;
    let w = Welch::new(mc, sample_rate);
    Ok((w.grid, w.auto(x)?))
}

/// Welch estimate of the cross-spectral matrix `E[conj(Y_i) Y_j]`.
pub fn welch_cross_psd(y: &SampledSignal, mc: &McConfig) -> Result<SpectralMatrix> {
    mc.validate()?;
    let w = Welch::new(mc, y.sample_rate());
    let nseg = w.segments(y.len())?;
    let m = y.antennas();
    let mut out = SpectralMatrix::zeros(w.grid, m);
    let mut acc = vec![vec![Complex64::default(); w.segment]; m * (m + 1) / 2];
    for s in 0..nseg {
        let spectra: Vec<Vec<Complex64>> = (0..m).map(|a| w.spectrum(y.antenna(a), s)).collect();
        let mut p = 0;
        for i in 0..m {
            for j in i..m {
                for (a, (yi, yj)) in acc[p].iter_mut().zip(spectra[i].iter().zip(&spectra[j])) {
                    *a += yi.conj() * yj;
                }
                p += 1;
            }
        }
    }
    let norm = 1.0 / (w.norm_base * nseg as f64);
    let mut p = 0;
    for i in 0..m {
        for j in i..m {
            let vals: Vec<Complex64> = acc[p].iter().map(|z| z * norm).collect();
            out.set_pair(i, j, &vals);
            p += 1;
        }
    }
    Ok(out)
}

/// Per-antenna Welch PSDs of the simulated transmitter, one antenna in
/// memory at a time.
pub fn welch_antenna_psds(tx: &Transmitter, mc: &McConfig) -> Result<AntennaSpectra> {
    let sim = AntennaSimulator::new(tx, mc)?;
    let w = Welch::new(mc, tx.pulse().sample_rate());
    let psd = (0..tx.antennas())
        .map(|m| w.auto(&sim.antenna(m)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(AntennaSpectra { grid: w.grid, psd })
}

/// Biased time-average correlation `R[ℓ]_{ij} = (1/N) Σ_n conj(y_i[n]) y_j[n+ℓ]`,
/// symmetrized to exact Hermitian-lag form.
pub fn empirical_corr(y: &SampledSignal, max_lag: usize) -> Result<LagCorrelation> {
    let n = y.len();
    ensure!(max_lag < n, Parameter, "max lag {max_lag} exceeds the {n} samples");
    let m = y.antennas();
    let nfft = (n + max_lag).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let spectra: Vec<Vec<Complex64>> = y
        .samples()
        .iter()
        .map(|s| {
            let mut b = s.clone();
            b.resize(nfft, Complex64::default());
            fwd.process(&mut b);
            b
        })
        .collect();
    let mut out = LagCorrelation::zeros(m, max_lag, 1.0 / y.sample_rate());
    let scale = 1.0 / (n as f64 * nfft as f64);
    for i in 0..m {
        for j in 0..m {
            let mut c: Vec<Complex64> = spectra[i].iter().zip(&spectra[j]).map(|(a, b)| a.conj() * b).collect();
            inv.process(&mut c);
            for lag in -(max_lag as isize)..=max_lag as isize {
                out.at_mut(lag)[(i, j)] = c[lag.rem_euclid(nfft as isize) as usize] * scale;
            }
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Monte-Carlo estimate of `E[x_a^* x_b |x_a|^{2(p-1)} |x_b|^{2(p'-1)}]` for
/// jointly circular Gaussian `x_a`, `x_b` with `E[x_a^* x_b] = r`.
pub fn moment_oracle(
    r: Complex64,
    var_a: f64,
    var_b: f64,
    p: usize,
    pp: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Complex64> {
    ensure!(var_a > 0.0 && var_b > 0.0, Parameter, "variances must be positive");
    let resid = var_b - r.norm_sqr() / var_a;
    ensure!(
        resid >= -1e-9,
        Parameter,
        "|R|² = {} exceeds σ²_a σ²_b = {}",
        r.norm_sqr(),
        var_a * var_b
    );
    ensure!(p >= 1 && pp >= 1 && n_samples >= 1, Parameter, "orders and sample count must be positive");
    let c = r / var_a;
    let mut rng = stream(seed, Stream::Oracle, 0);
    let mut acc = Complex64::default();
    for _ in 0..n_samples {
        let xa = complex_gaussian(&mut rng, var_a);
        let xb = c * xa + complex_gaussian(&mut rng, resid.max(0.0));
        acc += xa.conj() * xb * xa.norm_sqr().powi(p as i32 - 1) * xb.norm_sqr().powi(pp as i32 - 1);
    }
    Ok(acc / n_samples as f64)
}

/// Strictly stationary jointly Gaussian source `x[n] = Σ_l A[l] w[n-l]` with
/// white `w ~ CN(0, I)`, used where a Gaussian input without a symbol clock is
/// needed.
#[derive(Debug, Clone)]
pub struct GaussianFir {
    taps: Vec<DMatrix<Complex64>>,
}

impl GaussianFir {
    pub fn new(taps: Vec<DMatrix<Complex64>>) -> Result<Self> {
        ensure!(!taps.is_empty(), Parameter, "at least one FIR tap is required");
        let (r, c) = taps[0].shape();
        ensure!(r > 0 && c > 0, Parameter, "FIR taps must be nonempty matrices");
        ensure!(taps.iter().all(|a| a.shape() == (r, c)), Parameter, "FIR taps differ in shape");
        Ok(GaussianFir { taps })
    }

    pub fn outputs(&self) -> usize {
        self.taps[0].nrows()
    }

    /// `R[ν] = Σ_l conj(A[l]) A[l+ν]^T`.
    pub fn corr(&self) -> LagCorrelation {
        let m = self.outputs();
        let max_lag = self.taps.len() - 1;
        let mut out = LagCorrelation::zeros(m, max_lag, 1.0);
        for nu in -(max_lag as isize)..=max_lag as isize {
            let acc = out.at_mut(nu);
            for l in 0..self.taps.len() as isize {
                let l2 = l + nu;
                if l2 < 0 || l2 >= self.taps.len() as isize {
                    continue;
                }
                *acc += self.taps[l as usize].conjugate() * self.taps[l2 as usize].transpose();
            }
        }
        out
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<SampledSignal> {
        ensure!(n > 0, Parameter, "sample count must be positive");
        let (m, inputs) = self.taps[0].shape();
        let len = self.taps.len();
        let mut rng = stream(seed, Stream::Oracle, 1);
        let w: Vec<Vec<Complex64>> = (0..inputs)
            .map(|_| (0..n + len - 1).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
            .collect();
        let mut x = vec![vec![Complex64::default(); n]; m];
        for (l, a) in self.taps.iter().enumerate() {
            for i in 0..m {
                for q in 0..inputs {
                    let c = a[(i, q)];
                    if c == Complex64::default() {
                        continue;
                    }
                    let src = &w[q][len - 1 - l..len - 1 - l + n];
                    for (xv, wv) in x[i].iter_mut().zip(src) {
                        *xv += c * wv;
                    }
                }
            }
        }
        SampledSignal::new(x, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gen_rayleigh;
    use crate::pa::PaModel;
    use crate::precode::PowerAllocation;
    use crate::signal::Pulse;
    use crate::system::DriveLevel;

    fn tx(m: usize, k: usize) -> Transmitter {
        let p = Pulse::root_raised_cosine(0.22, 8, 4, 1.0).unwrap();
        let ch = gen_rayleigh(m, k, 4, 4, 1.0, &mut stream(2, Stream::UserChannel, 0)).unwrap();
        Transmitter::new(p, ch, PowerAllocation::equal(k), PaModel::reference(), DriveLevel::default()).unwrap()
    }

    #[test]
    fn qam_symbols_have_unit_energy() {
        let s = generate_symbols(1, 40_000, SymbolKind::Qam(16), 1).unwrap();
        let e = s[0].iter().map(|v| v.norm_sqr()).sum::<f64>() / 40_000.0;
        assert!((e - 1.0).abs() < 0.02);
        assert!(generate_symbols(1, 4, SymbolKind::Qam(8), 1).is_err());
    }

    #[test]
    fn waveform_is_reproducible() {
        let t = tx(2, 1);
        let mc = McConfig {
            n_symbols: 500,
            seed: 4,
            ..McConfig::default()
        };
        let a = simulate_waveform(&t, &mc).unwrap();
        let b = simulate_waveform(&t, &mc).unwrap();
        assert_eq!(a, b);
        let c = simulate_waveform(&t, &McConfig { seed: 5, ..mc }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn white_noise_trace_is_flat() {
        let m = 3;
        let n = 1 << 16;
        let mut rng = stream(8, Stream::Oracle, 1);
        let y: Vec<Vec<Complex64>> = (0..m).map(|_| (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect()).collect();
        let sig = SampledSignal::new(y, 2.0).unwrap();
        let mc = McConfig {
            welch_segment: 256,
            ..McConfig::default()
        };
        let s = welch_cross_psd(&sig, &mc).unwrap();
        let tr = crate::spectral::s_tx(&s);
        let mean = tr.iter().sum::<f64>() / tr.len() as f64;
        // Unit-variance white noise at rate 2 has PSD 1/2 per antenna.
        assert!((mean - m as f64 / 2.0).abs() < 0.05 * m as f64 / 2.0);
        assert!(tr.iter().all(|t| (t - mean).abs() < 0.25 * mean));
        let (_, auto) = welch_auto_psd(sig.antenna(0), 2.0, &mc).unwrap();
        for (b, a) in auto.iter().enumerate() {
            assert!((a - s.entry(b, 0, 0).re).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_signal_is_rejected() {
        let sig = SampledSignal::new(vec![vec![Complex64::new(1.0, 0.0); 100]], 1.0).unwrap();
        assert!(welch_cross_psd(&sig, &McConfig::default()).is_err());
    }

    #[test]
    fn empirical_corr_basics() {
        let zero = SampledSignal::new(vec![vec![Complex64::default(); 64]; 2], 1.0).unwrap();
        let r = empirical_corr(&zero, 3).unwrap();
        assert!(r.matrices().iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));

        let y = SampledSignal::new(
            vec![
                (0..50).map(|i| Complex64::new((i as f64).sin(), 0.3)).collect(),
                (0..50).map(|i| Complex64::new(0.1, (i as f64 * 0.7).cos())).collect(),
            ],
            1.0,
        )
        .unwrap();
        let r = empirical_corr(&y, 4).unwrap();
        for (m, p) in y.powers().iter().enumerate() {
            assert!((r.at(0)[(m, m)].re - p).abs() < 1e-12);
        }
        assert!(r.hermitian_lag_error() < 1e-15);
        let direct: Complex64 = (0..48).map(|n| y.antenna(0)[n].conj() * y.antenna(1)[n + 2]).sum::<Complex64>() / 50.0;
        assert!((r.at(2)[(0, 1)] - direct).norm() < 1e-12);
    }

    #[test]
    fn oracle_rejects_infeasible_correlation() {
        assert!(moment_oracle(Complex64::new(2.0, 0.0), 1.0, 1.0, 1, 1, 10, 0).is_err());
    }

    #[test]
    fn oracle_first_moment_is_the_correlation() {
        let r = Complex64::new(0.3, -0.4);
        let est = moment_oracle(r, 1.0, 0.8, 1, 1, 200_000, 3).unwrap();
        // Standard error of the sample mean is about sqrt(σ²_a σ²_b / N).
        assert!((est - r).norm() < 4.0 * (0.8f64 / 200_000.0).sqrt());
    }

    #[test]
    fn waveform_has_zero_mean() {
        let t = tx(2, 2);
        let y = simulate_waveform(&t, &McConfig { n_symbols: 4000, seed: 1, ..McConfig::default() }).unwrap();
        for m in 0..2 {
            let x = y.antenna(m);
            let n = x.len() as f64;
            let mean: Complex64 = x.iter().sum::<Complex64>() / n;
            let sd = (y.powers()[m] / n).sqrt();
            // Samples are correlated over a few symbols; allow for that.
            assert!(mean.norm() < 3.0 * sd * (2.0 * t.pulse().oversampling() as f64).sqrt());
        }
    }

    #[test]
    fn gaussian_fir_correlation_matches_simulation() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let fir = GaussianFir::new(vec![
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.5, 0.2), c(0.8, 0.0)]),
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.6), c(0.3, 0.0), c(0.0, 0.0), c(-0.4, 0.1)]),
        ])
        .unwrap();
        let r = fir.corr();
        assert!(r.hermitian_lag_error() < 1e-15);
        let y = fir.simulate(200_000, 5).unwrap();
        let e = empirical_corr(&y, 1).unwrap();
        let peak = r.at(0)[(0, 0)].re;
        for lag in -1..=1 {
            assert!((e.at(lag) - r.at(lag)).norm() < 0.02 * peak, "lag {lag}");
        }
        assert!(GaussianFir::new(vec![]).is_err());
    }
}
