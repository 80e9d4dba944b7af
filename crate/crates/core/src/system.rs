//! A complete downlink transmitter (pulse, channel, MR precoder, amplifier at
//! an operating point) and its analytical output spectra.
//!
//! Output spectra are computed per antenna pair in the frequency domain:
//! the upsampled precoder responses and the pulse spectrum give the input
//! cross-spectrum, an inverse FFT gives the input correlation on the `T/κ`
//! grid, the cubic kernel is applied lag by lag, and a forward FFT returns
//! the output cross-spectrum. This is identical to composing
//! [`tx_corr_symbol_rate`], [`discrete_to_continuous_corr`],
//! [`propagate_corr`] and [`corr_to_psd`] when the FFT length covers the full
//! correlation support, without ever holding all `M × M` lag matrices.

use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::channel::{self, discretize, ChannelKind, ChannelModel, DiscreteChannel};
use crate::dsp::{fftshift, FreqGrid};
use crate::error::{ensure, Result};
use crate::pa::{calibrate_1db, cubic_output_corr, propagate_corr, OperatingPoint, PaModel, ScalingMode};
use crate::precode::{mr_precoder, tx_corr_symbol_rate, PowerAllocation, Precoder};
use crate::signal::{discrete_to_continuous_corr, LagCorrelation, Pulse, PulseAutocorr};
use crate::spectral::{corr_to_psd, SpectralMatrix};

/// Default number of frequency bins.
pub const DEFAULT_NFFT: usize = 4096;

/// How the amplifier drive level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveLevel {
    Compression1db(ScalingMode),
    InputPower(f64, ScalingMode),
    Unscaled,
}

impl Default for DriveLevel {
    fn default() -> Self {
        DriveLevel::Compression1db(ScalingMode::Global)
    }
}

#[derive(Debug, Clone)]
pub struct Transmitter {
    pulse: Pulse,
    acf: PulseAutocorr,
    channel: ChannelModel,
    discrete: DiscreteChannel,
    precoder: Precoder,
    pa: PaModel,
    op: OperatingPoint,
    input_powers: Vec<f64>,
}

impl Transmitter {
    /// MR-precoded transmitter toward the receivers of `channel`.
    pub fn new(
        pulse: Pulse,
        channel: ChannelModel,
        allocation: PowerAllocation,
        pa: PaModel,
        drive: DriveLevel,
    ) -> Result<Self> {
        let discrete = discretize(&channel, &pulse)?;
        let precoder = mr_precoder(&discrete, allocation)?;
        Self::with_precoder(pulse, channel, discrete, precoder, pa, drive)
    }

    pub fn with_precoder(
        pulse: Pulse,
        channel: ChannelModel,
        discrete: DiscreteChannel,
        precoder: Precoder,
        pa: PaModel,
        drive: DriveLevel,
    ) -> Result<Self> {
        ensure!(
            precoder.antennas() == channel.antennas(),
            Dimension,
            "precoder drives {} antennas, channel has {}",
            precoder.antennas(),
            channel.antennas()
        );
        let acf = pulse.autocorrelation();
        let input_powers = input_powers(&precoder, &acf);
        let m = input_powers.len();
        let op = match drive {
            DriveLevel::Compression1db(mode) => calibrate_1db(&pa, &input_powers, mode)?,
            DriveLevel::InputPower(p, mode) => OperatingPoint::explicit_power(p, &input_powers, mode)?,
            DriveLevel::Unscaled => OperatingPoint::unity(m),
        };
        Ok(Transmitter {
            pulse,
            acf,
            channel,
            discrete,
            precoder,
            pa,
            op,
            input_powers,
        })
    }

    pub fn pulse(&self) -> &Pulse {
        &self.pulse
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn discrete_channel(&self) -> &DiscreteChannel {
        &self.discrete
    }

    pub fn precoder(&self) -> &Precoder {
        &self.precoder
    }

    pub fn pa(&self) -> &PaModel {
        &self.pa
    }

    pub fn operating_point(&self) -> &OperatingPoint {
        &self.op
    }

    pub fn antennas(&self) -> usize {
        self.precoder.antennas()
    }

    /// Replaces the operating point, e.g. to scale every transmit signal.
    pub fn with_operating_point(mut self, op: OperatingPoint) -> Result<Self> {
        ensure!(op.scales().len() == self.antennas(), Dimension, "operating point size mismatch");
        self.op = op;
        Ok(self)
    }

    /// Replaces the amplifier, keeping the operating point.
    pub fn with_pa(mut self, pa: PaModel) -> Self {
        self.pa = pa;
        self
    }

    /// Amplifier input powers before operating-point scaling.
    pub fn unscaled_input_powers(&self) -> &[f64] {
        &self.input_powers
    }

    /// Amplifier input powers `σ²_{x_m}` at the operating point.
    pub fn input_powers(&self) -> Vec<f64> {
        self.input_powers
            .iter()
            .zip(self.op.scales())
            .map(|(p, s)| p * s * s)
            .collect()
    }

    /// Largest lag (in samples of `T/κ`) at which the output correlation
    /// can be nonzero.
    pub fn correlation_support(&self) -> usize {
        (self.precoder.taps().len() - 1) * self.pulse.oversampling() + self.acf.half()
    }

    /// Smallest FFT length for which the frequency-domain route is exact.
    pub fn min_nfft(&self) -> usize {
        2 * self.correlation_support() + 1
    }

    /// Unscaled input correlation on the `T/κ` grid (composed route).
    pub fn input_corr(&self) -> Result<LagCorrelation> {
        let rd = tx_corr_symbol_rate(&self.precoder, self.pulse.symbol_period());
        discrete_to_continuous_corr(&rd, &self.acf)
    }

    /// Output correlation through the amplifier (composed route).
    pub fn output_corr(&self) -> Result<LagCorrelation> {
        propagate_corr(&self.input_corr()?, &self.pa, &self.op)
    }

    /// Output spectral matrix by the composed lag-domain route. Intended for
    /// small arrays.
    pub fn output_psd_composed(&self, nfft: usize) -> Result<SpectralMatrix> {
        corr_to_psd(&self.output_corr()?, nfft)
    }

    /// Centered frequency grid with `nfft` bins.
    pub fn grid(&self, nfft: usize) -> FreqGrid {
        FreqGrid::centered(nfft, self.pulse.sample_rate())
    }

    /// Full output spectral matrix on the centered `nfft` grid.
    pub fn output_psd(&self, nfft: usize) -> Result<SpectralMatrix> {
        self.output_psd_bins(nfft, 0..nfft)
    }

    /// Output spectral matrix restricted to a bin range of the centered
    /// `nfft` grid.
    pub fn output_psd_bins(&self, nfft: usize, bins: Range<usize>) -> Result<SpectralMatrix> {
        let engine = PairEngine::new(self, nfft)?;
        ensure!(bins.start < bins.end && bins.end <= nfft, Grid, "bad bin range {bins:?}");
        let full = self.grid(nfft);
        let grid = FreqGrid {
            start: full.freq(bins.start),
            step: full.step,
            len: bins.len(),
        };
        let m = self.antennas();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
        let mut out = SpectralMatrix::zeros(grid, m);
        for chunk in pairs.chunks(256) {
            let spectra: Vec<Vec<Complex64>> = chunk
                .par_iter()
                .map(|&(i, j)| engine.pair_spectrum(i, j, &bins))
                .collect();
            for (&(i, j), s) in chunk.iter().zip(&spectra) {
                out.set_pair(i, j, s);
            }
        }
        Ok(out)
    }

    /// Diagonal of the output spectral matrix: one PSD per antenna.
    pub fn antenna_psds(&self, nfft: usize) -> Result<AntennaSpectra> {
        let engine = PairEngine::new(self, nfft)?;
        let all = 0..nfft;
        let psd = (0..self.antennas())
            .into_par_iter()
            .map(|m| engine.pair_spectrum(m, m, &all).into_iter().map(|z| z.re).collect())
            .collect();
        Ok(AntennaSpectra {
            grid: self.grid(nfft),
            psd,
        })
    }

    /// Frequency response `h̃_k(f)` of served receiver `k` at each bin.
    pub fn user_response(&self, k: usize, grid: &FreqGrid) -> Result<Vec<DVector<Complex64>>> {
        ensure!(k < self.channel.receivers(), Parameter, "no receiver {k}");
        receiver_response(&self.channel, k, grid)
    }
}

/// `M`-vector response of one receiver of `ch` at every bin of `grid`.
pub fn receiver_response(ch: &ChannelModel, receiver: usize, grid: &FreqGrid) -> Result<Vec<DVector<Complex64>>> {
    let r = ch.receiver(receiver);
    let h = channel::freq_response(&r, &grid.freqs())?;
    Ok(h.into_iter().map(|m| m.row(0).transpose()).collect())
}

/// Per-antenna output PSDs on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaSpectra {
    pub grid: FreqGrid,
    pub psd: Vec<Vec<f64>>,
}

impl AntennaSpectra {
    /// Transmitted PSD, the sum over antennas.
    pub fn total(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.grid.len];
        for p in &self.psd {
            t.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        t
    }
}

/// Exact per-antenna input power `(1/T) Σ_ν R[ν]_{mm} g(-νT)`.
fn input_powers(w: &Precoder, g: &PulseAutocorr) -> Vec<f64> {
    let k = g.oversampling() as isize;
    let reach = g.half() as isize / k;
    let xi = w.allocation().as_slice();
    let taps = w.taps();
    let n = taps.len() as isize;
    (0..w.antennas())
        .map(|m| {
            let mut total = 0.0;
            for nu in -reach.min(n - 1)..=reach.min(n - 1) {
                let gv = g.at(-nu * k);
                if gv == Complex64::default() {
                    continue;
                }
                let mut r = Complex64::default();
                for (u, &x) in xi.iter().enumerate() {
                    for l in 0.max(-nu)..n.min(n - nu) {
                        r += x * taps[l as usize][(m, u)].conj() * taps[(l + nu) as usize][(m, u)];
                    }
                }
                total += (r * gv).re;
            }
            total / g.symbol_period()
        })
        .collect()
}

/// Precomputed spectra for evaluating antenna-pair output spectra.
struct PairEngine<'a> {
    tx: &'a Transmitter,
    nfft: usize,
    /// `√ξ_k U_{mk}(f)` indexed `[m][k]`.
    responses: Vec<Vec<Vec<Complex64>>>,
    /// Pulse spectrum divided by `T`.
    gamma: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    var: Vec<f64>,
}

impl<'a> PairEngine<'a> {
    fn new(tx: &'a Transmitter, nfft: usize) -> Result<Self> {
        ensure!(
            nfft >= tx.min_nfft(),
            Grid,
            "nfft = {nfft} cannot hold the output correlation; need at least {}",
            tx.min_nfft()
        );
        ensure!(
            tx.pa.is_memoryless() && tx.pa.order() <= 2,
            Unsupported,
            "analytical spectra need a memoryless linear-plus-cubic amplifier"
        );
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let k = tx.pulse.oversampling();
        let t = tx.pulse.symbol_period();

        let mut gamma = vec![Complex64::default(); nfft];
        let half = tx.acf.half() as isize;
        for n in -half..=half {
            gamma[n.rem_euclid(nfft as isize) as usize] = tx.acf.at(n) / t;
        }
        fwd.process(&mut gamma);

        let xi = tx.precoder.allocation().as_slice();
        let taps = tx.precoder.taps();
        let responses = (0..tx.antennas())
            .map(|m| {
                xi.iter()
                    .enumerate()
                    .map(|(u, x)| {
                        let mut buf = vec![Complex64::default(); nfft];
                        for (l, w) in taps.iter().enumerate() {
                            buf[l * k] = w[(m, u)] * x.sqrt();
                        }
                        fwd.process(&mut buf);
                        buf
                    })
                    .collect()
            })
            .collect();
        Ok(PairEngine {
            tx,
            nfft,
            responses,
            gamma,
            fwd,
            inv,
            var: tx.input_powers(),
        })
    }

    fn pair_spectrum(&self, i: usize, j: usize, bins: &Range<usize>) -> Vec<Complex64> {
        let n = self.nfft;
        let mut buf = self.gamma.clone();
        for (b, g) in buf.iter_mut().enumerate() {
            let mut acc = Complex64::default();
            for (ui, uj) in self.responses[i].iter().zip(&self.responses[j]) {
                acc += ui[b].conj() * uj[b];
            }
            *g *= acc;
        }
        self.inv.process(&mut buf);
        let s = self.tx.op.scale(i) * self.tx.op.scale(j) / n as f64;
        let bi = (self.tx.pa.coeff(i, 1), self.tx.pa.coeff(i, 2));
        let bj = (self.tx.pa.coeff(j, 1), self.tx.pa.coeff(j, 2));
        for r in buf.iter_mut() {
            *r = cubic_output_corr(*r * s, self.var[i], self.var[j], bi, bj);
        }
        self.fwd.process(&mut buf);
        let dt = self.tx.pulse.sample_spacing();
        let shifted = fftshift(&buf);
        shifted[bins.clone()].iter().map(|z| z * dt).collect()
    }
}

/// Single-antenna, single-user, flat-channel reference transmitter.
pub fn siso_transmitter(pulse: Pulse, pa: PaModel, drive: DriveLevel) -> Result<Transmitter> {
    let ch = ChannelModel::from_taps(
        ChannelKind::Rayleigh { taps: 1 },
        vec![nalgebra::DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))],
        pulse.oversampling(),
        pulse.symbol_period(),
    )?;
    Transmitter::new(pulse, ch, PowerAllocation::equal(1), pa, drive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_los, gen_rayleigh, HALF_WAVELENGTH};
    use crate::rng::{stream, Stream};
    use crate::spectral::s_tx;

    fn pulse() -> Pulse {
        Pulse::root_raised_cosine(0.22, 8, 4, 1.0).unwrap()
    }

    fn small_rayleigh(m: usize, k: usize, seed: u64) -> Transmitter {
        let p = pulse();
        let ch = gen_rayleigh(m, k, 6, 4, 1.0, &mut stream(seed, Stream::UserChannel, 0)).unwrap();
        Transmitter::new(p, ch, PowerAllocation::equal(k), PaModel::reference(), DriveLevel::default()).unwrap()
    }

    #[test]
    fn fused_route_matches_composed_route() {
        let tx = small_rayleigh(3, 2, 11);
        let nfft = 512;
        assert!(nfft >= tx.min_nfft());
        let a = tx.output_psd(nfft).unwrap();
        let b = tx.output_psd_composed(nfft).unwrap();
        let peak = s_tx(&b).iter().copied().fold(0.0, f64::max);
        for bin in 0..nfft {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a.entry(bin, i, j) - b.entry(bin, i, j)).norm() < 1e-10 * peak);
                }
            }
        }
    }

    #[test]
    fn input_powers_match_zero_lag_correlation() {
        let tx = small_rayleigh(4, 2, 3);
        let r = tx.input_corr().unwrap();
        for (m, p) in tx.unscaled_input_powers().iter().enumerate() {
            assert!((r.at(0)[(m, m)].re - p).abs() < 1e-12);
        }
        let p1 = tx.pa().compression_point_1db(0).unwrap();
        let mean = tx.input_powers().iter().sum::<f64>() / 4.0;
        assert!((mean - p1).abs() < 1e-10);
    }

    #[test]
    fn too_short_fft_is_rejected() {
        let tx = small_rayleigh(2, 1, 5);
        assert!(tx.output_psd(tx.min_nfft() - 1).is_err());
    }

    #[test]
    fn diagonal_variant_matches_full_matrix() {
        let tx = small_rayleigh(3, 2, 8);
        let full = tx.output_psd(512).unwrap();
        let diag = tx.antenna_psds(512).unwrap();
        for b in 0..512 {
            for m in 0..3 {
                assert!((full.entry(b, m, m).re - diag.psd[m][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cropping_selects_bins() {
        let tx = small_rayleigh(2, 1, 9);
        let full = tx.output_psd(512).unwrap();
        let part = tx.output_psd_bins(512, 100..140).unwrap();
        assert_eq!(part, full.crop(100..140).unwrap());
    }

    #[test]
    fn siso_spectrum_integrates_to_output_power() {
        let tx = siso_transmitter(pulse(), PaModel::reference(), DriveLevel::default()).unwrap();
        let s = tx.antenna_psds(1024).unwrap();
        let total: f64 = s.total().iter().sum::<f64>() * s.grid.step;
        let r = tx.output_corr().unwrap();
        assert!((total - r.at(0)[(0, 0)].re).abs() < 1e-9 * total);
    }

    #[test]
    fn los_user_response_is_steering_vector() {
        let p = pulse();
        let ch = gen_los(&[0.3], 4, HALF_WAVELENGTH, 4, 1.0, &mut stream(1, Stream::UserChannel, 0)).unwrap();
        let tx = Transmitter::new(p, ch.clone(), PowerAllocation::equal(1), PaModel::reference(), DriveLevel::default())
            .unwrap();
        let grid = tx.grid(64);
        let h = tx.user_response(0, &grid).unwrap();
        for v in &h {
            for m in 0..4 {
                assert!((v[m] - ch.taps()[0][(0, m)]).norm() < 1e-12);
            }
        }
    }
}
