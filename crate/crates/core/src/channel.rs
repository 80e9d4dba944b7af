//! Line-of-sight and i.i.d. Rayleigh channels on the oversampled grid, their
//! symbol-rate discretization through the pulse, and frequency responses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::dsp::{self, FreqGrid};
use crate::error::{ensure, Result};
use crate::rng::complex_gaussian;
use crate::signal::Pulse;

/// Default element spacing of the uniform linear array, in wavelengths.
pub const HALF_WAVELENGTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    /// Single-path channel to each receiver at the listed azimuths (radians).
    LineOfSight {
        angles: Vec<f64>,
        spacing_over_wavelength: f64,
    },
    /// `taps` i.i.d. CN(0, 1/taps) coefficients per link on the grid `T/κ`.
    Rayleigh { taps: usize },
}

/// Impulse responses from `M` antennas to `K` receivers. `taps[i]` is the
/// `K × M` matrix of coefficients at delay `i T/κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    kind: ChannelKind,
    taps: Vec<DMatrix<Complex64>>,
    pathloss: Vec<f64>,
    oversampling: usize,
    symbol_period: f64,
}

impl ChannelModel {
    pub fn from_taps(
        kind: ChannelKind,
        taps: Vec<DMatrix<Complex64>>,
        oversampling: usize,
        symbol_period: f64,
    ) -> Result<Self> {
        ensure!(!taps.is_empty(), Dimension, "channel needs at least one tap");
        let (k, m) = taps[0].shape();
        ensure!(
            taps.iter().all(|t| t.shape() == (k, m)),
            Dimension,
            "channel taps must all be {k}x{m}"
        );
        ensure!(oversampling >= 1, Parameter, "oversampling must be positive");
        Ok(ChannelModel {
            kind,
            taps,
            pathloss: vec![1.0; k],
            oversampling,
            symbol_period,
        })
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    pub fn taps(&self) -> &[DMatrix<Complex64>] {
        &self.taps
    }

    pub fn receivers(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn antennas(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn pathloss(&self) -> &[f64] {
        &self.pathloss
    }

    pub fn with_pathloss(mut self, pathloss: Vec<f64>) -> Result<Self> {
        ensure!(
            pathloss.len() == self.receivers(),
            Dimension,
            "{} pathloss values for {} receivers",
            pathloss.len(),
            self.receivers()
        );
        ensure!(
            pathloss.iter().all(|b| *b > 0.0 && b.is_finite()),
            Parameter,
            "pathloss must be positive"
        );
        self.pathloss = pathloss;
        Ok(self)
    }

    /// Total energy `Σ_i ‖h_i‖²` per link, as a `K × M` matrix.
    pub fn link_energy(&self) -> DMatrix<f64> {
        let (k, m) = self.taps[0].shape();
        let mut e = DMatrix::zeros(k, m);
        for t in &self.taps {
            e.zip_apply(t, |acc, h| *acc += h.norm_sqr());
        }
        e
    }

    /// Row `receiver` as a single-receiver channel.
    pub fn receiver(&self, receiver: usize) -> ChannelModel {
        let kind = match &self.kind {
            ChannelKind::LineOfSight {
                angles,
                spacing_over_wavelength,
            } => ChannelKind::LineOfSight {
                angles: vec![angles[receiver]],
                spacing_over_wavelength: *spacing_over_wavelength,
            },
            k => k.clone(),
        };
        ChannelModel {
            kind,
            taps: self.taps.iter().map(|t| t.rows(receiver, 1).into_owned()).collect(),
            pathloss: vec![self.pathloss[receiver]],
            oversampling: self.oversampling,
            symbol_period: self.symbol_period,
        }
    }
}

/// Uniform-linear-array steering vector `[σ]_m = exp(j 2π m Δ sin θ / λ)`.
pub fn steering_vector(angle: f64, antennas: usize, spacing_over_wavelength: f64) -> DVector<Complex64> {
    let u = 2.0 * PI * spacing_over_wavelength * angle.sin();
    DVector::from_fn(antennas, |m, _| Complex64::from_polar(1.0, u * m as f64))
}

/// Line-of-sight channel: one tap per link, `e^{jφ_k} σ_k` with the carrier
/// phase `φ_k` uniform on `[0, 2π)`.
pub fn gen_los<R: Rng + ?Sized>(
    angles: &[f64],
    antennas: usize,
    spacing_over_wavelength: f64,
    oversampling: usize,
    symbol_period: f64,
    rng: &mut R,
) -> Result<ChannelModel> {
    ensure!(antennas >= 1, Parameter, "need at least one antenna");
    ensure!(!angles.is_empty(), Parameter, "need at least one receiver angle");
    ensure!(
        angles.iter().all(|a| a.abs() < PI / 2.0),
        Parameter,
        "angles must lie strictly inside (-90°, 90°)"
    );
    let k = angles.len();
    let mut h = DMatrix::zeros(k, antennas);
    for (row, &theta) in angles.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
        let sv = steering_vector(theta, antennas, spacing_over_wavelength);
        for m in 0..antennas {
            h[(row, m)] = phase * sv[m];
        }
    }
    ChannelModel::from_taps(
        ChannelKind::LineOfSight {
            angles: angles.to_vec(),
            spacing_over_wavelength,
        },
        vec![h],
        oversampling,
        symbol_period,
    )
}

/// `k` azimuths drawn uniformly in `[-max_angle, max_angle]` (radians), each
/// at least `min_sin_gap` apart in `sin θ` from all others.
pub fn gen_user_angles<R: Rng + ?Sized>(k: usize, max_angle: f64, min_sin_gap: f64, rng: &mut R) -> Result<Vec<f64>> {
    ensure!(k >= 1, Parameter, "need at least one user");
    ensure!(
        max_angle > 0.0 && max_angle < PI / 2.0,
        Parameter,
        "angular sector must lie inside (0, 90°)"
    );
    ensure!(min_sin_gap >= 0.0, Parameter, "separation must be nonnegative");
    ensure!(
        (k - 1) as f64 * min_sin_gap < 2.0 * max_angle.sin(),
        Parameter,
        "{k} users cannot be separated by {min_sin_gap} in sin(angle)"
    );
    let mut angles: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while angles.len() < k {
        attempts += 1;
        ensure!(attempts < 1_000_000, Numerical, "could not place {k} separated users");
        let a = rng.gen_range(-max_angle..=max_angle);
        if angles.iter().all(|b| (a.sin() - b.sin()).abs() >= min_sin_gap) {
            angles.push(a);
        }
    }
    Ok(angles)
}

/// i.i.d. Rayleigh channel with `taps` coefficients per link, each CN(0, 1/taps).
pub fn gen_rayleigh<R: Rng + ?Sized>(
    antennas: usize,
    receivers: usize,
    taps: usize,
    oversampling: usize,
    symbol_period: f64,
    rng: &mut R,
) -> Result<ChannelModel> {
    ensure!(taps >= 1, Parameter, "need at least one tap");
    ensure!(antennas >= 1 && receivers >= 1, Parameter, "empty channel");
    let var = 1.0 / taps as f64;
    let h = (0..taps)
        .map(|_| DMatrix::from_fn(receivers, antennas, |_, _| complex_gaussian(rng, var)))
        .collect();
    ChannelModel::from_taps(ChannelKind::Rayleigh { taps }, h, oversampling, symbol_period)
}

/// How a victim receiver's channel is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum VictimKind {
    LineOfSight { angle: f64, spacing_over_wavelength: f64 },
    Rayleigh { taps: usize },
}

/// A single receiver whose fading is drawn from the caller's (victim) stream,
/// independent of the served users.
pub fn gen_victim<R: Rng + ?Sized>(
    kind: &VictimKind,
    antennas: usize,
    oversampling: usize,
    symbol_period: f64,
    rng: &mut R,
) -> Result<ChannelModel> {
    match kind {
        VictimKind::LineOfSight {
            angle,
            spacing_over_wavelength,
        } => gen_los(&[*angle], antennas, *spacing_over_wavelength, oversampling, symbol_period, rng),
        VictimKind::Rayleigh { taps } => gen_rayleigh(antennas, 1, *taps, oversampling, symbol_period, rng),
    }
}

/// Symbol-rate channel `H[ℓ] = (p ⋆ H ⋆ p*(-·))(ℓT)` for `ℓ` starting at
/// `first_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    taps: Vec<DMatrix<Complex64>>,
    first_lag: isize,
    symbol_period: f64,
}

impl DiscreteChannel {
    pub fn new(taps: Vec<DMatrix<Complex64>>, first_lag: isize, symbol_period: f64) -> Result<Self> {
        ensure!(!taps.is_empty(), Dimension, "discrete channel needs at least one tap");
        let shape = taps[0].shape();
        ensure!(
            taps.iter().all(|t| t.shape() == shape),
            Dimension,
            "discrete channel taps differ in shape"
        );
        Ok(DiscreteChannel {
            taps,
            first_lag,
            symbol_period,
        })
    }

    pub fn taps(&self) -> &[DMatrix<Complex64>] {
        &self.taps
    }

    pub fn first_lag(&self) -> isize {
        self.first_lag
    }

    pub fn last_lag(&self) -> isize {
        self.first_lag + self.taps.len() as isize - 1
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn users(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn antennas(&self) -> usize {
        self.taps[0].ncols()
    }

    /// `H[lag]`, zero outside the support.
    pub fn at(&self, lag: isize) -> DMatrix<Complex64> {
        let i = lag - self.first_lag;
        if i < 0 || i as usize >= self.taps.len() {
            DMatrix::zeros(self.users(), self.antennas())
        } else {
            self.taps[i as usize].clone()
        }
    }

    /// `Σ_ℓ ‖H[ℓ]‖²_F`.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_squared()).sum()
    }
}

pub fn discretize(ch: &ChannelModel, p: &Pulse) -> Result<DiscreteChannel> {
    ensure!(
        ch.oversampling == p.oversampling(),
        Grid,
        "channel oversampling {} differs from pulse oversampling {}",
        ch.oversampling,
        p.oversampling()
    );
    ensure!(
        ((ch.symbol_period - p.symbol_period()) / p.symbol_period()).abs() < 1e-12,
        Grid,
        "channel and pulse symbol periods differ"
    );
    let g = p.autocorrelation();
    let k = p.oversampling() as isize;
    let half = g.half() as isize;
    let delays = ch.taps.len() as isize;
    let first = (-half).div_euclid(k) + if (-half).rem_euclid(k) == 0 { 0 } else { 1 };
    let last = (delays - 1 + half).div_euclid(k);
    let (users, antennas) = ch.taps[0].shape();
    let taps = (first..=last)
        .map(|l| {
            let mut acc = DMatrix::zeros(users, antennas);
            for (i, h) in ch.taps.iter().enumerate() {
                let w = g.at(l * k - i as isize);
                if w != Complex64::default() {
                    acc.zip_apply(h, |a, v| *a += v * w);
                }
            }
            acc
        })
        .collect();
    DiscreteChannel::new(taps, first, ch.symbol_period)
}

/// `h̃(f) = Σ_i h_i e^{-j2π f i T/κ}` at each frequency, as `K × M` matrices.
pub fn freq_response(ch: &ChannelModel, freqs: &[f64]) -> Result<Vec<DMatrix<Complex64>>> {
    let nyquist = ch.oversampling as f64 / (2.0 * ch.symbol_period);
    ensure!(
        freqs.iter().all(|f| f.abs() <= nyquist * (1.0 + 1e-12)),
        Parameter,
        "frequency outside [-{nyquist}, {nyquist}]"
    );
    let dt = ch.symbol_period / ch.oversampling as f64;
    Ok(freqs
        .iter()
        .map(|&f| {
            let step = Complex64::from_polar(1.0, -2.0 * PI * f * dt);
            let mut phasor = Complex64::new(1.0, 0.0);
            let mut acc = DMatrix::zeros(ch.receivers(), ch.antennas());
            for h in &ch.taps {
                acc.zip_apply(h, |a, v| *a += v * phasor);
                phasor *= step;
            }
            acc
        })
        .collect())
}

/// Frequency response of receiver `receiver` on a centered FFT grid that
/// spans the full simulation bandwidth, as one `M`-vector per bin.
pub fn receiver_response_on_grid(
    ch: &ChannelModel,
    receiver: usize,
    grid: &FreqGrid,
) -> Result<Vec<DVector<Complex64>>> {
    let n = grid.len;
    let fs = ch.oversampling as f64 / ch.symbol_period;
    let expected = FreqGrid::centered(n, fs);
    ensure!(
        (expected.step - grid.step).abs() <= 1e-12 * fs && (expected.start - grid.start).abs() <= 1e-9 * fs,
        Grid,
        "grid is not the centered {n}-point FFT grid at rate {fs}"
    );
    ensure!(
        ch.taps.len() <= n,
        Grid,
        "{} channel taps exceed {n} bins",
        ch.taps.len()
    );
    let fft = FftPlanner::new().plan_fft_forward(n);
    let m = ch.antennas();
    let mut out = vec![DVector::zeros(m); n];
    let mut buf = vec![Complex64::default(); n];
    for a in 0..m {
        buf.iter_mut().for_each(|b| *b = Complex64::default());
        for (i, h) in ch.taps.iter().enumerate() {
            buf[i] = h[(receiver, a)];
        }
        fft.process(&mut buf);
        for (bin, v) in dsp::fftshift(&buf).into_iter().enumerate() {
            out[bin][a] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn drawn_user_angles_respect_sector_and_separation() {
        let gap = 1.0 / 50.0;
        let a = gen_user_angles(10, deg(60.0), gap, &mut stream(3, Stream::UserChannel, 1)).unwrap();
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|x| x.abs() <= deg(60.0)));
        for i in 0..10 {
            for j in 0..i {
                assert!((a[i].sin() - a[j].sin()).abs() >= gap);
            }
        }
        assert!(gen_user_angles(40, deg(10.0), 0.1, &mut stream(3, Stream::UserChannel, 1)).is_err());
    }

    #[test]
    fn broadside_steering_is_flat() {
        let sv = steering_vector(0.0, 16, HALF_WAVELENGTH);
        assert!(sv.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn thirty_degrees_advances_a_quarter_turn_per_element() {
        let mut rng = stream(7, Stream::UserChannel, 0);
        let ch = gen_los(&[deg(30.0)], 8, HALF_WAVELENGTH, 5, 1.0, &mut rng).unwrap();
        let h = &ch.taps()[0];
        for m in 1..8 {
            let step = h[(0, m)] / h[(0, m - 1)];
            assert!((step - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        }
        assert!(h.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn los_rejects_endfire() {
        let mut rng = stream(1, Stream::UserChannel, 0);
        assert!(gen_los(&[PI / 2.0], 4, 0.5, 5, 1.0, &mut rng).is_err());
    }

    #[test]
    fn single_tap_rayleigh_has_unit_power() {
        let mut rng = stream(3, Stream::UserChannel, 0);
        let n = 20_000;
        let ch = gen_rayleigh(n, 1, 1, 5, 1.0, &mut rng).unwrap();
        let mean = ch.link_energy().mean();
        // Exponential(1) sample mean: std 1/sqrt(n).
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn rayleigh_link_energy_is_unit_on_average() {
        let mut total = 0.0;
        let n = 1000;
        for r in 0..n {
            let mut rng = stream(11, Stream::UserChannel, r);
            let ch = gen_rayleigh(1, 1, 75, 5, 1.0, &mut rng).unwrap();
            total += ch.link_energy()[(0, 0)];
        }
        let mean = total / n as f64;
        // Each realization is Gamma(75, 1/75): std of the mean is 1/sqrt(75 n).
        assert!((0.97..=1.03).contains(&mean), "mean {mean}");
    }

    #[test]
    fn different_seeds_give_independent_channels() {
        let a = gen_rayleigh(10_000, 1, 1, 5, 1.0, &mut stream(1, Stream::UserChannel, 0)).unwrap();
        let b = gen_rayleigh(10_000, 1, 1, 5, 1.0, &mut stream(2, Stream::UserChannel, 0)).unwrap();
        let (ha, hb) = (&a.taps()[0], &b.taps()[0]);
        let cross: Complex64 = ha.iter().zip(hb.iter()).map(|(x, y)| x.conj() * y).sum();
        let na: f64 = ha.iter().map(|x| x.norm_sqr()).sum();
        let nb: f64 = hb.iter().map(|x| x.norm_sqr()).sum();
        assert!(cross.norm() / (na * nb).sqrt() < 0.05);
        let again = gen_rayleigh(10_000, 1, 1, 5, 1.0, &mut stream(1, Stream::UserChannel, 0)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn los_discretization_is_nyquist() {
        let p = Pulse::root_raised_cosine(0.22, 32, 5, 1.0).unwrap();
        let mut rng = stream(5, Stream::UserChannel, 0);
        let ch = gen_los(&[deg(-20.0), deg(40.0)], 6, HALF_WAVELENGTH, 5, 1.0, &mut rng).unwrap();
        let d = discretize(&ch, &p).unwrap();
        let h0 = d.at(0);
        assert!((h0.clone() - ch.taps()[0].clone()).norm() < 1e-6 * h0.norm());
        for l in d.first_lag()..=d.last_lag() {
            if l != 0 {
                assert!(d.at(l).norm() < 1e-3 * h0.norm(), "lag {l}");
            }
        }
    }

    #[test]
    fn zero_channel_discretizes_to_zero() {
        let p = Pulse::root_raised_cosine(0.22, 8, 4, 1.0).unwrap();
        let ch = ChannelModel::from_taps(ChannelKind::Rayleigh { taps: 3 }, vec![DMatrix::zeros(2, 3); 3], 4, 1.0).unwrap();
        let d = discretize(&ch, &p).unwrap();
        assert_eq!(d.energy(), 0.0);
        assert_eq!(d.first_lag(), -16);
        assert_eq!(d.last_lag(), 16);
    }

    #[test]
    fn discretization_checks_the_grid() {
        let p = Pulse::root_raised_cosine(0.22, 8, 4, 1.0).unwrap();
        let mut rng = stream(5, Stream::UserChannel, 0);
        let ch = gen_rayleigh(2, 1, 10, 5, 1.0, &mut rng).unwrap();
        assert!(discretize(&ch, &p).is_err());
    }

    #[test]
    fn single_delayed_tap_has_linear_phase() {
        let mut taps = vec![DMatrix::zeros(1, 1); 4];
        taps[3][(0, 0)] = Complex64::new(1.0, 0.0);
        let ch = ChannelModel::from_taps(ChannelKind::Rayleigh { taps: 4 }, taps, 5, 1.0).unwrap();
        let freqs = [-2.5, -1.0, 0.0, 0.3, 2.5];
        let resp = freq_response(&ch, &freqs).unwrap();
        for (f, h) in freqs.iter().zip(&resp) {
            let expected = Complex64::from_polar(1.0, -2.0 * PI * f * 3.0 / 5.0);
            assert!((h[(0, 0)] - expected).norm() < 1e-12);
        }
        assert!(freq_response(&ch, &[2.6]).is_err());
    }

    #[test]
    fn los_response_is_frequency_flat() {
        let mut rng = stream(9, Stream::UserChannel, 0);
        let ch = gen_los(&[deg(10.0)], 4, HALF_WAVELENGTH, 5, 1.0, &mut rng).unwrap();
        let resp = freq_response(&ch, &[-2.0, -0.4, 0.0, 1.7]).unwrap();
        for h in &resp {
            assert!((h.clone() - resp[0].clone()).norm() < 1e-12);
        }
    }

    #[test]
    fn grid_response_matches_direct_evaluation() {
        let mut rng = stream(4, Stream::UserChannel, 0);
        let ch = gen_rayleigh(3, 2, 15, 5, 1.0, &mut rng).unwrap();
        let grid = FreqGrid::centered(64, 5.0);
        let fast = receiver_response_on_grid(&ch, 1, &grid).unwrap();
        let slow = freq_response(&ch, &grid.freqs()).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            for m in 0..3 {
                assert!((a[m] - b[(1, m)]).norm() < 1e-12);
            }
        }
    }
}
