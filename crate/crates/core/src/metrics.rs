//! Band powers and ACLR, together with its multi-antenna generalization
//! and the radiation pattern.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{gen_victim, steering_vector, ChannelKind, VictimKind};
use crate::dsp::FreqGrid;
use crate::error::{ensure, Result};
use crate::rng::{stream, Stream};
use crate::spectral::{eigen_spectrum, received_psd, s_max_bins, s_tx, SpectralMatrix};
use crate::system::{receiver_response, Transmitter};

/// Lowest level reported in dB.
pub const DB_FLOOR: f64 = -120.0;

/// `10 log10(x)`, floored at [`DB_FLOOR`].
pub fn db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// The in-band and adjacent bands around a channel of width `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bands {
    pub bandwidth: f64,
}

impl Bands {
    pub fn new(bandwidth: f64) -> Result<Self> {
        ensure!(bandwidth > 0.0, Parameter, "bandwidth must be positive");
        Ok(Bands { bandwidth })
    }

    pub fn in_band(&self, grid: &FreqGrid) -> Result<std::ops::Range<usize>> {
        grid.band(-0.5 * self.bandwidth, 0.5 * self.bandwidth)
    }

    pub fn left(&self, grid: &FreqGrid) -> Result<std::ops::Range<usize>> {
        grid.band(-1.5 * self.bandwidth, -0.5 * self.bandwidth)
    }

    pub fn right(&self, grid: &FreqGrid) -> Result<std::ops::Range<usize>> {
        grid.band(0.5 * self.bandwidth, 1.5 * self.bandwidth)
    }

    /// Bins covering `[-3B/2, 3B/2)`.
    pub fn span(&self, grid: &FreqGrid) -> Result<std::ops::Range<usize>> {
        grid.band(-1.5 * self.bandwidth, 1.5 * self.bandwidth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPowers {
    pub p_ib: f64,
    pub p_ob_left: f64,
    pub p_ob_right: f64,
    pub p_ob: f64,
    pub bandwidth: f64,
}

impl BandPowers {
    fn new(p_ib: f64, left: f64, right: f64, bandwidth: f64) -> Self {
        BandPowers {
            p_ib,
            p_ob_left: left,
            p_ob_right: right,
            p_ob: left.max(right),
            bandwidth,
        }
    }

    /// `10 log10(P_ob / P_ib)`.
    pub fn aclr_db(&self) -> Result<f64> {
        ensure!(self.p_ib > 0.0, Numerical, "no in-band power");
        Ok(db(self.p_ob / self.p_ib))
    }
}

fn integrate(psd: &[f64], range: std::ops::Range<usize>, step: f64) -> f64 {
    psd[range].iter().sum::<f64>() * step
}

/// Midpoint-rule powers in the in-band and both adjacent bands.
pub fn band_powers(psd: &[f64], grid: &FreqGrid, bandwidth: f64) -> Result<BandPowers> {
    ensure!(psd.len() == grid.len, Grid, "{} values for {} bins", psd.len(), grid.len);
    let b = Bands::new(bandwidth)?;
    Ok(BandPowers::new(
        integrate(psd, b.in_band(grid)?, grid.step),
        integrate(psd, b.left(grid)?, grid.step),
        integrate(psd, b.right(grid)?, grid.step),
        bandwidth,
    ))
}

/// `10 log10(max(P_left, P_right) / P_ib)` in dB.
pub fn aclr(psd: &[f64], grid: &FreqGrid, bandwidth: f64) -> Result<f64> {
    band_powers(psd, grid, bandwidth)?.aclr_db()
}

/// `∫ S(f) df` over a bin range, as a full matrix.
pub fn band_matrix(s: &SpectralMatrix, range: std::ops::Range<usize>) -> DMatrix<Complex64> {
    let mut acc = DMatrix::<Complex64>::zeros(s.dim(), s.dim());
    for b in range {
        for j in 0..s.dim() {
            for i in 0..=j {
                acc[(i, j)] += s.entry(b, i, j);
            }
        }
    }
    for j in 0..s.dim() {
        for i in 0..j {
            acc[(j, i)] = acc[(i, j)].conj();
        }
    }
    acc * Complex64::new(s.bin_width(), 0.0)
}

/// `max` over both adjacent bands of `∫ S_max(f) df`.
pub fn p_ob_max(s: &SpectralMatrix, bandwidth: f64) -> Result<f64> {
    let b = Bands::new(bandwidth)?;
    let step = s.bin_width();
    let left: f64 = s_max_bins(s, b.left(s.grid())?)?.iter().sum::<f64>() * step;
    let right: f64 = s_max_bins(s, b.right(s.grid())?)?.iter().sum::<f64>() * step;
    Ok(left.max(right))
}

/// Adjacent-band power gain of the strongest direction,
/// `10 log10(M P_ob,max / P_ob,tx)`.
pub fn worst_case_band_gain(s: &SpectralMatrix, bandwidth: f64) -> Result<f64> {
    let tx = band_powers(&s_tx(s), s.grid(), bandwidth)?;
    ensure!(tx.p_ob > 0.0, Numerical, "no adjacent-band power");
    Ok(db(s.dim() as f64 * p_ob_max(s, bandwidth)? / tx.p_ob))
}

/// Band powers toward one probe direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternPoint {
    pub angle: f64,
    pub powers: BandPowers,
}

/// Band powers received by a line-of-sight victim at each probe angle
/// (radians), with unit pathloss.
pub fn radiation_pattern(tx: &Transmitter, s: &SpectralMatrix, angles: &[f64]) -> Result<Vec<PatternPoint>> {
    let spacing = match tx.channel().kind() {
        ChannelKind::LineOfSight {
            spacing_over_wavelength,
            ..
        } => *spacing_over_wavelength,
        ChannelKind::Rayleigh { .. } => {
            return Err(crate::Error::Unsupported(
                "radiation patterns need a line-of-sight scenario".into(),
            ))
        }
    };
    ensure!(s.dim() == tx.antennas(), Dimension, "spectrum and transmitter sizes differ");
    let b = Bands::new(tx.pulse().bandwidth())?;
    let grid = s.grid();
    let mats = [
        band_matrix(s, b.in_band(grid)?),
        band_matrix(s, b.left(grid)?),
        band_matrix(s, b.right(grid)?),
    ];
    let m = tx.antennas();
    Ok(angles
        .iter()
        .map(|&angle| {
            let a = steering_vector(angle, m, spacing);
            let q: Vec<f64> = mats.iter().map(|s| quad(s, &a)).collect();
            PatternPoint {
                angle,
                powers: BandPowers::new(q[0], q[1], q[2], b.bandwidth),
            }
        })
        .collect())
}

fn quad(s: &DMatrix<Complex64>, a: &DVector<Complex64>) -> f64 {
    (a.adjoint() * s * a)[(0, 0)].re.max(0.0)
}

/// Empirical CCDF of the eigenvalues at one frequency, in dB relative to
/// the mean eigenvalue `S_tx(f)/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCcdf {
    pub freq: f64,
    /// Eigenvalues relative to their mean, in dB, descending.
    pub levels_db: Vec<f64>,
    /// Mean eigenvalue `S_tx(f)/M`.
    pub mean: f64,
}

impl EigenCcdf {
    /// Fraction of eigenvalues at or above `level_db`.
    pub fn fraction_at_least(&self, level_db: f64) -> f64 {
        let n = self.levels_db.iter().filter(|&&l| l >= level_db).count();
        n as f64 / self.levels_db.len() as f64
    }

    /// `(level_dB, fraction ≥ level)` steps of the empirical CCDF.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.levels_db.len() as f64;
        self.levels_db
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, (i + 1) as f64 / n))
            .collect()
    }
}

pub fn eigen_ccdf(s: &SpectralMatrix, freqs: &[f64]) -> Result<Vec<EigenCcdf>> {
    freqs
        .iter()
        .map(|&f| {
            let ev = eigen_spectrum(s, f)?;
            let mean = ev.iter().sum::<f64>() / ev.len() as f64;
            ensure!(mean > 0.0, Numerical, "zero spectrum at f = {f}");
            Ok(EigenCcdf {
                freq: s.grid().freq(s.grid().nearest(f)),
                levels_db: ev.iter().map(|e| db(e / mean)).collect(),
                mean,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AclrReport {
    /// `ACLR_m` of each antenna, from the realization-averaged PSDs (dB).
    pub aclr_per_antenna: Vec<f64>,
    /// Victim-averaged received-PSD route (dB).
    pub mimo_aclr: f64,
    /// Route through the averaged transmitted PSD (dB).
    pub mimo_aclr_tx: f64,
    /// Single-antenna, flat-channel reference at the same drive (dB).
    pub aclr_siso_equivalent: f64,
    pub n_realizations: usize,
    pub n_victims: usize,
}

impl AclrReport {
    pub fn mean_per_antenna(&self) -> f64 {
        self.aclr_per_antenna.iter().sum::<f64>() / self.aclr_per_antenna.len() as f64
    }
}

/// Victim description for the MIMO-ACLR expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct VictimSpec {
    pub kind: VictimKind,
    pub pathloss: f64,
}

/// MIMO-ACLR over `n_realizations` transmitters built by `make_tx` and
/// `n_victims` independent victims per realization drawn from the victim
/// stream of `seed`. `make_single` builds the single-antenna reference for
/// the same realization index; its ACLR uses the realization-averaged PSD.
/// The adjacent-band maximum is taken after averaging.
pub fn mimo_aclr<F, G>(
    make_tx: F,
    make_single: G,
    n_realizations: usize,
    victim: &VictimSpec,
    n_victims: usize,
    seed: u64,
    nfft: usize,
) -> Result<AclrReport>
where
    F: Fn(usize) -> Result<Transmitter>,
    G: Fn(usize) -> Result<Transmitter>,
{
    ensure!(n_realizations >= 1 && n_victims >= 1, Parameter, "need realizations and victims");
    ensure!(victim.pathloss > 0.0, Parameter, "victim pathloss must be positive");
    let mut acc: Option<Accumulator> = None;
    let mut single: Option<Vec<f64>> = None;
    for r in 0..n_realizations {
        let tx = make_tx(r)?;
        let bw = tx.pulse().bandwidth();
        let full = tx.grid(nfft);
        let span = Bands::new(bw)?.span(&full)?;
        let s = tx.output_psd_bins(nfft, span.clone())?;
        let a = acc.get_or_insert_with(|| Accumulator::new(*s.grid(), s.dim(), bw));
        let grid = *s.grid();
        for v in 0..n_victims {
            let mut rng = stream(seed, Stream::Victim, (r * n_victims + v) as u64);
            let ch = gen_victim(
                &victim.kind,
                tx.antennas(),
                tx.pulse().oversampling(),
                tx.pulse().symbol_period(),
                &mut rng,
            )?;
            let h = receiver_response(&ch, 0, &grid)?;
            let rx = received_psd(&s, &h, victim.pathloss)?;
            a.victim.iter_mut().zip(&rx).for_each(|(x, y)| *x += y);
        }
        for (m, p) in a.antenna.iter_mut().enumerate() {
            for (b, x) in p.iter_mut().enumerate() {
                *x += s.entry(b, m, m).re;
            }
        }
        let one = make_single(r)?;
        ensure!(one.antennas() == 1, Parameter, "reference transmitter must have one antenna");
        let sp = one.antenna_psds(nfft)?;
        let sg = single.get_or_insert_with(|| vec![0.0; span.len()]);
        sg.iter_mut().zip(&sp.psd[0][span]).for_each(|(x, y)| *x += y);
    }
    let a = acc.expect("at least one realization");
    let total: Vec<f64> = (0..a.grid.len).map(|b| a.antenna.iter().map(|p| p[b]).sum()).collect();
    Ok(AclrReport {
        aclr_per_antenna: a
            .antenna
            .iter()
            .map(|p| aclr(p, &a.grid, a.bandwidth))
            .collect::<Result<_>>()?,
        mimo_aclr: aclr(&a.victim, &a.grid, a.bandwidth)?,
        mimo_aclr_tx: aclr(&total, &a.grid, a.bandwidth)?,
        aclr_siso_equivalent: aclr(&single.expect("at least one realization"), &a.grid, a.bandwidth)?,
        n_realizations,
        n_victims,
    })
}

struct Accumulator {
    grid: FreqGrid,
    bandwidth: f64,
    victim: Vec<f64>,
    antenna: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(grid: FreqGrid, m: usize, bandwidth: f64) -> Self {
        Accumulator {
            grid,
            bandwidth,
            victim: vec![0.0; grid.len],
            antenna: vec![vec![0.0; grid.len]; m],
        }
    }
}

/// One row of a power-allocation / pathloss sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub mimo_aclr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `max - min` of the MIMO-ACLR over the rows (dB).
    pub spread: f64,
}

/// Reruns [`mimo_aclr`] for each labelled configuration.
pub fn c1_sweep<F, G>(
    configs: &[(String, F)],
    make_single: G,
    n_realizations: usize,
    victim: &VictimSpec,
    n_victims: usize,
    seed: u64,
    nfft: usize,
) -> Result<SweepReport>
where
    F: Fn(usize) -> Result<Transmitter>,
    G: Fn(usize) -> Result<Transmitter>,
{
    ensure!(!configs.is_empty(), Parameter, "sweep needs at least one configuration");
    let rows = configs
        .iter()
        .map(|(label, make)| {
            let rep = mimo_aclr(make, &make_single, n_realizations, victim, n_victims, seed, nfft)?;
            Ok(SweepRow {
                label: label.clone(),
                mimo_aclr: rep.mimo_aclr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max = rows.iter().map(|r| r.mimo_aclr).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.mimo_aclr).fold(f64::INFINITY, f64::min);
    Ok(SweepReport { rows, spread: max - min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_los, gen_rayleigh, HALF_WAVELENGTH};
    use crate::pa::PaModel;
    use crate::precode::PowerAllocation;
    use crate::signal::Pulse;
    use crate::system::DriveLevel;

    fn grid() -> FreqGrid {
        FreqGrid::centered(1000, 5.0)
    }

    #[test]
    fn flat_psd_band_powers() {
        let g = grid();
        let bw = 1.0;
        let bp = band_powers(&vec![1.0; g.len], &g, bw).unwrap();
        assert!((bp.p_ib - bw).abs() < 1e-9);
        assert!((bp.p_ob - bw).abs() < 1e-9);
        assert!(aclr(&vec![1.0; g.len], &g, bw).unwrap().abs() < 1e-9);
    }

    #[test]
    fn band_limited_psd_has_no_leakage() {
        let g = grid();
        let psd: Vec<f64> = g.freqs().iter().map(|f| if f.abs() < 0.5 { 1.0 } else { 0.0 }).collect();
        let bp = band_powers(&psd, &g, 1.0).unwrap();
        assert_eq!(bp.p_ob, 0.0);
        assert_eq!(bp.aclr_db().unwrap(), DB_FLOOR);
    }

    #[test]
    fn max_rule_picks_the_larger_side() {
        let g = grid();
        let psd: Vec<f64> = g
            .freqs()
            .iter()
            .map(|&f| if (-1.5..-0.5).contains(&f) { 2.0 } else if (0.5..1.5).contains(&f) { 3.0 } else { 1.0 })
            .collect();
        let bp = band_powers(&psd, &g, 1.0).unwrap();
        assert!((bp.p_ob_left - 2.0).abs() < 1e-9);
        assert!((bp.p_ob_right - 3.0).abs() < 1e-9);
        assert_eq!(bp.p_ob, bp.p_ob_right);
    }

    #[test]
    fn aclr_is_scale_invariant() {
        let g = grid();
        let psd: Vec<f64> = g.freqs().iter().map(|f| (-f * f).exp() + 1e-3).collect();
        let a = aclr(&psd, &g, 1.0).unwrap();
        let scaled: Vec<f64> = psd.iter().map(|p| p * 7.3).collect();
        assert!((a - aclr(&scaled, &g, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn insufficient_span_is_an_error() {
        let g = FreqGrid::centered(100, 2.0);
        assert!(band_powers(&vec![1.0; 100], &g, 1.0).is_err());
    }

    #[test]
    fn isotropic_and_rank_one_p_ob_max() {
        let g = FreqGrid::centered(64, 5.0);
        let m = 4;
        let iso = SpectralMatrix::from_matrices(g, &vec![DMatrix::identity(m, m); 64]).unwrap();
        let ptx = band_powers(&s_tx(&iso), &g, 1.0).unwrap().p_ob;
        assert!((p_ob_max(&iso, 1.0).unwrap() - ptx / m as f64).abs() < 1e-9);

        let v = DVector::from_fn(m, |i, _| Complex64::from_polar(1.0, i as f64));
        let r1 = SpectralMatrix::from_matrices(g, &vec![&v * v.adjoint(); 64]).unwrap();
        let ptx = band_powers(&s_tx(&r1), &g, 1.0).unwrap().p_ob;
        assert!((p_ob_max(&r1, 1.0).unwrap() - ptx).abs() < 1e-9);
        assert!((worst_case_band_gain(&r1, 1.0).unwrap() - db(m as f64)).abs() < 1e-9);
    }

    #[test]
    fn ccdf_of_equal_eigenvalues_is_a_step() {
        let g = FreqGrid::centered(8, 5.0);
        let s = SpectralMatrix::from_matrices(g, &vec![DMatrix::identity(5, 5); 8]).unwrap();
        let c = &eigen_ccdf(&s, &[0.0]).unwrap()[0];
        assert!(c.levels_db.iter().all(|l| l.abs() < 1e-9));
        assert_eq!(c.fraction_at_least(-1e-6), 1.0);
        assert_eq!(c.fraction_at_least(0.1), 0.0);
    }

    fn small_pulse() -> Pulse {
        Pulse::root_raised_cosine(0.22, 8, 4, 1.0).unwrap()
    }

    #[test]
    fn pattern_rejects_rayleigh_and_peaks_near_users() {
        let p = small_pulse();
        let ch = gen_rayleigh(4, 1, 3, 4, 1.0, &mut stream(1, Stream::UserChannel, 0)).unwrap();
        let tx = Transmitter::new(p.clone(), ch, PowerAllocation::equal(1), PaModel::reference(), DriveLevel::default())
            .unwrap();
        let s = tx.output_psd(512).unwrap();
        assert!(radiation_pattern(&tx, &s, &[0.0]).is_err());

        let user = 20f64.to_radians();
        let ch = gen_los(&[user], 16, HALF_WAVELENGTH, 4, 1.0, &mut stream(1, Stream::UserChannel, 0)).unwrap();
        let tx = Transmitter::new(p, ch, PowerAllocation::equal(1), PaModel::reference(), DriveLevel::default())
            .unwrap();
        let s = tx.output_psd(512).unwrap();
        let angles: Vec<f64> = (-80..=80).map(|d| (d as f64).to_radians()).collect();
        let pat = radiation_pattern(&tx, &s, &angles).unwrap();
        let best = pat.iter().max_by(|a, b| a.powers.p_ob.total_cmp(&b.powers.p_ob)).unwrap();
        assert!((best.angle - user).abs() < 1.5f64.to_radians());
        let bound = p_ob_max(&s, p_bw()).unwrap() * 16.0;
        assert!(pat.iter().all(|q| q.powers.p_ob <= bound * (1.0 + 1e-9)));
    }

    fn p_bw() -> f64 {
        small_pulse().bandwidth()
    }

    #[test]
    fn mimo_aclr_routes_and_pathloss_independence() {
        let make = |r: usize| {
            let ch = gen_rayleigh(4, 2, 4, 4, 1.0, &mut stream(3, Stream::UserChannel, r as u64))?;
            Transmitter::new(small_pulse(), ch, PowerAllocation::equal(2), PaModel::reference(), DriveLevel::default())
        };
        let v = VictimSpec {
            kind: VictimKind::Rayleigh { taps: 4 },
            pathloss: 1.0,
        };
        let single = |r: usize| {
            let ch = gen_rayleigh(1, 2, 4, 4, 1.0, &mut stream(3, Stream::UserChannel, 100 + r as u64))?;
            Transmitter::new(small_pulse(), ch, PowerAllocation::equal(2), PaModel::reference(), DriveLevel::default())
        };
        let a = mimo_aclr(make, single, 2, &v, 3, 9, 512).unwrap();
        let v2 = VictimSpec { pathloss: 2.0, ..v };
        let b = mimo_aclr(make, single, 2, &v2, 3, 9, 512).unwrap();
        assert!((a.mimo_aclr - b.mimo_aclr).abs() < 1e-9);
        assert_eq!(a.aclr_per_antenna.len(), 4);
        assert!(a.mimo_aclr < -10.0 && a.mimo_aclr_tx < -10.0);
        assert!(a.aclr_siso_equivalent < -10.0);
    }

    #[test]
    fn single_configuration_sweep_has_zero_spread() {
        let make = |r: usize| {
            let ch = gen_rayleigh(1, 1, 2, 4, 1.0, &mut stream(4, Stream::UserChannel, r as u64))?;
            Transmitter::new(small_pulse(), ch, PowerAllocation::equal(1), PaModel::reference(), DriveLevel::default())
        };
        let v = VictimSpec {
            kind: VictimKind::Rayleigh { taps: 2 },
            pathloss: 1.0,
        };
        let rep = c1_sweep(&[("uniform".to_string(), make)], make, 1, &v, 2, 1, 512).unwrap();
        assert_eq!(rep.spread, 0.0);
    }
}
