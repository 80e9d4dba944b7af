//! Experiment runners: the realization sweeps behind the spectra, patterns
//! and eigenvalue distributions, and the analytical-versus-simulation gates.
//! Results are plain data; file emission lives in the command-line tool.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::gen_victim;
use crate::dsp::FreqGrid;
use crate::error::{ensure, Result};
use crate::mc::{self, empirical_corr, moment_oracle, GaussianFir, McConfig};
use crate::metrics::{self, aclr, band_powers, db, Bands, EigenCcdf};
use crate::pa::{amplify, calibrate_1db, gaussian_moment, propagate_corr, OperatingPoint, PaModel, ScalingMode};
use crate::rng::{stream, Stream};
use crate::scenario::{ChannelKindName, Scenario};
use crate::spectral::{eigenvalues, received_psd, s_max, s_tx, SpectralMatrix};
use crate::system::{receiver_response, Transmitter};

/// Bins of the centered `nfft` grid covering `[-3B/2, 3B/2]`.
pub fn span_bins(tx: &Transmitter, nfft: usize) -> Result<std::ops::Range<usize>> {
    let full = tx.grid(nfft);
    let span = Bands::new(tx.pulse().bandwidth())?.span(&full)?;
    Ok(span.start..(span.end + 1).min(nfft))
}

/// Per-realization outcomes of a [`Study`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationRecord {
    pub weakest_user: usize,
    /// `10 log10(∫_ib S_k / ∫_ib S_tx)` of the weakest served user (dB).
    pub weakest_gain_db: f64,
    /// `10 log10(M P_ob,max / P_ob,tx)` (dB).
    pub worst_case_band_gain_db: f64,
    /// Mean over the same adjacent band of `10 log10(M S_max / S_tx)` (dB).
    pub worst_case_bin_gain_db: f64,
    /// Eigenvalues at each probe frequency, descending.
    pub eigenvalues: Vec<Vec<f64>>,
    /// `S_tx` at each probe frequency.
    pub s_tx_at: Vec<f64>,
    /// Victim-bins where `S_θ > β ‖h̃‖² S_max` beyond round-off.
    pub bound_violations: usize,
    pub bound_checks: usize,
    /// Failure message of the Hermitian / PSD check, if any.
    pub invariant_error: Option<String>,
}

/// Realization-averaged spectra of a scenario over `[-3B/2, 3B/2]`.
#[derive(Debug, Clone)]
pub struct Study {
    pub grid: FreqGrid,
    pub bandwidth: f64,
    pub antennas: usize,
    pub users: usize,
    pub s_tx: Vec<f64>,
    pub s_max: Vec<f64>,
    /// Received PSD of each realization's weakest user, averaged.
    pub weakest_user: Vec<f64>,
    /// One random victim of the first realization.
    pub random_victim: Vec<f64>,
    /// Mean received PSD over all victims and realizations.
    pub victim_mean: Vec<f64>,
    pub antenna: Vec<Vec<f64>>,
    /// The same scenario with one antenna, averaged over realizations.
    pub single_antenna: Vec<f64>,
    /// Probe frequencies snapped to the grid.
    pub eigen_freqs: Vec<f64>,
    pub records: Vec<RealizationRecord>,
}

impl Study {
    fn mean(values: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = values.collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn mean_weakest_gain_db(&self) -> f64 {
        Self::mean(self.records.iter().map(|r| r.weakest_gain_db))
    }

    pub fn mean_worst_case_band_gain_db(&self) -> f64 {
        Self::mean(self.records.iter().map(|r| r.worst_case_band_gain_db))
    }

    pub fn mean_worst_case_bin_gain_db(&self) -> f64 {
        Self::mean(self.records.iter().map(|r| r.worst_case_bin_gain_db))
    }

    /// ACLR through the victim-averaged received PSD.
    pub fn mimo_aclr(&self) -> Result<f64> {
        aclr(&self.victim_mean, &self.grid, self.bandwidth)
    }

    /// ACLR through the averaged transmitted PSD.
    pub fn mimo_aclr_tx(&self) -> Result<f64> {
        aclr(&self.s_tx, &self.grid, self.bandwidth)
    }

    pub fn aclr_per_antenna(&self) -> Result<Vec<f64>> {
        self.antenna.iter().map(|p| aclr(p, &self.grid, self.bandwidth)).collect()
    }

    pub fn mean_aclr_per_antenna(&self) -> Result<f64> {
        Ok(Self::mean(self.aclr_per_antenna()?.into_iter()))
    }

    pub fn single_antenna_aclr(&self) -> Result<f64> {
        aclr(&self.single_antenna, &self.grid, self.bandwidth)
    }

    /// Eigenvalue CCDF at probe frequency `i`, pooled over realizations,
    /// each eigenvalue relative to its realization's mean `S_tx / M`.
    pub fn ccdf(&self, i: usize) -> EigenCcdf {
        let mut levels = Vec::new();
        let mut mean = 0.0;
        for r in &self.records {
            let avg = r.s_tx_at[i] / self.antennas as f64;
            mean += avg;
            levels.extend(r.eigenvalues[i].iter().map(|e| db(e / avg)));
        }
        levels.sort_by(|a, b| b.total_cmp(a));
        EigenCcdf {
            freq: self.eigen_freqs[i],
            levels_db: levels,
            mean: mean / self.records.len() as f64,
        }
    }

    pub fn bound_violations(&self) -> usize {
        self.records.iter().map(|r| r.bound_violations).sum()
    }

    pub fn bound_checks(&self) -> usize {
        self.records.iter().map(|r| r.bound_checks).sum()
    }
}

/// Runs every realization of `sc` and collects the spectra and statistics
/// used by the figures and the structural checks.
/// `eigen_freqs` are absolute frequencies (units of 1/T).
pub fn run_study(sc: &Scenario, eigen_freqs: &[f64]) -> Result<Study> {
    sc.validate()?;
    let nfft = sc.nfft;
    let mut study: Option<Study> = None;
    for r in 0..sc.realizations {
        let tx = sc.transmitter(r)?;
        let bins = span_bins(&tx, nfft)?;
        let s = tx.output_psd_bins(nfft, bins.clone())?;
        let st = study.get_or_insert_with(|| {
            let grid = *s.grid();
            let zeros = vec![0.0; grid.len];
            Study {
                grid,
                bandwidth: tx.pulse().bandwidth(),
                antennas: tx.antennas(),
                users: sc.users,
                s_tx: zeros.clone(),
                s_max: zeros.clone(),
                weakest_user: zeros.clone(),
                random_victim: zeros.clone(),
                victim_mean: zeros.clone(),
                antenna: vec![zeros.clone(); tx.antennas()],
                single_antenna: zeros,
                eigen_freqs: eigen_freqs.iter().map(|&f| grid.freq(grid.nearest(f))).collect(),
                records: Vec::new(),
            }
        });
        let record = realization(sc, r, &tx, &s, st)?;
        let one = sc.single_antenna_transmitter(r)?;
        let sp = one.antenna_psds(nfft)?;
        add(&mut st.single_antenna, &sp.psd[0][bins]);
        st.records.push(record);
    }
    let mut st = study.expect("at least one realization");
    let n = sc.realizations as f64;
    let nv = (sc.realizations * sc.victims) as f64;
    for v in [&mut st.s_tx, &mut st.s_max, &mut st.weakest_user, &mut st.single_antenna] {
        v.iter_mut().for_each(|x| *x /= n);
    }
    st.victim_mean.iter_mut().for_each(|x| *x /= nv);
    st.antenna.iter_mut().flatten().for_each(|x| *x /= n);
    Ok(st)
}

fn add(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

fn realization(sc: &Scenario, r: usize, tx: &Transmitter, s: &SpectralMatrix, st: &mut Study) -> Result<RealizationRecord> {
    let grid = *s.grid();
    let bands = Bands::new(st.bandwidth)?;
    let ib = bands.in_band(&grid)?;
    let m = tx.antennas();
    let stx = s_tx(s);
    let smax = s_max(s)?;
    add(&mut st.s_tx, &stx);
    add(&mut st.s_max, &smax);
    for (i, p) in st.antenna.iter_mut().enumerate() {
        p.iter_mut().enumerate().for_each(|(b, x)| *x += s.entry(b, i, i).re);
    }

    let p_ib_tx: f64 = stx[ib.clone()].iter().sum();
    let mut weakest = (0, f64::INFINITY, Vec::new());
    for k in 0..sc.users {
        let h = tx.user_response(k, &grid)?;
        let rx = received_psd(s, &h, tx.channel().pathloss()[k])?;
        let gain = db(rx[ib.clone()].iter().sum::<f64>() / p_ib_tx);
        if gain < weakest.1 {
            weakest = (k, gain, rx);
        }
    }
    add(&mut st.weakest_user, &weakest.2);

    let victim = sc.victim_spec();
    let mut violations = 0;
    let mut checks = 0;
    for v in 0..sc.victims {
        let mut rng = stream(sc.seed, Stream::Victim, (r * sc.victims + v) as u64);
        let ch = gen_victim(&victim.kind, m, tx.pulse().oversampling(), tx.pulse().symbol_period(), &mut rng)?;
        let h = receiver_response(&ch, 0, &grid)?;
        let rx = received_psd(s, &h, victim.pathloss)?;
        for (b, hb) in h.iter().enumerate() {
            let bound = victim.pathloss * hb.norm_squared() * smax[b];
            checks += 1;
            if rx[b] > bound * (1.0 + 1e-9) + 1e-12 * stx[b] {
                violations += 1;
            }
        }
        if r == 0 && v == 0 {
            st.random_victim = rx.clone();
        }
        add(&mut st.victim_mean, &rx);
    }

    let left = bands.left(&grid)?;
    let right = bands.right(&grid)?;
    let sum = |v: &[f64], rg: &std::ops::Range<usize>| v[rg.clone()].iter().sum::<f64>();
    let side = if sum(&smax, &left) >= sum(&smax, &right) { left } else { right };
    let p_ob_tx = band_powers(&stx, &grid, st.bandwidth)?.p_ob;
    ensure!(p_ob_tx > 0.0, Numerical, "no adjacent-band power");
    let p_ob_max = sum(&smax, &side) * grid.step;
    let bin_gains: Vec<f64> = side.clone().map(|b| db(m as f64 * smax[b] / stx[b])).collect();

    let probe: Vec<usize> = st.eigen_freqs.iter().map(|&f| grid.nearest(f)).collect();
    Ok(RealizationRecord {
        weakest_user: weakest.0,
        weakest_gain_db: weakest.1,
        worst_case_band_gain_db: db(m as f64 * p_ob_max / p_ob_tx),
        worst_case_bin_gain_db: bin_gains.iter().sum::<f64>() / bin_gains.len() as f64,
        eigenvalues: probe.iter().map(|&b| eigenvalues(s, b)).collect::<Result<_>>()?,
        s_tx_at: probe.iter().map(|&b| stx[b]).collect(),
        bound_violations: violations,
        bound_checks: checks,
        invariant_error: s.check_invariants().err().map(|e| e.to_string()),
    })
}

/// Band powers toward one probe direction, relative to the transmitted
/// band powers (dB).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRecord {
    pub user_angles_deg: Vec<f64>,
    pub p_ib_db: Vec<f64>,
    pub p_ob_db: Vec<f64>,
    pub peak_db: f64,
    pub peak_angle_deg: f64,
    /// Distance from the adjacent-band peak to the nearest user (degrees).
    pub peak_offset_deg: f64,
    /// In-band gain toward each user (dB).
    pub user_in_band_db: Vec<f64>,
    /// `10 log10(M P_ob,max / P_ob,tx)` (dB).
    pub band_gain_db: f64,
}

#[derive(Debug, Clone)]
pub struct PatternStudy {
    pub angles_deg: Vec<f64>,
    pub records: Vec<PatternRecord>,
}

impl PatternStudy {
    pub fn mean_peak_db(&self) -> f64 {
        self.records.iter().map(|r| r.peak_db).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_band_gain_db(&self) -> f64 {
        self.records.iter().map(|r| r.band_gain_db).sum::<f64>() / self.records.len() as f64
    }

    pub fn max_peak_offset_deg(&self) -> f64 {
        self.records.iter().map(|r| r.peak_offset_deg).fold(0.0, f64::max)
    }
}

/// The probe grid `-90°, -90° + step, ..., 90°`.
pub fn sweep_angles_deg(step: f64) -> Vec<f64> {
    let n = (180.0 / step).round() as usize;
    (0..=n).map(|i| -90.0 + i as f64 * step).collect()
}

/// Radiation patterns of every realization of a line-of-sight scenario.
pub fn run_pattern_study(sc: &Scenario, angles_deg: &[f64]) -> Result<PatternStudy> {
    sc.validate()?;
    ensure!(
        sc.channel.kind == ChannelKindName::Los,
        Unsupported,
        "radiation patterns need a line-of-sight scenario"
    );
    ensure!(!angles_deg.is_empty(), Parameter, "empty angular sweep");
    let rad: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let mut records = Vec::with_capacity(sc.realizations);
    for r in 0..sc.realizations {
        let tx = sc.transmitter(r)?;
        let s = tx.output_psd_bins(sc.nfft, span_bins(&tx, sc.nfft)?)?;
        let bw = tx.pulse().bandwidth();
        let total = band_powers(&s_tx(&s), s.grid(), bw)?;
        let pattern = metrics::radiation_pattern(&tx, &s, &rad)?;
        let p_ib_db: Vec<f64> = pattern.iter().map(|p| db(p.powers.p_ib / total.p_ib)).collect();
        let p_ob_db: Vec<f64> = pattern.iter().map(|p| db(p.powers.p_ob / total.p_ob)).collect();
        let (ipk, &peak_db) = p_ob_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty sweep");
        let users: Vec<f64> = sc.user_angles(r)?.iter().map(|a| a.to_degrees()).collect();
        let peak_angle_deg = angles_deg[ipk];
        let peak_offset_deg = users
            .iter()
            .map(|u| (u - peak_angle_deg).abs())
            .fold(f64::INFINITY, f64::min);
        let at_users = metrics::radiation_pattern(&tx, &s, &users.iter().map(|u| u.to_radians()).collect::<Vec<_>>())?;
        records.push(PatternRecord {
            user_in_band_db: at_users.iter().map(|p| db(p.powers.p_ib / total.p_ib)).collect(),
            user_angles_deg: users,
            p_ib_db,
            p_ob_db,
            peak_db,
            peak_angle_deg,
            peak_offset_deg,
            band_gain_db: metrics::worst_case_band_gain(&s, bw)?,
        });
    }
    Ok(PatternStudy {
        angles_deg: angles_deg.to_vec(),
        records,
    })
}

/// One pass/fail check with its measured deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Gate {
            name: name.into(),
            measured,
            limit,
            pass: measured <= limit,
        }
    }
}

/// Largest relative error `|oracle - closed form| / |closed form|` of the
/// three moment kernels, at zero lag on one antenna (where the sixth-order
/// kernel is `6σ⁶`) and for a strongly correlated antenna pair.
pub fn moment_gate(n_samples: usize, seed: u64) -> Result<Gate> {
    let cases = [
        (Complex64::new(1.3, 0.0), 1.3, 1.3),
        (Complex64::new(0.72, 0.54), 1.0, 1.0),
    ];
    let mut worst: f64 = 0.0;
    for (c, &(r, va, vb)) in cases.iter().enumerate() {
        for (p, pp) in [(1, 1), (1, 2), (2, 2)] {
            let exact = gaussian_moment(r, va, vb, p, pp)?;
            let est = moment_oracle(r, va, vb, p, pp, n_samples, seed.wrapping_add(c as u64))?;
            worst = worst.max((est - exact).norm() / exact.norm());
        }
    }
    Ok(Gate::at_most("moment formulas vs sampling oracle (relative)", worst, 0.01))
}

/// The two-antenna stationary Gaussian source used by [`toy_corr_gate`].
pub fn toy_source() -> GaussianFir {
    let c = Complex64::new;
    GaussianFir::new(vec![
        DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.5, 0.2), c(0.8, 0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(0.0, 0.6), c(0.3, 0.0), c(0.0, 0.0), c(-0.4, 0.1)]),
        DMatrix::from_row_slice(2, 2, &[c(0.2, -0.1), c(0.0, 0.0), c(0.1, 0.3), c(0.0, 0.0)]),
    ])
    .expect("valid taps")
}

/// Largest per-entry deviation between `propagate_corr` under `analytic`
/// and the sample correlation of the source amplified by `simulated`,
/// both at the 1-dB point of `analytic` (unit drive if it never compresses). Entries are normalized by
/// `sqrt(R_ii(0) R_jj(0))` of the analytical output.
pub fn toy_corr_gate(analytic: &PaModel, simulated: &PaModel, n_samples: usize, seed: u64) -> Result<Gate> {
    let src = toy_source();
    let rxx = src.corr();
    let p_in: Vec<f64> = (0..2).map(|i| rxx.at(0)[(i, i)].re).collect();
    let op = match calibrate_1db(analytic, &p_in, ScalingMode::Global) {
        Ok(op) => op,
        Err(crate::Error::Calibration(_)) => OperatingPoint::unity(2),
        Err(e) => return Err(e),
    };
    let ryy = propagate_corr(&rxx, analytic, &op)?;
    let x = src.simulate(n_samples, seed)?;
    let scaled: Vec<Vec<Complex64>> = x
        .samples()
        .iter()
        .enumerate()
        .map(|(m, s)| s.iter().map(|v| v * op.scale(m)).collect())
        .collect();
    let y = amplify(&crate::signal::SampledSignal::new(scaled, 1.0)?, simulated)?;
    let emp = empirical_corr(&y, rxx.max_lag())?;
    let mut worst: f64 = 0.0;
    for lag in rxx.lags() {
        for i in 0..2 {
            for j in 0..2 {
                let norm = (ryy.at(0)[(i, i)].re * ryy.at(0)[(j, j)].re).sqrt();
                worst = worst.max((emp.at(lag)[(i, j)] - ryy.at(lag)[(i, j)]).norm() / norm);
            }
        }
    }
    Ok(Gate::at_most("two-antenna output correlation vs simulation (per entry)", worst, 0.01))
}

/// Analytical `S_tx` against the Welch trace PSD of a simulated waveform.
#[derive(Debug, Clone)]
pub struct SpectrumComparison {
    pub grid: FreqGrid,
    pub analytic: Vec<f64>,
    pub simulated: Vec<f64>,
    /// Bins compared: `[-3B/2, 3B/2]` without the bins nearest `±B/2`
    /// and `±3B/2`.
    pub compared: Vec<usize>,
    pub max_abs_dev_db: f64,
    pub aclr_analytic: f64,
    pub aclr_simulated: f64,
}

pub fn compare_spectra(tx: &Transmitter, mc: &McConfig) -> Result<SpectrumComparison> {
    let welch = mc::welch_antenna_psds(tx, mc)?;
    let grid = welch.grid;
    let mut q = 1;
    while grid.len * q < tx.min_nfft() {
        q *= 2;
    }
    let fine = tx.antenna_psds(grid.len * q)?;
    let a: Vec<f64> = fine.total().into_iter().step_by(q).collect();
    ensure!((fine.grid.start - grid.start).abs() <= 1e-12 * grid.step * grid.len as f64, Grid, "Welch and analytical grids differ");
    let w = welch.total();
    let bw = tx.pulse().bandwidth();
    let lo = grid.nearest(-1.5 * bw);
    let hi = grid.nearest(1.5 * bw);
    let edges: Vec<usize> = [-1.5, -0.5, 0.5, 1.5].iter().map(|e| grid.nearest(e * bw)).collect();
    let compared: Vec<usize> = (lo..=hi).filter(|b| !edges.contains(b)).collect();
    let max_abs_dev_db = compared
        .iter()
        .map(|&b| (10.0 * (w[b] / a[b]).log10()).abs())
        .fold(0.0, f64::max);
    Ok(SpectrumComparison {
        aclr_analytic: aclr(&a, &grid, bw)?,
        aclr_simulated: aclr(&w, &grid, bw)?,
        grid,
        analytic: a,
        simulated: w,
        compared,
        max_abs_dev_db,
    })
}

/// All analytical-versus-simulation gates for a scenario.
pub fn run_validate(sc: &Scenario, mc: &McConfig) -> Result<Vec<Gate>> {
    sc.validate()?;
    mc.validate()?;
    let mut gates = vec![
        moment_gate(1_000_000, mc.seed)?,
        toy_corr_gate(&sc.pa_model()?, &sc.pa_model()?, 1_000_000, mc.seed)?,
    ];
    let tx = sc.transmitter(0)?;
    let cmp = compare_spectra(&tx, mc)?;
    gates.push(Gate::at_most(
        "analytical S_tx vs Welch trace PSD over [-3B/2, 3B/2] (dB)",
        cmp.max_abs_dev_db,
        0.5,
    ));
    let s = tx.output_psd_bins(sc.nfft, span_bins(&tx, sc.nfft)?)?;
    let ok = s.check_invariants().is_ok();
    gates.push(Gate {
        name: "Hermitian and PSD invariants of the output spectrum".into(),
        measured: if ok { 0.0 } else { 1.0 },
        limit: 0.0,
        pass: ok,
    });
    let linear = sc.transmitter(0)?.with_pa(PaModel::linear());
    let lin = linear.antenna_psds(sc.nfft)?;
    gates.push(Gate::at_most(
        "ACLR with a linear amplifier (dB)",
        aclr(&lin.total(), &lin.grid, tx.pulse().bandwidth())?,
        -50.0,
    ));
    Ok(gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mimo_aclr;
    use crate::pa::{REFERENCE_B1, REFERENCE_B2};

    fn small() -> Scenario {
        let mut s = Scenario::from_toml(
            "antennas = 6\nusers = 2\nrealizations = 2\nvictims = 3\nnfft = 512\n[channel]\ntaps = 6\n[pulse]\nspan = 8\noversampling = 4\n",
        )
        .unwrap();
        s.seed = 4;
        s
    }

    #[test]
    fn study_matches_standalone_mimo_aclr() {
        let sc = small();
        let st = run_study(&sc, &[0.0, 0.61]).unwrap();
        let rep = mimo_aclr(
            |r| sc.transmitter(r),
            |r| sc.single_antenna_transmitter(r),
            sc.realizations,
            &sc.victim_spec(),
            sc.victims,
            sc.seed,
            sc.nfft,
        )
        .unwrap();
        assert!((st.mimo_aclr().unwrap() - rep.mimo_aclr).abs() < 1e-9);
        assert!((st.mimo_aclr_tx().unwrap() - rep.mimo_aclr_tx).abs() < 1e-9);
        assert!((st.single_antenna_aclr().unwrap() - rep.aclr_siso_equivalent).abs() < 1e-9);
        assert!((st.mean_aclr_per_antenna().unwrap() - rep.mean_per_antenna()).abs() < 1e-9);
    }

    #[test]
    fn study_records_are_consistent() {
        let sc = small();
        let st = run_study(&sc, &[0.0]).unwrap();
        assert_eq!(st.records.len(), 2);
        assert_eq!(st.bound_violations(), 0);
        assert_eq!(st.bound_checks(), 2 * 3 * st.grid.len);
        for r in &st.records {
            assert!(r.invariant_error.is_none());
            assert_eq!(r.eigenvalues[0].len(), 6);
            let sum: f64 = r.eigenvalues[0].iter().sum();
            assert!((sum - r.s_tx_at[0]).abs() < 1e-9 * r.s_tx_at[0]);
        }
        for (a, b) in st.s_max.iter().zip(&st.s_tx) {
            assert!(*a <= *b * (1.0 + 1e-12));
            assert!(*a * 6.0 >= *b * (1.0 - 1e-12));
        }
        let c = st.ccdf(0);
        assert_eq!(c.levels_db.len(), 12);
        assert!((c.fraction_at_least(f64::NEG_INFINITY) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pattern_study_needs_line_of_sight() {
        assert!(run_pattern_study(&small(), &[0.0]).is_err());
        let mut los = small();
        los.channel.kind = ChannelKindName::Los;
        los.channel.angles_deg = Some(vec![-20.0, 30.0]);
        los.realizations = 1;
        let p = run_pattern_study(&los, &sweep_angles_deg(0.5)).unwrap();
        let r = &p.records[0];
        assert_eq!(r.p_ob_db.len(), 361);
        let ipk = r.p_ib_db.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let peak = p.angles_deg[ipk];
        assert!((peak + 20.0).abs() < 1.0 || (peak - 30.0).abs() < 1.0, "{peak}");
    }

    #[test]
    fn sweep_grid_covers_the_half_plane() {
        let a = sweep_angles_deg(0.25);
        assert_eq!(a.len(), 721);
        assert_eq!(a[0], -90.0);
        assert_eq!(*a.last().unwrap(), 90.0);
    }

    #[test]
    fn corrupted_cubic_sign_fails_the_toy_gate() {
        let good = PaModel::reference();
        let bad = PaModel::memoryless(vec![REFERENCE_B1, -REFERENCE_B2]).unwrap();
        assert!(toy_corr_gate(&good, &good, 200_000, 1).unwrap().measured < 0.03);
        assert!(!toy_corr_gate(&good, &bad, 200_000, 1).unwrap().pass);
    }
}
