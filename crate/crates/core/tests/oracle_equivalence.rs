//! Analytical results against independent sampling oracles on small systems.

use nalgebra::DMatrix;
use num_complex::Complex64;
use oobrad::channel::{gen_rayleigh, gen_victim, VictimKind};
use oobrad::experiments::{compare_spectra, toy_corr_gate};
use oobrad::mc::{self, empirical_corr, generate_symbols, moment_oracle, McConfig, SymbolKind};
use oobrad::metrics::{aclr, Bands};
use oobrad::pa::{gaussian_moment, PaModel, REFERENCE_B1, REFERENCE_B2};
use oobrad::precode::{apply_precoder, tx_corr_symbol_rate, PowerAllocation};
use oobrad::rng::{stream, Stream};
use oobrad::signal::{modulate, Pulse};
use oobrad::spectral::{received_psd, s_tx};
use oobrad::system::{receiver_response, siso_transmitter, DriveLevel, Transmitter};

fn pulse() -> Pulse {
    Pulse::root_raised_cosine(0.22, 32, 5, 1.0).unwrap()
}

fn small_rayleigh(m: usize, k: usize, seed: u64) -> Transmitter {
    let ch = gen_rayleigh(m, k, 10, 5, 1.0, &mut stream(seed, Stream::UserChannel, 0)).unwrap();
    Transmitter::new(pulse(), ch, PowerAllocation::equal(k), PaModel::reference(), DriveLevel::default()).unwrap()
}

#[test]
fn each_moment_kernel_matches_the_sampling_oracle() {
    let r = Complex64::new(0.72, 0.54);
    for (p, pp) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
        let exact = gaussian_moment(r, 1.0, 1.0, p, pp).unwrap();
        let est = moment_oracle(r, 1.0, 1.0, p, pp, 4_000_000, 7).unwrap();
        assert!((est - exact).norm() < 0.01 * exact.norm(), "({p},{pp}): {est} vs {exact}");
    }
    let sigma2 = 1.7;
    let exact = gaussian_moment(Complex64::new(sigma2, 0.0), sigma2, sigma2, 2, 2).unwrap();
    assert!((exact.re - 6.0 * sigma2.powi(3)).abs() < 1e-12);
    let est = moment_oracle(Complex64::new(sigma2, 0.0), sigma2, sigma2, 2, 2, 4_000_000, 8).unwrap();
    assert!((est - exact).norm() < 0.01 * exact.norm());
}

#[test]
fn two_antenna_output_correlation_matches_simulation() {
    let pa = PaModel::reference();
    let g = toy_corr_gate(&pa, &pa, 1_000_000, 11).unwrap();
    assert!(g.pass, "per-entry deviation {}", g.measured);
    let flipped = PaModel::memoryless(vec![REFERENCE_B1, -REFERENCE_B2]).unwrap();
    assert!(!toy_corr_gate(&pa, &flipped, 1_000_000, 11).unwrap().pass);
}

#[test]
fn precoded_symbol_covariance_matches_tx_corr() {
    let tx = small_rayleigh(4, 2, 3);
    let s = generate_symbols(2, 100_000, SymbolKind::Gaussian, 5).unwrap();
    let x = apply_precoder(tx.precoder(), &s).unwrap();
    let n = x[0].len();
    let mut cov = DMatrix::<Complex64>::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            cov[(i, j)] = x[i].iter().zip(&x[j]).map(|(a, b)| a.conj() * b).sum();
        }
    }
    cov /= Complex64::new(n as f64, 0.0);
    let r0 = tx_corr_symbol_rate(tx.precoder(), 1.0).at(0).clone();
    assert!((cov - &r0).norm() < 0.02 * r0.norm());
}

#[test]
fn single_antenna_input_power_matches_the_waveform() {
    let tx = siso_transmitter(pulse(), PaModel::linear(), DriveLevel::Unscaled).unwrap();
    let s = generate_symbols(1, 100_000, SymbolKind::Gaussian, 2).unwrap();
    let x = modulate(&apply_precoder(tx.precoder(), &s).unwrap(), tx.pulse()).unwrap();
    let cut = 2 * tx.pulse().taps().len();
    let body = &x.antenna(0)[cut..x.len() - cut];
    let power = body.iter().map(|v| v.norm_sqr()).sum::<f64>() / body.len() as f64;
    let r0 = tx.input_corr().unwrap().at(0)[(0, 0)].re;
    assert!((power - r0).abs() < 0.01 * r0, "{power} vs {r0}");
}

#[test]
fn linear_single_antenna_welch_matches_the_raised_cosine() {
    let tx = siso_transmitter(pulse(), PaModel::linear(), DriveLevel::Unscaled).unwrap();
    let cmp = compare_spectra(
        &tx,
        &McConfig {
            n_symbols: 1_000_000,
            seed: 4,
            ..McConfig::default()
        },
    )
    .unwrap();
    let ib = Bands::new(tx.pulse().bandwidth()).unwrap().in_band(&cmp.grid).unwrap();
    // Stay off the roll-off edges, where the spectrum falls steeply.
    let flat = tx.pulse().bandwidth() * (1.0 - 0.22) / 1.22 * 0.5;
    for b in ib.filter(|&b| cmp.grid.freq(b).abs() < flat) {
        let dev = 10.0 * (cmp.simulated[b] / cmp.analytic[b]).log10();
        assert!(dev.abs() < 0.3, "f = {}: {dev} dB", cmp.grid.freq(b));
    }
}

#[test]
fn amplified_power_matches_the_analytical_zero_lag() {
    let tx = siso_transmitter(pulse(), PaModel::reference(), DriveLevel::default()).unwrap();
    let y = mc::simulate_waveform(
        &tx,
        &McConfig {
            n_symbols: 200_000,
            seed: 6,
            ..McConfig::default()
        },
    )
    .unwrap();
    let e = empirical_corr(&y, 0).unwrap().at(0)[(0, 0)].re;
    let a = tx.output_corr().unwrap().at(0)[(0, 0)].re;
    assert!((e - a).abs() < 0.01 * a, "{e} vs {a}");
}

#[test]
fn victim_average_equals_transmitted_psd() {
    let tx = small_rayleigh(32, 8, 9);
    let s = tx.output_psd(2048).unwrap();
    let grid = *s.grid();
    let stx = s_tx(&s);
    let n = 1000;
    let mut avg = vec![0.0; grid.len];
    for v in 0..n {
        let ch = gen_victim(&VictimKind::Rayleigh { taps: 10 }, 32, 5, 1.0, &mut stream(21, Stream::Victim, v)).unwrap();
        let h = receiver_response(&ch, 0, &grid).unwrap();
        let rx = received_psd(&s, &h, 1.0).unwrap();
        avg.iter_mut().zip(&rx).for_each(|(a, r)| *a += r / n as f64);
    }
    let ib = Bands::new(tx.pulse().bandwidth()).unwrap().in_band(&grid).unwrap();
    for b in ib {
        assert!((avg[b] - stx[b]).abs() < 0.05 * stx[b], "bin {b}: {} vs {}", avg[b], stx[b]);
    }
}

#[test]
fn qam_and_gaussian_symbols_share_the_in_band_spectrum() {
    let tx = small_rayleigh(2, 2, 12);
    let cfg = |kind| McConfig {
        n_symbols: 100_000,
        seed: 3,
        symbol_kind: kind,
        ..McConfig::default()
    };
    let g = mc::welch_antenna_psds(&tx, &cfg(SymbolKind::Gaussian)).unwrap();
    let q = mc::welch_antenna_psds(&tx, &cfg(SymbolKind::Qam(16))).unwrap();
    let (gt, qt) = (g.total(), q.total());
    let bw = tx.pulse().bandwidth();
    let ib = Bands::new(bw).unwrap().in_band(&g.grid).unwrap();
    let pg: f64 = gt[ib.clone()].iter().sum();
    let pq: f64 = qt[ib].iter().sum();
    assert!((10.0 * (pq / pg).log10()).abs() < 0.2);
    // Sub-Gaussian constellations have a lower fourth-order moment, hence less regrowth.
    let (ag, aq) = (aclr(&gt, &g.grid, bw).unwrap(), aclr(&qt, &q.grid, bw).unwrap());
    assert!(aq < ag, "QAM {aq} dB vs Gaussian {ag} dB");
}
