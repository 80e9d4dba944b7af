//! Power-amplifier model.
//!
//! The amplifier is the parallel-branch polynomial
//! `y_m = Σ_p b_mp ⋆ (x_m |x_m|^{2(p-1)})`. Waveforms of any order and memory
//! can be amplified directly; correlation functions of Gaussian inputs are
//! propagated analytically for the memoryless linear-plus-cubic model only.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ensure, Result};
use crate::signal::{LagCorrelation, SampledSignal};

/// Reference coefficients: `b₁ = 1`, `b₂ = -0.03491 + j0.005650`.
pub const REFERENCE_B1: Complex64 = Complex64::new(1.0, 0.0);
pub const REFERENCE_B2: Complex64 = Complex64::new(-0.03491, 0.005650);

/// Gain compression that defines the 1-dB point, as a power ratio.
const ONE_DB_POWER_RATIO: f64 = 0.794_328_234_724_281_5; // 10^(-0.1)

#[derive(Debug, Clone, PartialEq)]
pub struct PaModel {
    /// `coeffs[m][p-1]`. A single row is shared by all antennas.
    coeffs: Vec<Vec<Complex64>>,
    /// Optional branch FIR responses `fir[m][p-1][i]`, same sharing rule.
    fir: Option<Vec<Vec<Vec<Complex64>>>>,
}

impl PaModel {
    /// Memoryless model with coefficients shared by every antenna.
    pub fn memoryless(coeffs: Vec<Complex64>) -> Result<Self> {
        Self::per_antenna(vec![coeffs])
    }

    /// Memoryless model with one coefficient list per antenna.
    pub fn per_antenna(coeffs: Vec<Vec<Complex64>>) -> Result<Self> {
        ensure!(!coeffs.is_empty(), Parameter, "amplifier needs coefficients");
        let order = coeffs[0].len();
        ensure!(order >= 1, Parameter, "amplifier needs at least the linear branch");
        ensure!(
            coeffs.iter().all(|c| c.len() == order),
            Dimension,
            "all antennas need {order} branches"
        );
        ensure!(
            coeffs.iter().all(|c| c[0] != Complex64::default()),
            Parameter,
            "linear coefficient b_1 must be nonzero"
        );
        ensure!(
            coeffs.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite()),
            Parameter,
            "coefficients must be finite"
        );
        Ok(PaModel { coeffs, fir: None })
    }

    /// The reference linear-plus-cubic amplifier.
    pub fn reference() -> Self {
        PaModel::memoryless(vec![REFERENCE_B1, REFERENCE_B2]).expect("valid reference coefficients")
    }

    pub fn linear() -> Self {
        PaModel::memoryless(vec![REFERENCE_B1]).expect("valid linear coefficients")
    }

    /// Adds branch FIR responses (Monte-Carlo path only). `fir[m][p-1]` is
    /// the impulse response of branch `p`, replacing the scalar coefficient.
    pub fn with_memory(mut self, fir: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        ensure!(!fir.is_empty(), Parameter, "empty FIR description");
        ensure!(
            fir.iter().all(|a| a.len() == self.order() && a.iter().all(|b| !b.is_empty())),
            Dimension,
            "every antenna needs one nonempty FIR per branch"
        );
        self.fir = Some(fir);
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn is_memoryless(&self) -> bool {
        self.fir.is_none()
    }

    /// `b_{m,p}` for 1-based branch `p`.
    pub fn coeff(&self, m: usize, p: usize) -> Complex64 {
        let row = if self.coeffs.len() == 1 { 0 } else { m };
        self.coeffs[row].get(p - 1).copied().unwrap_or_default()
    }

    /// Number of antenna-specific coefficient rows (1 when shared).
    pub fn antenna_rows(&self) -> usize {
        self.coeffs.len()
    }

    fn check_antennas(&self, m: usize) -> Result<()> {
        ensure!(
            self.coeffs.len() == 1 || self.coeffs.len() == m,
            Dimension,
            "amplifier has {} coefficient rows for {m} antennas",
            self.coeffs.len()
        );
        if let Some(fir) = &self.fir {
            ensure!(
                fir.len() == 1 || fir.len() == m,
                Dimension,
                "amplifier has {} FIR rows for {m} antennas",
                fir.len()
            );
        }
        Ok(())
    }

    /// Amplifies one antenna's samples.
    pub fn amplify_antenna(&self, m: usize, x: &[Complex64]) -> Vec<Complex64> {
        match &self.fir {
            None => {
                let b: Vec<Complex64> = (1..=self.order()).map(|p| self.coeff(m, p)).collect();
                x.iter()
                    .map(|&v| {
                        let a = v.norm_sqr();
                        // Horner in |x|²: b₁ + b₂|x|² + b₃|x|⁴ + ...
                        let g = b.iter().rev().fold(Complex64::default(), |acc, c| acc * a + c);
                        v * g
                    })
                    .collect()
            }
            Some(fir) => {
                let row = if fir.len() == 1 { 0 } else { m };
                let mut y = vec![Complex64::default(); x.len()];
                for (p, h) in fir[row].iter().enumerate() {
                    let basis: Vec<Complex64> = x.iter().map(|&v| v * v.norm_sqr().powi(p as i32)).collect();
                    for (n, out) in y.iter_mut().enumerate() {
                        let mut acc = Complex64::default();
                        for (i, hi) in h.iter().enumerate().take(n + 1) {
                            acc += hi * basis[n - i];
                        }
                        *out += acc;
                    }
                }
                y
            }
        }
    }

    /// Compression point: the smaller positive root of
    /// `|b₁ + b₂ p|² = |b₁|² 10^{-0.1}` for antenna `m`.
    pub fn compression_point_1db(&self, m: usize) -> Result<f64> {
        ensure!(
            self.is_memoryless(),
            Unsupported,
            "compression point is defined for memoryless amplifiers"
        );
        ensure!(
            self.order() <= 2,
            Unsupported,
            "compression point is defined for linear-plus-cubic amplifiers"
        );
        let b1 = self.coeff(m, 1);
        let b2 = self.coeff(m, 2);
        let a = b2.norm_sqr();
        let b = 2.0 * (b1.conj() * b2).re;
        let c = b1.norm_sqr() * (1.0 - ONE_DB_POWER_RATIO);
        ensure!(a > 0.0, Calibration, "linear amplifier has no compression point");
        let disc = b * b - 4.0 * a * c;
        ensure!(
            b < 0.0 && disc >= 0.0,
            Calibration,
            "amplifier never compresses by 1 dB (b1* b2 = {})",
            b1.conj() * b2
        );
        // Stable smaller root of a p² + b p + c with b < 0.
        let q = -0.5 * (b - disc.sqrt());
        Ok(c / q)
    }
}

/// Amplifies every antenna of `x`.
pub fn amplify(x: &SampledSignal, pa: &PaModel) -> Result<SampledSignal> {
    pa.check_antennas(x.antennas())?;
    let y = x
        .samples()
        .iter()
        .enumerate()
        .map(|(m, s)| pa.amplify_antenna(m, s))
        .collect();
    SampledSignal::new(y, x.sample_rate())
}

/// How the input drive is applied across antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// One scalar for all antennas, matching the antenna-averaged power.
    Global,
    /// Each antenna scaled to the target individually.
    PerAntenna,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatingTarget {
    Compression1db,
    ExplicitPower(f64),
    Unscaled,
}

/// Input amplitude scale per antenna applied before amplification.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    scales: Vec<f64>,
    target: OperatingTarget,
}

impl OperatingPoint {
    pub fn unity(antennas: usize) -> Self {
        OperatingPoint {
            scales: vec![1.0; antennas],
            target: OperatingTarget::Unscaled,
        }
    }

    /// Scales the inputs (with unscaled powers `input_powers`) to `power`.
    pub fn explicit_power(power: f64, input_powers: &[f64], mode: ScalingMode) -> Result<Self> {
        ensure!(power > 0.0 && power.is_finite(), Parameter, "target power must be positive");
        Self::to_targets(
            &vec![power; input_powers.len()],
            input_powers,
            mode,
            OperatingTarget::ExplicitPower(power),
        )
    }

    fn to_targets(
        targets: &[f64],
        input_powers: &[f64],
        mode: ScalingMode,
        target: OperatingTarget,
    ) -> Result<Self> {
        ensure!(!input_powers.is_empty(), Dimension, "no antennas to calibrate");
        ensure!(
            input_powers.iter().all(|p| *p > 0.0 && p.is_finite()),
            Calibration,
            "input powers must be positive"
        );
        let scales = match mode {
            ScalingMode::Global => {
                let n = input_powers.len() as f64;
                let mean_in = input_powers.iter().sum::<f64>() / n;
                let mean_target = targets.iter().sum::<f64>() / n;
                vec![(mean_target / mean_in).sqrt(); input_powers.len()]
            }
            ScalingMode::PerAntenna => targets
                .iter()
                .zip(input_powers)
                .map(|(t, p)| (t / p).sqrt())
                .collect(),
        };
        Ok(OperatingPoint { scales, target })
    }

    pub fn scale(&self, m: usize) -> f64 {
        self.scales[m]
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn target(&self) -> OperatingTarget {
        self.target
    }

    /// Multiplies every scale by `factor` (scaling the transmitted signal).
    pub fn rescaled(&self, factor: f64) -> Self {
        OperatingPoint {
            scales: self.scales.iter().map(|s| s * factor).collect(),
            target: self.target,
        }
    }
}

/// Drives the amplifier at its 1-dB compression point. With
/// [`ScalingMode::Global`] the antenna-averaged input power equals the
/// (antenna-averaged) compression power.
pub fn calibrate_1db(pa: &PaModel, input_powers: &[f64], mode: ScalingMode) -> Result<OperatingPoint> {
    pa.check_antennas(input_powers.len())?;
    let targets = (0..input_powers.len())
        .map(|m| pa.compression_point_1db(m))
        .collect::<Result<Vec<_>>>()?;
    OperatingPoint::to_targets(&targets, input_powers, mode, OperatingTarget::Compression1db)
}

/// `ξ^{(p,p')} = E[x_a^* x_b |x_a|^{2(p-1)} |x_b|^{2(p'-1)}]` for jointly
/// circular Gaussian `x_a`, `x_b` with `E[x_a^* x_b] = R`,
/// `E|x_a|² = σ²_a`, `E|x_b|² = σ²_b`.
pub fn gaussian_moment(r: Complex64, var_a: f64, var_b: f64, p: usize, pp: usize) -> Result<Complex64> {
    ensure!(
        r.norm_sqr() <= var_a * var_b + 1e-9,
        Parameter,
        "|R|² = {} exceeds σ²_a σ²_b = {}",
        r.norm_sqr(),
        var_a * var_b
    );
    match (p, pp) {
        (1, 1) => Ok(r),
        (1, 2) => Ok(2.0 * var_b * r),
        (2, 1) => Ok(2.0 * var_a * r),
        (2, 2) => Ok(2.0 * r * (2.0 * var_a * var_b + r.norm_sqr())),
        _ => Err(crate::Error::Unsupported(format!(
            "moment order ({p}, {pp}) beyond the cubic model"
        ))),
    }
}

/// Output cross-correlation of antennas `(m, m')` at one lag, from the
/// input cross-correlation `r` and the input powers of both antennas.
#[inline]
pub(crate) fn cubic_output_corr(
    r: Complex64,
    var_m: f64,
    var_mp: f64,
    bm: (Complex64, Complex64),
    bmp: (Complex64, Complex64),
) -> Complex64 {
    let (b1, b2) = bm;
    let (c1, c2) = bmp;
    b1.conj() * c1 * r
        + 2.0 * r
            * (b1.conj() * c2 * var_mp
                + b2.conj() * c1 * var_m
                + b2.conj() * c2 * (2.0 * var_m * var_mp + r.norm_sqr()))
}

/// Propagates the (unscaled) input correlation through the operating-point
/// scaling and the memoryless linear-plus-cubic amplifier.
pub fn propagate_corr(rxx: &LagCorrelation, pa: &PaModel, op: &OperatingPoint) -> Result<LagCorrelation> {
    ensure!(
        pa.is_memoryless(),
        Unsupported,
        "analytical propagation needs a memoryless amplifier; use the Monte-Carlo path"
    );
    ensure!(
        pa.order() <= 2,
        Unsupported,
        "analytical propagation supports linear and cubic branches only"
    );
    let m = rxx.dim();
    pa.check_antennas(m)?;
    ensure!(
        op.scales.len() == m,
        Dimension,
        "operating point has {} scales for {m} antennas",
        op.scales.len()
    );
    let r0 = rxx.at(0);
    let var: Vec<f64> = (0..m).map(|i| op.scale(i).powi(2) * r0[(i, i)].re).collect();
    let b: Vec<(Complex64, Complex64)> = (0..m).map(|i| (pa.coeff(i, 1), pa.coeff(i, 2))).collect();
    let matrices = rxx
        .matrices()
        .iter()
        .map(|r| {
            DMatrix::from_fn(m, m, |i, j| {
                let s = op.scale(i) * op.scale(j);
                cubic_output_corr(r[(i, j)] * s, var[i], var[j], b[i], b[j])
            })
        })
        .collect();
    LagCorrelation::new(rxx.max_lag(), matrices, rxx.spacing())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Bisection on |b1 + b2 p|² - |b1|² 10^-0.1 over [0, hi].
    fn bisect_1db(b1: Complex64, b2: Complex64, hi: f64) -> f64 {
        let f = |p: f64| (b1 + b2 * p).norm_sqr() - b1.norm_sqr() * 10f64.powf(-0.1);
        let (mut lo, mut hi) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn linear_model_only_scales() {
        let pa = PaModel::memoryless(vec![c(0.5, 0.5), c(0.0, 0.0)]).unwrap();
        let x = SampledSignal::new(vec![vec![c(1.0, 2.0), c(-3.0, 0.5)]], 5.0).unwrap();
        let y = amplify(&x, &pa).unwrap();
        for (a, b) in x.antenna(0).iter().zip(y.antenna(0)) {
            assert!((a * c(0.5, 0.5) - b).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_envelope_gain() {
        let pa = PaModel::reference();
        let a = 1.7f64;
        let x = SampledSignal::new(vec![vec![Complex64::from_polar(a, 0.3); 4]], 5.0).unwrap();
        let y = amplify(&x, &pa).unwrap();
        let expected = (REFERENCE_B1 + REFERENCE_B2 * a * a).norm();
        assert!(((y.antenna(0)[0] / x.antenna(0)[0]).norm() - expected).abs() < 1e-14);
    }

    #[test]
    fn real_cubic_compression_point_matches_closed_form_and_bisection() {
        let pa = PaModel::memoryless(vec![c(1.0, 0.0), c(-0.1, 0.0)]).unwrap();
        let p = pa.compression_point_1db(0).unwrap();
        let closed = (1.0 - 10f64.powf(-0.05)) / 0.1;
        assert!((p - closed).abs() < 1e-12);
        assert!((p - bisect_1db(c(1.0, 0.0), c(-0.1, 0.0), 5.0)).abs() < 1e-9);
        assert!((p - 1.087).abs() < 1e-3);
    }

    #[test]
    fn reference_compression_point() {
        let pa = PaModel::reference();
        let p = pa.compression_point_1db(0).unwrap();
        assert!((p - bisect_1db(REFERENCE_B1, REFERENCE_B2, 10.0)).abs() < 1e-9);
        // Frozen from the bisection oracle.
        assert!((p - 3.120_120_997_787_624).abs() < 1e-9);
        let gain_db = 20.0 * (REFERENCE_B1 + REFERENCE_B2 * p).norm().log10();
        assert!((gain_db + 1.0).abs() < 1e-6);
    }

    #[test]
    fn compression_needs_a_compressive_cubic() {
        let lin = PaModel::memoryless(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(lin.compression_point_1db(0), Err(crate::Error::Calibration(_))));
        let expansive = PaModel::memoryless(vec![c(1.0, 0.0), c(0.05, 0.0)]).unwrap();
        assert!(expansive.compression_point_1db(0).is_err());
        assert!(calibrate_1db(&lin, &[1.0], ScalingMode::Global).is_err());
    }

    #[test]
    fn global_calibration_hits_the_mean_power() {
        let pa = PaModel::reference();
        let p1 = pa.compression_point_1db(0).unwrap();
        let powers = [0.5, 1.0, 1.5];
        let op = calibrate_1db(&pa, &powers, ScalingMode::Global).unwrap();
        let scaled: f64 = powers.iter().enumerate().map(|(m, p)| p * op.scale(m).powi(2)).sum::<f64>() / 3.0;
        assert!((scaled - p1).abs() < 1e-12);
        let per = calibrate_1db(&pa, &powers, ScalingMode::PerAntenna).unwrap();
        for (m, p) in powers.iter().enumerate() {
            assert!((p * per.scale(m).powi(2) - p1).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_vanish_for_uncorrelated_inputs() {
        for (p, pp) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            assert_eq!(gaussian_moment(c(0.0, 0.0), 1.3, 0.4, p, pp).unwrap(), c(0.0, 0.0));
        }
        assert_eq!(gaussian_moment(c(0.3, 0.1), 1.0, 1.0, 1, 1).unwrap(), c(0.3, 0.1));
        assert!(gaussian_moment(c(0.3, 0.1), 1.0, 1.0, 3, 1).is_err());
        assert!(gaussian_moment(c(2.0, 0.0), 1.0, 1.0, 1, 1).is_err());
    }

    #[test]
    fn sixth_moment_of_a_single_variable() {
        let s2 = 0.8;
        let v = gaussian_moment(c(s2, 0.0), s2, s2, 2, 2).unwrap();
        assert!((v - c(6.0 * s2 * s2 * s2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn propagation_rejects_memory_and_high_order() {
        let r = LagCorrelation::new(0, vec![DMatrix::identity(1, 1)], 0.2).unwrap();
        let op = OperatingPoint::unity(1);
        let mem = PaModel::reference().with_memory(vec![vec![vec![c(1.0, 0.0)], vec![c(0.1, 0.0)]]]).unwrap();
        assert!(propagate_corr(&r, &mem, &op).is_err());
        let fifth = PaModel::memoryless(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.01, 0.0)]).unwrap();
        assert!(propagate_corr(&r, &fifth, &op).is_err());
    }

    #[test]
    fn linear_propagation_scales_by_gain() {
        let b1 = c(0.9, -0.2);
        let pa = PaModel::memoryless(vec![b1, c(0.0, 0.0)]).unwrap();
        let r = LagCorrelation::new(
            1,
            vec![
                DMatrix::from_element(2, 2, c(0.1, 0.2)),
                DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(2.0, 0.0)]),
                DMatrix::from_element(2, 2, c(0.1, -0.2)),
            ],
            0.2,
        )
        .unwrap();
        let y = propagate_corr(&r, &pa, &OperatingPoint::unity(2)).unwrap();
        for l in r.lags() {
            assert!((y.at(l) - r.at(l) * c(b1.norm_sqr(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn memory_branch_filters_the_cubic_term() {
        let pa = PaModel::memoryless(vec![c(1.0, 0.0), c(-0.1, 0.0)])
            .unwrap()
            .with_memory(vec![vec![vec![c(1.0, 0.0)], vec![c(0.0, 0.0), c(-0.1, 0.0)]]])
            .unwrap();
        let x = [c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.0)];
        let y = pa.amplify_antenna(0, &x);
        assert!((y[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((y[1] - (c(2.0, 0.0) - 0.1 * c(1.0, 0.0))).norm() < 1e-15);
        assert!((y[2] - (c(0.0, 1.0) - 0.1 * c(8.0, 0.0))).norm() < 1e-15);
    }
}
