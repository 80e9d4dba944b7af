//! Linear precoding and the symbol-rate correlation of the unamplified
//! transmit signals.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::channel::DiscreteChannel;
use crate::error::{ensure, Result};
use crate::signal::LagCorrelation;

/// Relative user powers `ξ`, positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation(Vec<f64>);

impl PowerAllocation {
    pub fn equal(users: usize) -> Self {
        PowerAllocation(vec![1.0 / users as f64; users])
    }

    /// Normalizes positive weights to sum to one.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        ensure!(!weights.is_empty(), Parameter, "empty power allocation");
        ensure!(
            weights.iter().all(|w| *w > 0.0 && w.is_finite()),
            Parameter,
            "power allocations must be positive"
        );
        let total: f64 = weights.iter().sum();
        Ok(PowerAllocation(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Precoder impulse response `W[ℓ]` (`M × K`) for `ℓ` starting at
/// `first_lag`, scaled so that `Σ_ℓ ‖W[ℓ]‖²_F = K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    taps: Vec<DMatrix<Complex64>>,
    first_lag: isize,
    alpha: f64,
    allocation: PowerAllocation,
}

impl Precoder {
    /// Normalizes arbitrary precoder taps to `Σ‖W‖²_F = K`.
    pub fn from_taps(taps: Vec<DMatrix<Complex64>>, first_lag: isize, allocation: PowerAllocation) -> Result<Self> {
        ensure!(!taps.is_empty(), Dimension, "precoder needs at least one tap");
        let (m, k) = taps[0].shape();
        ensure!(
            taps.iter().all(|t| t.shape() == (m, k)),
            Dimension,
            "precoder taps must all be {m}x{k}"
        );
        ensure!(
            allocation.len() == k,
            Dimension,
            "{} allocations for {k} users",
            allocation.len()
        );
        let energy: f64 = taps.iter().map(|t| t.norm_squared()).sum();
        ensure!(
            energy > 0.0 && energy.is_finite(),
            Normalization,
            "precoder taps have zero energy"
        );
        let alpha = (k as f64 / energy).sqrt();
        let scale = Complex64::new(alpha, 0.0);
        Ok(Precoder {
            taps: taps.into_iter().map(|t| t * scale).collect(),
            first_lag,
            alpha,
            allocation,
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

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn allocation(&self) -> &PowerAllocation {
        &self.allocation
    }

    pub fn antennas(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn users(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_squared()).sum()
    }

    pub fn at(&self, lag: isize) -> Option<&DMatrix<Complex64>> {
        let i = lag - self.first_lag;
        if i < 0 {
            None
        } else {
            self.taps.get(i as usize)
        }
    }
}

/// Maximum-ratio precoder `W[ℓ] = α H^H[-ℓ]`.
pub fn mr_precoder(h: &DiscreteChannel, allocation: PowerAllocation) -> Result<Precoder> {
    let taps = h.taps().iter().rev().map(|t| t.adjoint()).collect();
    Precoder::from_taps(taps, -h.last_lag(), allocation)
}

/// `R_xx[ν] = Σ_ℓ W*[ℓ] D_ξ W^T[ν+ℓ]`, with lag spacing `T`.
pub fn tx_corr_symbol_rate(w: &Precoder, symbol_period: f64) -> LagCorrelation {
    let m = w.antennas();
    let taps = w.taps.len();
    let max_lag = taps - 1;
    let xi = w.allocation.as_slice();
    // W D_ξ^{1/2} per tap; R[ν] = Σ_ℓ conj(V[ℓ]) V[ℓ+ν]^T.
    let v: Vec<DMatrix<Complex64>> = w
        .taps
        .iter()
        .map(|t| {
            let mut t = t.clone();
            for (k, s) in xi.iter().enumerate() {
                t.column_mut(k).scale_mut(s.sqrt());
            }
            t
        })
        .collect();
    let conj: Vec<DMatrix<Complex64>> = v.iter().map(|t| t.map(|z| z.conj())).collect();
    let trans: Vec<DMatrix<Complex64>> = v.iter().map(|t| t.transpose()).collect();
    let mut out = LagCorrelation::zeros(m, max_lag, symbol_period);
    for nu in 0..=max_lag as isize {
        let mut acc = DMatrix::zeros(m, m);
        for l in 0..taps as isize - nu {
            acc += &conj[l as usize] * &trans[(l + nu) as usize];
        }
        *out.at_mut(-nu) = acc.adjoint();
        *out.at_mut(nu) = acc;
    }
    out
}

/// `x[n] = Σ_ℓ W[ℓ] D_ξ^{1/2} s[n-ℓ]` for `K` symbol streams of length `N`.
/// The output has `N + L_W - 1` samples per antenna, where output index
/// `j` is time `n = j + first_lag`.
pub fn apply_precoder(w: &Precoder, symbols: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
    let k = w.users();
    ensure!(
        symbols.len() == k,
        Dimension,
        "{} symbol streams for {k} users",
        symbols.len()
    );
    let n = symbols[0].len();
    ensure!(
        symbols.iter().all(|s| s.len() == n),
        Dimension,
        "symbol streams differ in length"
    );
    let spectra = SymbolSpectra::new(symbols, w.taps.len());
    Ok((0..w.antennas()).map(|m| spectra.precode_antenna(w, m)).collect())
}

/// FFTs of the symbol streams, reused across antennas when precoding long
/// blocks.
pub(crate) struct SymbolSpectra {
    spectra: Vec<Vec<Complex64>>,
    nfft: usize,
    out_len: usize,
}

impl SymbolSpectra {
    pub(crate) fn new(symbols: &[Vec<Complex64>], precoder_len: usize) -> Self {
        let n = symbols.first().map_or(0, |s| s.len());
        let out_len = n + precoder_len - 1;
        let nfft = out_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        let spectra = symbols
            .iter()
            .map(|s| {
                let mut buf = s.clone();
                buf.resize(nfft, Complex64::default());
                fft.process(&mut buf);
                buf
            })
            .collect();
        SymbolSpectra {
            spectra,
            nfft,
            out_len,
        }
    }

    pub(crate) fn precode_antenna(&self, w: &Precoder, m: usize) -> Vec<Complex64> {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(self.nfft);
        let inv = planner.plan_fft_inverse(self.nfft);
        let xi = w.allocation.as_slice();
        let mut acc = vec![Complex64::default(); self.nfft];
        let mut filt = vec![Complex64::default(); self.nfft];
        for (k, spec) in self.spectra.iter().enumerate() {
            filt.iter_mut().for_each(|f| *f = Complex64::default());
            for (l, t) in w.taps.iter().enumerate() {
                filt[l] = t[(m, k)] * xi[k].sqrt();
            }
            fwd.process(&mut filt);
            for ((a, f), s) in acc.iter_mut().zip(&filt).zip(spec) {
                *a += f * s;
            }
        }
        inv.process(&mut acc);
        let scale = 1.0 / self.nfft as f64;
        acc.truncate(self.out_len);
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    }
}
