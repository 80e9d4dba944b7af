//! Matrix-valued power spectral densities and the scalar spectra derived from
//! them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::dsp::{fftshift, FreqGrid};
use crate::error::{ensure, Result};
use crate::signal::LagCorrelation;

/// Relative floor below which a negative eigenvalue marks a broken PSD.
pub const PSD_RELATIVE_FLOOR: f64 = 1e-8;
/// Absolute floor, relative to the strongest bin's trace, absorbing FFT
/// round-off in bins that carry almost no power.
pub const PSD_ABSOLUTE_FLOOR: f64 = 1e-12;

/// Hermitian `M × M` spectra on a uniform frequency grid. Only the upper
/// triangle is stored, bin-major, so every bin is Hermitian by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    grid: FreqGrid,
    dim: usize,
    data: Vec<Complex64>,
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    i * dim - i * (i + 1) / 2 + j
}

impl SpectralMatrix {
    pub fn zeros(grid: FreqGrid, dim: usize) -> Self {
        let pairs = dim * (dim + 1) / 2;
        SpectralMatrix {
            grid,
            dim,
            data: vec![Complex64::default(); pairs * grid.len],
        }
    }

    /// Builds from full per-bin matrices, averaging each with its adjoint.
    pub fn from_matrices(grid: FreqGrid, matrices: &[DMatrix<Complex64>]) -> Result<Self> {
        ensure!(matrices.len() == grid.len, Dimension, "{} matrices for {} bins", matrices.len(), grid.len);
        ensure!(!matrices.is_empty(), Dimension, "no bins");
        let dim = matrices[0].nrows();
        ensure!(
            matrices.iter().all(|s| s.shape() == (dim, dim)),
            Dimension,
            "bins must all be {dim}x{dim}"
        );
        let mut out = SpectralMatrix::zeros(grid, dim);
        for (b, s) in matrices.iter().enumerate() {
            for i in 0..dim {
                for j in i..dim {
                    let v = if i == j {
                        Complex64::new(s[(i, i)].re, 0.0)
                    } else {
                        0.5 * (s[(i, j)] + s[(j, i)].conj())
                    };
                    out.set(b, i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins(&self) -> usize {
        self.grid.len
    }

    pub fn bin_width(&self) -> f64 {
        self.grid.step
    }

    fn pairs(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// Entry `(i, j)` of bin `b`.
    pub fn entry(&self, b: usize, i: usize, j: usize) -> Complex64 {
        if i <= j {
            self.data[b * self.pairs() + packed_index(self.dim, i, j)]
        } else {
            self.data[b * self.pairs() + packed_index(self.dim, j, i)].conj()
        }
    }

    /// Sets `(i, j)` and implicitly `(j, i)`; diagonal entries keep their
    /// real part only.
    pub fn set(&mut self, b: usize, i: usize, j: usize, v: Complex64) {
        let (i, j, v) = if i <= j { (i, j, v) } else { (j, i, v.conj()) };
        let v = if i == j { Complex64::new(v.re, 0.0) } else { v };
        let p = self.pairs();
        self.data[b * p + packed_index(self.dim, i, j)] = v;
    }

    /// Writes one pair's spectrum over every bin.
    pub(crate) fn set_pair(&mut self, i: usize, j: usize, values: &[Complex64]) {
        debug_assert_eq!(values.len(), self.grid.len);
        for (b, v) in values.iter().enumerate() {
            self.set(b, i, j, *v);
        }
    }

    pub fn matrix(&self, b: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(b, i, j))
    }

    pub fn trace(&self, b: usize) -> f64 {
        (0..self.dim).map(|i| self.entry(b, i, i).re).sum()
    }

    /// `v^H S v` at bin `b`.
    pub fn quadratic_form(&self, b: usize, v: &[Complex64]) -> f64 {
        let p = self.pairs();
        let row = &self.data[b * p..(b + 1) * p];
        let mut acc = 0.0;
        let mut idx = 0;
        for i in 0..self.dim {
            acc += row[idx].re * v[i].norm_sqr();
            let mut off = Complex64::default();
            for j in i + 1..self.dim {
                off += row[idx + j - i] * v[j];
            }
            acc += 2.0 * (v[i].conj() * off).re;
            idx += self.dim - i;
        }
        acc
    }

    /// Multiplies every bin by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        SpectralMatrix {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Restricts to a contiguous bin range.
    pub fn crop(&self, bins: std::ops::Range<usize>) -> Result<Self> {
        ensure!(bins.end <= self.grid.len && bins.start < bins.end, Grid, "bad bin range {bins:?}");
        let p = self.pairs();
        Ok(SpectralMatrix {
            grid: FreqGrid {
                start: self.grid.freq(bins.start),
                step: self.grid.step,
                len: bins.len(),
            },
            dim: self.dim,
            data: self.data[bins.start * p..bins.end * p].to_vec(),
        })
    }

    fn max_trace(&self) -> f64 {
        (0..self.bins()).map(|b| self.trace(b)).fold(0.0, f64::max)
    }

    /// Eigenvalues at a bin that are allowed to be slightly negative.
    pub fn psd_tolerance(&self, b: usize) -> f64 {
        PSD_RELATIVE_FLOOR * self.trace(b).abs() + PSD_ABSOLUTE_FLOOR * self.max_trace()
    }

    /// Checks the Hermitian and positive-semidefinite invariants of every
    /// bin. Definiteness is tested with a Cholesky factorization of
    /// `S + tol I`.
    pub fn check_invariants(&self) -> Result<()> {
        let peak = self.max_trace();
        ensure!(peak.is_finite(), Numerical, "non-finite spectrum");
        let bad = (0..self.bins()).into_par_iter().find_first(|&b| {
            let tol = PSD_RELATIVE_FLOOR * self.trace(b).abs() + PSD_ABSOLUTE_FLOOR * peak;
            let mut s = self.matrix(b);
            for i in 0..self.dim {
                s[(i, i)] += tol;
            }
            !cholesky_succeeds(s)
        });
        ensure!(
            bad.is_none(),
            Numerical,
            "bin {} at f = {} is not positive semidefinite",
            bad.unwrap_or(0),
            self.grid.freq(bad.unwrap_or(0))
        );
        Ok(())
    }
}

/// In-place Cholesky factorization that fails on a nonpositive pivot.
fn cholesky_succeeds(mut a: DMatrix<Complex64>) -> bool {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= a[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= a[(i, k)] * a[(j, k)].conj();
            }
            a[(i, j)] = v / d;
        }
    }
    true
}

/// `S(f) = (T/κ) Σ_n R[n] e^{-j2π f n T/κ}` on the centered `nfft`-point grid
/// (frequencies in units of 1/T with `T = κ · spacing`).
pub fn corr_to_psd(r: &LagCorrelation, nfft: usize) -> Result<SpectralMatrix> {
    ensure!(
        nfft >= r.lag_count(),
        Grid,
        "nfft = {nfft} is smaller than the {} lags",
        r.lag_count()
    );
    let dim = r.dim();
    let dt = r.spacing();
    let grid = FreqGrid::centered(nfft, 1.0 / dt);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut out = SpectralMatrix::zeros(grid, dim);
    let mut buf = vec![Complex64::default(); nfft];
    for i in 0..dim {
        for j in i..dim {
            buf.iter_mut().for_each(|z| *z = Complex64::default());
            for lag in r.lags() {
                let idx = lag.rem_euclid(nfft as isize) as usize;
                buf[idx] += 0.5 * (r.at(lag)[(i, j)] + r.at(-lag)[(j, i)].conj());
            }
            fft.process(&mut buf);
            let vals: Vec<Complex64> = fftshift(&buf).into_iter().map(|z| z * dt).collect();
            out.set_pair(i, j, &vals);
        }
    }
    Ok(out)
}

/// Transmitted PSD `trace S(f)` per bin.
pub fn s_tx(s: &SpectralMatrix) -> Vec<f64> {
    (0..s.bins()).map(|b| s.trace(b)).collect()
}

/// `β h̃^H S h̃` per bin; `h` holds the victim response on the same grid.
pub fn received_psd(s: &SpectralMatrix, h: &[DVector<Complex64>], beta: f64) -> Result<Vec<f64>> {
    ensure!(h.len() == s.bins(), Grid, "{} responses for {} bins", h.len(), s.bins());
    ensure!(
        h.iter().all(|v| v.len() == s.dim()),
        Dimension,
        "victim responses must have {} entries",
        s.dim()
    );
    Ok(h.iter()
        .enumerate()
        .map(|(b, v)| beta * s.quadratic_form(b, v.as_slice()).max(0.0))
        .collect())
}

/// Eigenvalues of bin `b`, descending. Negative values within the PSD
/// tolerance are clamped to zero.
pub fn eigenvalues(s: &SpectralMatrix, b: usize) -> Result<Vec<f64>> {
    eigenvalues_with_tol(s, b, s.psd_tolerance(b))
}

fn eigenvalues_with_tol(s: &SpectralMatrix, b: usize, tol: f64) -> Result<Vec<f64>> {
    let ev = s.matrix(b).symmetric_eigenvalues();
    let mut v: Vec<f64> = ev.iter().copied().collect();
    ensure!(v.iter().all(|x| x.is_finite()), Numerical, "eigensolver failed at bin {b}");
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    ensure!(
        min >= -tol,
        Numerical,
        "eigenvalue {min} at f = {} below the PSD floor {}",
        s.grid().freq(b),
        -tol
    );
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Eigenvalues at the bin nearest `f0`, descending.
pub fn eigen_spectrum(s: &SpectralMatrix, f0: f64) -> Result<Vec<f64>> {
    eigenvalues(s, s.grid().nearest(f0))
}

/// Principal eigenvalue per bin.
pub fn s_max(s: &SpectralMatrix) -> Result<Vec<f64>> {
    s_max_bins(s, 0..s.bins())
}

/// Principal eigenvalue over a bin range.
pub fn s_max_bins(s: &SpectralMatrix, bins: std::ops::Range<usize>) -> Result<Vec<f64>> {
    let peak = s.max_trace();
    bins.into_par_iter()
        .map(|b| {
            let tol = PSD_RELATIVE_FLOOR * s.trace(b).abs() + PSD_ABSOLUTE_FLOOR * peak;
            eigenvalues_with_tol(s, b, tol).map(|v| v[0])
        })
        .collect()
}

/// `10 log10(M S_max / S_tx)` per bin.
pub fn worst_case_ratio(s: &SpectralMatrix) -> Result<Vec<f64>> {
    let smax = s_max(s)?;
    ratio_db(s.dim(), &smax, &s_tx(s))
}

pub(crate) fn ratio_db(m: usize, smax: &[f64], stx: &[f64]) -> Result<Vec<f64>> {
    smax.iter()
        .zip(stx)
        .map(|(a, t)| {
            ensure!(*t > 0.0, Numerical, "zero transmitted power in a bin");
            Ok(10.0 * (m as f64 * a / t).log10())
        })
        .collect()
}
