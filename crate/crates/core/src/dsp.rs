//! FFT plumbing and the uniform frequency grid shared by all spectra.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{ensure, Result};

/// Full linear convolution. Short kernels are convolved directly.
pub fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 64 {
        let mut out = vec![Complex64::default(); out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == Complex64::default() {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa = a.to_vec();
    fa.resize(n, Complex64::default());
    let mut fb = b.to_vec();
    fb.resize(n, Complex64::default());
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.truncate(out_len);
    fa.iter_mut().for_each(|x| *x *= scale);
    fa
}

/// Reorders an FFT output so that the zero frequency sits at index `n / 2`.
pub fn fftshift<T: Clone>(v: &[T]) -> Vec<T> {
    let n = v.len();
    let h = n / 2;
    v[n - h..].iter().chain(&v[..n - h]).cloned().collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Uniform frequency grid `start + i * step`, `i < len`. Frequencies are in
/// units of 1/T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl FreqGrid {
    /// The centered FFT grid over `[-fs/2, fs/2)` with `n` bins.
    pub fn centered(n: usize, sample_rate: f64) -> Self {
        let step = sample_rate / n as f64;
        FreqGrid {
            start: -((n / 2) as f64) * step,
            step,
            len: n,
        }
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.freq(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.start + self.len as f64 * self.step
    }

    /// Nearest bin to `f`, clamped into the grid.
    pub fn nearest(&self, f: f64) -> usize {
        let i = ((f - self.start) / self.step).round();
        i.clamp(0.0, (self.len - 1) as f64) as usize
    }

    /// Bins whose centers lie in `[lo, hi)`. Adjacent bands sharing an edge
    /// partition the grid.
    pub fn band(&self, lo: f64, hi: f64) -> Result<std::ops::Range<usize>> {
        ensure!(
            lo >= self.start - 0.5 * self.step && hi <= self.end() + 0.5 * self.step,
            Grid,
            "band [{lo}, {hi}) not covered by grid [{}, {})",
            self.start,
            self.end()
        );
        let first = |f: f64| -> usize {
            let x = (f - self.start) / self.step - 1e-9;
            x.ceil().clamp(0.0, self.len as f64) as usize
        };
        Ok(first(lo)..first(hi))
    }
}
