use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Plans and scratch for repeated length-`n` transforms of contiguous lines.
pub(crate) struct Lines {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Lines {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        let fwd = p.plan_fft_forward(n);
        let inv = p.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Unnormalized forward transform of every length-`n` chunk.
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    /// Inverse transform of every chunk, normalized by `1/n`.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
        let c = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= c;
        }
    }
}

/// Square 2-D transform built from row transforms and transposes.
pub(crate) struct Square {
    n: usize,
    lines: Lines,
    tmp: Vec<Complex64>,
}

impl Square {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lines: Lines::new(n),
            tmp: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    fn transpose(&mut self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                self.tmp[j * n + i] = buf[i * n + j];
            }
        }
        buf.copy_from_slice(&self.tmp);
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.lines.forward(buf);
        self.transpose(buf);
        self.lines.forward(buf);
        self.transpose(buf);
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.lines.inverse(buf);
        self.transpose(buf);
        self.lines.inverse(buf);
        self.transpose(buf);
    }
}

/// Signed integer frequency of DFT index `i` on `n` points.
pub(crate) fn signed_index(i: usize, n: usize) -> i64 {
    if 2 * i <= n {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
