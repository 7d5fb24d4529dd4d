//! Rectangular periodic grids with 2D FFTs (row FFTs, transpose, column FFTs;
//! rows run in parallel) and deterministic reductions.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

pub struct Grid2 {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    /// Wavenumbers used for differentiation (Nyquist set to zero).
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    f1: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
}

fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            if 2 * j == n {
                0.0
            } else {
                let m = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * m / l
            }
        })
        .collect()
}

impl Grid2 {
    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n1,
            n2,
            l1,
            l2,
            k1: wavenumbers(n1, l1),
            k2: wavenumbers(n2, l2),
            f1: p.plan_fft_forward(n1),
            i1: p.plan_fft_inverse(n1),
            f2: p.plan_fft_forward(n2),
            i2: p.plan_fft_inverse(n2),
        }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h1(&self) -> f64 {
        self.l1 / self.n1 as f64
    }

    pub fn h2(&self) -> f64 {
        self.l2 / self.n2 as f64
    }

    /// Cell area.
    pub fn da(&self) -> f64 {
        self.h1() * self.h2()
    }

    /// Centered coordinates x1 = -l1/2 + i1 h1.
    pub fn x1(&self, i: usize) -> f64 {
        -0.5 * self.l1 + i as f64 * self.h1()
    }

    pub fn x2(&self, i: usize) -> f64 {
        -0.5 * self.l2 + i as f64 * self.h2()
    }

    fn transform(&self, data: &mut [C64], forward: bool) {
        let (n1, n2) = (self.n1, self.n2);
        let (row, col) = if forward { (&self.f2, &self.f1) } else { (&self.i2, &self.i1) };
        data.par_chunks_mut(n2).for_each_init(
            || vec![C64::new(0.0, 0.0); row.get_inplace_scratch_len()],
            |s, r| row.process_with_scratch(r, s),
        );
        let mut t = vec![C64::new(0.0, 0.0); n1 * n2];
        t.par_chunks_mut(n1).enumerate().for_each(|(i2, out)| {
            for (i1, v) in out.iter_mut().enumerate() {
                *v = data[i1 * n2 + i2];
            }
        });
        t.par_chunks_mut(n1).for_each_init(
            || vec![C64::new(0.0, 0.0); col.get_inplace_scratch_len()],
            |s, c| col.process_with_scratch(c, s),
        );
        data.par_chunks_mut(n2).enumerate().for_each(|(i1, out)| {
            for (i2, v) in out.iter_mut().enumerate() {
                *v = t[i2 * n1 + i1];
            }
        });
    }

    /// Forward FFT of a + i b, unpacked into the spectra of a and b.
    pub fn fft_pair(&self, a: &[f64], b: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let mut z: Vec<C64> = a.par_iter().zip(b.par_iter()).map(|(&x, &y)| C64::new(x, y)).collect();
        self.transform(&mut z, true);
        let (n1, n2) = (self.n1, self.n2);
        let half_i = C64::new(0.0, -0.5);
        let mut sa = vec![C64::new(0.0, 0.0); n1 * n2];
        let mut sb = vec![C64::new(0.0, 0.0); n1 * n2];
        sa.par_chunks_mut(n2).zip(sb.par_chunks_mut(n2)).enumerate().for_each(|(i1, (ra, rb))| {
            let m1 = (n1 - i1) % n1;
            for i2 in 0..n2 {
                let m2 = (n2 - i2) % n2;
                let zk = z[i1 * n2 + i2];
                let zm = z[m1 * n2 + m2].conj();
                ra[i2] = 0.5 * (zk + zm);
                rb[i2] = half_i * (zk - zm);
            }
        });
        (sa, sb)
    }

    /// Inverse FFT of two Hermitian spectra, returning the two real fields.
    pub fn ifft_pair(&self, sa: &[C64], sb: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let i = C64::new(0.0, 1.0);
        let mut z: Vec<C64> = sa.par_iter().zip(sb.par_iter()).map(|(&a, &b)| a + i * b).collect();
        self.transform(&mut z, false);
        let s = 1.0 / (self.n1 * self.n2) as f64;
        (z.par_iter().map(|v| v.re * s).collect(), z.par_iter().map(|v| v.im * s).collect())
    }

    /// Build a spectrum pointwise from wavenumbers (k1, k2) and the flat index.
    pub fn map_spectrum<F: Fn(f64, f64, usize) -> C64 + Sync>(&self, f: F) -> Vec<C64> {
        let n2 = self.n2;
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        out.par_chunks_mut(n2).enumerate().for_each(|(i1, row)| {
            let k1 = self.k1[i1];
            for (i2, v) in row.iter_mut().enumerate() {
                *v = f(k1, self.k2[i2], i1 * n2 + i2);
            }
        });
        out
    }

    /// Deterministic sum of f(j) over all nodes: per-row partial sums in
    /// parallel, rows combined sequentially.
    pub fn sum<F: Fn(usize) -> f64 + Sync>(&self, f: F) -> f64 {
        let n2 = self.n2;
        let rows: Vec<f64> = (0..self.n1).into_par_iter().map(|i1| (0..n2).map(|i2| f(i1 * n2 + i2)).sum()).collect();
        rows.iter().sum()
    }

    /// h1 h2 sum a b.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.da() * self.sum(|j| a[j] * b[j])
    }

    /// Zero-mean inverse of d/dx1 along every x1 line; a second field is
    /// transformed alongside.
    pub fn inverse_d1_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (sa, sb) = self.fft_pair(a, b);
        let inv = |s: &[C64]| {
            self.map_spectrum(|k1, _, j| if k1 == 0.0 { C64::new(0.0, 0.0) } else { s[j] / C64::new(0.0, k1) })
        };
        self.ifft_pair(&inv(&sa), &inv(&sb))
    }
}
