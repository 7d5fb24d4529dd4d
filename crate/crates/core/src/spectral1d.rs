//! Sturm-Liouville checks of the linearization around a 1D solitary wave.
//!
//! The scalar operator
//! M0 r = (g'(rho) - K''(rho) rho'^2 / 2 - K'(rho) rho'' - (u - c)^2 / rho) r - (K r')'
//! is discretized with the conservative three-point stencil (K at half nodes)
//! and homogeneous Dirichlet conditions at +-L. Eigenvalue counts come from
//! Sturm sequences (LDL^T pivots), eigenvectors from inverse iteration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid_model::FluidModel;
use crate::wave1d::WaveProfile1D;

#[derive(Clone, Debug)]
pub struct SturmLiouvilleOperator {
    pub h: f64,
    pub l: f64,
    pub c: f64,
    /// Diagonal at interior nodes 1..N-1 of the profile grid.
    pub diag: Vec<f64>,
    /// Off-diagonal; `offdiag[i]` couples unknowns i and i+1.
    pub offdiag: Vec<f64>,
    /// Potential part of the diagonal.
    pub potential: Vec<f64>,
}

/// (rho_inf g'(rho_inf) - c^2) / rho_inf.
pub fn essential_spectrum_floor(model: &FluidModel, c: f64) -> f64 {
    let ri = model.rho_inf;
    (ri * model.g_prime(ri) - c * c) / ri
}

/// rho' and rho'' by 4th-order central differences (2nd order next to the ends).
pub(crate) fn fd_derivatives(rho: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rho.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for j in 1..n - 1 {
        if j >= 2 && j + 2 < n {
            d1[j] = (-rho[j + 2] + 8.0 * rho[j + 1] - 8.0 * rho[j - 1] + rho[j - 2]) / (12.0 * h);
            d2[j] = (-rho[j + 2] + 16.0 * rho[j + 1] - 30.0 * rho[j] + 16.0 * rho[j - 1] - rho[j - 2]) / (12.0 * h * h);
        } else {
            d1[j] = (rho[j + 1] - rho[j - 1]) / (2.0 * h);
            d2[j] = (rho[j + 1] - 2.0 * rho[j] + rho[j - 1]) / (h * h);
        }
    }
    (d1, d2)
}

/// Assemble M0 on the interior nodes of the profile grid.
///
/// `tail_tol` is the far-field accuracy of the profile; the potential at the
/// first and last interior node must sit within 10 tail_tol of the floor.
pub fn assemble(profile: &WaveProfile1D, model: &FluidModel, tail_tol: f64) -> Result<SturmLiouvilleOperator> {
    let n = profile.len();
    if n < 5 {
        return Err(Error::GridTooCoarse(format!("{n} nodes")));
    }
    let h = profile.h;
    let c = profile.c;
    let rho = &profile.rho;
    let (d1, d2) = fd_derivatives(rho, h);
    let m = n - 2;
    let mut potential = Vec::with_capacity(m);
    for j in 1..n - 1 {
        let [_, k1, k2] = model.k_derivs(rho[j]);
        let du = profile.u[j] - c;
        potential.push(model.g_prime(rho[j]) - 0.5 * k2 * d1[j] * d1[j] - k1 * d2[j] - du * du / rho[j]);
    }
    let kh: Vec<f64> = (0..n - 1).map(|j| model.k(0.5 * (rho[j] + rho[j + 1]))).collect();
    let h2 = h * h;
    let diag: Vec<f64> = (0..m).map(|i| potential[i] + (kh[i] + kh[i + 1]) / h2).collect();
    let offdiag: Vec<f64> = (0..m - 1).map(|i| -kh[i + 1] / h2).collect();
    let floor = essential_spectrum_floor(model, c);
    let tol = 10.0 * tail_tol;
    for v in [potential[0], potential[m - 1]] {
        if (v - floor).abs() > tol.max(1e-14 * floor.abs()) {
            return Err(Error::GridTooCoarse(format!(
                "boundary potential {v} differs from the floor {floor} by more than {tol:e}"
            )));
        }
    }
    Ok(SturmLiouvilleOperator { h, l: profile.l, c, diag, offdiag, potential })
}

impl SturmLiouvilleOperator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Scale used for the zero band: max |potential|. The kinetic part of the
    /// diagonal grows like 1/h^2 and says nothing about the low spectrum.
    pub fn spectral_scale(&self) -> f64 {
        self.potential.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE)
    }

    pub fn zero_band(&self) -> f64 {
        1e-3 * self.spectral_scale()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut o = self.clone();
        o.diag.iter_mut().for_each(|v| *v *= s);
        o.offdiag.iter_mut().for_each(|v| *v *= s);
        o.potential.iter_mut().for_each(|v| *v *= s);
        o
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.dim();
        (0..m)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.offdiag[i - 1] * v[i - 1];
                }
                if i + 1 < m {
                    s += self.offdiag[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `sigma` (Sturm count).
    pub fn count_below(&self, sigma: f64) -> usize {
        let tiny = f64::EPSILON * self.gershgorin().1.abs().max(1.0);
        let mut count = 0;
        let mut d = self.diag[0] - sigma;
        for i in 0..self.dim() {
            if i > 0 {
                let b = self.offdiag[i - 1];
                d = self.diag[i] - sigma - b * b / d;
            }
            if d == 0.0 {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let m = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let r = if i > 0 { self.offdiag[i - 1].abs() } else { 0.0 } + if i + 1 < m { self.offdiag[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let tol = 1e-15 * lo.abs().max(hi.abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= tol {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenpair nearest `shift` by inverse iteration with a pivoted
    /// tridiagonal LU. The vector is normalized to unit Euclidean norm.
    pub fn eigenpair_near(&self, shift: f64) -> Result<(f64, Vec<f64>)> {
        let m = self.dim();
        let lu = TridiagLu::new(&self.diag, &self.offdiag, shift);
        // deterministic start with components on every mode
        let mut x: Vec<f64> = (0..m).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7).sin()).collect();
        normalize(&mut x);
        let scale = self.spectral_scale();
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        for it in 0..200 {
            let mut y = lu.solve(&x);
            normalize(&mut y);
            let ay = self.apply(&y);
            let lambda = dot(&y, &ay);
            let res = ay.iter().zip(&y).map(|(a, v)| (a - lambda * v).powi(2)).sum::<f64>().sqrt();
            x = y;
            if res <= 1e-10 * scale.max(lambda.abs()) || (it > 5 && res <= 1e-13 * self.gershgorin().1.abs()) {
                return Ok((lambda, x));
            }
            if res < 0.5 * best {
                best = res;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > 20 && res <= 1e-8 * scale.max(lambda.abs()) {
                    return Ok((lambda, x));
                }
            }
        }
        Err(Error::InverseIterationStalled(200))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// LU with partial pivoting of a symmetric tridiagonal matrix minus a shift.
/// Row interchanges produce a second superdiagonal.
struct TridiagLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    l: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    fn new(diag: &[f64], off: &[f64], shift: f64) -> Self {
        let m = diag.len();
        let mut u0: Vec<f64> = diag.iter().map(|d| d - shift).collect();
        let mut u1: Vec<f64> = off.to_vec();
        u1.push(0.0);
        let mut u2 = vec![0.0; m];
        let mut l = vec![0.0; m];
        let mut swap = vec![false; m];
        // lower band is `off` (symmetric)
        let mut sub: Vec<f64> = off.to_vec();
        sub.push(0.0);
        let tiny = 1e-300f64.max(f64::EPSILON * diag.iter().fold(0.0f64, |a, v| a.max(v.abs())) * 1e-6);
        for i in 0..m.saturating_sub(1) {
            if sub[i].abs() > u0[i].abs() {
                // swap rows i and i+1
                swap[i] = true;
                let (a0, a1, a2) = (u0[i], u1[i], u2[i]);
                let b0 = sub[i];
                let b1 = u0[i + 1];
                let b2 = u1[i + 1];
                u0[i] = b0;
                u1[i] = b1;
                u2[i] = b2;
                let f = a0 / b0;
                l[i] = f;
                u0[i + 1] = a1 - f * b1;
                u1[i + 1] = a2 - f * b2;
            } else {
                if u0[i] == 0.0 {
                    u0[i] = tiny;
                }
                let f = sub[i] / u0[i];
                l[i] = f;
                u0[i + 1] -= f * u1[i];
                u1[i + 1] -= f * u2[i];
            }
        }
        if m > 0 && u0[m - 1] == 0.0 {
            u0[m - 1] = tiny;
        }
        Self { u0, u1, u2, l, swap }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = b.len();
        let mut y = b.to_vec();
        for i in 0..m.saturating_sub(1) {
            if self.swap[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.l[i] * y[i];
        }
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = y[i];
            if i + 1 < m {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < m {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

/// Eigenvalues below -zero_band.
pub fn negative_eigencount(op: &SturmLiouvilleOperator) -> usize {
    op.count_below(-op.zero_band())
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelCheck {
    pub lambda0: f64,
    /// |<v, rho'>| / (|v| |rho'|) on the interior nodes.
    pub cosine: f64,
    pub eigenvector: Vec<f64>,
}

/// Eigenvalue nearest zero and the alignment of its eigenvector with rho'.
pub fn kernel_check(op: &SturmLiouvilleOperator, profile: &WaveProfile1D) -> Result<KernelCheck> {
    let (lambda0, v) = op.eigenpair_near(0.0)?;
    let dr = interior_derivative(profile);
    let cosine = dot(&v, &dr).abs() / (dot(&v, &v).sqrt() * dot(&dr, &dr).sqrt());
    Ok(KernelCheck { lambda0, cosine, eigenvector: v })
}

/// rho' at the interior nodes, the discrete translation mode.
pub fn interior_derivative(profile: &WaveProfile1D) -> Vec<f64> {
    let (d1, _) = fd_derivatives(&profile.rho, profile.h);
    d1[1..d1.len() - 1].to_vec()
}

#[derive(Clone, Debug, Serialize)]
pub struct GridInfo {
    pub n: usize,
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub neg_count: usize,
    pub lambda0: f64,
    pub cosine: f64,
    pub floor: f64,
    pub grid: GridInfo,
}

pub fn spectral_report(profile: &WaveProfile1D, model: &FluidModel, tail_tol: f64) -> Result<SpectralReport> {
    let op = assemble(profile, model, tail_tol)?;
    let k = kernel_check(&op, profile)?;
    Ok(SpectralReport {
        neg_count: negative_eigencount(&op),
        lambda0: k.lambda0,
        cosine: k.cosine,
        floor: essential_spectrum_floor(model, profile.c),
        grid: GridInfo { n: profile.len(), h: profile.h, l: profile.l },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_examples() {
        let m = FluidModel::gross_pitaevskii(1.0);
        assert_eq!(essential_spectrum_floor(&m, 0.5), 0.75);
        assert_eq!(essential_spectrum_floor(&m, 1.0), 0.0);
    }

    #[test]
    fn lu_solves_random_tridiagonal() {
        let d = [0.1, -3.0, 2.0, 0.0, 5.0];
        let o = [4.0, 1.0, -2.0, 3.0];
        let lu = TridiagLu::new(&d, &o, 0.0);
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = lu.solve(&b);
        let op = SturmLiouvilleOperator { h: 1.0, l: 1.0, c: 0.0, diag: d.to_vec(), offdiag: o.to_vec(), potential: d.to_vec() };
        let ax = op.apply(&x);
        for (a, b) in ax.iter().zip(&b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_count_of_laplacian() {
        // -D2 with Dirichlet on m nodes, h = 1: eigenvalues 2 - 2 cos(k pi / (m + 1))
        let m = 50;
        let op = SturmLiouvilleOperator { h: 1.0, l: 1.0, c: 0.0, diag: vec![2.0; m], offdiag: vec![-1.0; m - 1], potential: vec![1.0; m] };
        for k in 0..m {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (m + 1) as f64).cos();
            assert!((op.eigenvalue(k) - exact).abs() < 1e-12);
        }
        // 1.0 is itself an eigenvalue (k + 1 = 17), so probe just off it
        assert_eq!(op.count_below(1.05), (0..m).filter(|k| 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 51.0).cos() < 1.05).count());
    }
}
