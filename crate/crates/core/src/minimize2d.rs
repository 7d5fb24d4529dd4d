//! Fixed-momentum minimization of the modified energy on 2D tori.
//!
//! Fields live on a rectangle [-L1/2, L1/2) x [-L2/2, L2/2) whose sides follow
//! the KP scaling z1 = eps x1, z2 = eps^2 x2 of the lump ansatz. All
//! derivatives are spectral (Nyquist mode dropped, so the discrete gradient
//! is skew-adjoint and the computed variational gradient is the exact
//! gradient of the discrete energy).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid_model::{chi, gamma_coefficient, CutoffSpec, FluidModel, PotentialExtension};
use crate::torus::{Grid2, C64};

/// Periodic (rho, phi) on a rectangular torus, row-major with x1 as the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField2D {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
}

impl TorusField2D {
    pub fn constant(n1: usize, n2: usize, l1: f64, l2: f64) -> Self {
        Self { n1, n2, l1, l2, rho: vec![1.0; n1 * n2], phi: vec![0.0; n1 * n2] }
    }

    pub fn grid(&self) -> Grid2 {
        Grid2::new(self.n1, self.n2, self.l1, self.l2)
    }

    pub fn h1(&self) -> f64 {
        self.l1 / self.n1 as f64
    }

    pub fn h2(&self) -> f64 {
        self.l2 / self.n2 as f64
    }

    pub fn sup_defect(&self) -> f64 {
        self.rho.iter().fold(0.0f64, |a, r| a.max((r - 1.0).abs()))
    }

    pub fn phi_mean(&self) -> f64 {
        self.phi.iter().sum::<f64>() / self.phi.len() as f64
    }

    /// Largest |rho - 1| on the outermost grid lines.
    pub fn boundary_defect(&self) -> f64 {
        let (n1, n2) = (self.n1, self.n2);
        let mut m = 0.0f64;
        for i2 in 0..n2 {
            m = m.max((self.rho[i2] - 1.0).abs()).max((self.rho[(n1 - 1) * n2 + i2] - 1.0).abs());
        }
        for i1 in 0..n1 {
            m = m.max((self.rho[i1 * n2] - 1.0).abs()).max((self.rho[i1 * n2 + n2 - 1] - 1.0).abs());
        }
        m
    }
}

/// The rational lump -12 d1^2 log(3 + x1^2 + x2^2), a solution of
/// w_1 + w w_1 + d2^2 d1^{-1} w - w_111 = 0.
pub fn lump(x1: f64, x2: f64) -> f64 {
    let q = 3.0 + x1 * x1 + x2 * x2;
    -24.0 * (3.0 + x2 * x2 - x1 * x1) / (q * q)
}

/// int w^2 over the plane for the lump.
pub const LUMP_L2_SQUARED: f64 = 96.0 * PI;

#[derive(Clone, Debug, Serialize)]
pub struct KpLump {
    pub n1: usize,
    pub n2: usize,
    pub half1: f64,
    pub half2: f64,
    #[serde(skip)]
    pub w: Vec<f64>,
    /// Discrete L^2 norm of the KP residual.
    pub residual_l2: f64,
    /// Max |residual|.
    pub residual_max: f64,
    pub e_kp: f64,
    /// int w^2 on the grid.
    pub w2: f64,
}

/// Sample the lump on [-half1, half1) x [-half2, half2) and evaluate its KP
/// residual and energy with spectral derivatives (zero-mean d1^{-1} per line).
pub fn kp1_lump(n1: usize, n2: usize, half1: f64, half2: f64) -> Result<KpLump> {
    let g = Grid2::new(n1, n2, 2.0 * half1, 2.0 * half2);
    let w: Vec<f64> = (0..n1 * n2).map(|j| lump(g.x1(j / n2), g.x2(j % n2))).collect();
    let peak = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut edge = 0.0f64;
    for i1 in 0..n1 {
        edge = edge.max(w[i1 * n2].abs());
    }
    for i2 in 0..n2 {
        edge = edge.max(w[i2].abs());
    }
    if edge > 1e-2 * peak {
        return Err(Error::GridTooSmall(format!("lump is {edge:.3e} at the boundary (peak {peak:.3e})")));
    }
    let zero = vec![0.0; w.len()];
    let (sw, _) = g.fft_pair(&w, &zero);
    let i = C64::new(0.0, 1.0);
    let d1 = g.map_spectrum(|k1, _, j| i * k1 * sw[j]);
    let d111 = g.map_spectrum(|k1, _, j| -i * k1 * k1 * k1 * sw[j]);
    let (w1, w111) = g.ifft_pair(&d1, &d111);
    // d2^2 d1^{-1} w and d2 d1^{-1} w
    let inv = |k1: f64| if k1 == 0.0 { C64::new(0.0, 0.0) } else { C64::new(0.0, -1.0 / k1) };
    let v22 = g.map_spectrum(|k1, k2, j| -k2 * k2 * inv(k1) * sw[j]);
    let v2 = g.map_spectrum(|k1, k2, j| i * k2 * inv(k1) * sw[j]);
    let (v22, v2) = g.ifft_pair(&v22, &v2);
    let da = g.da();
    let res2 = g.sum(|j| {
        let r = w1[j] + w[j] * w1[j] + v22[j] - w111[j];
        r * r
    });
    let residual_max = (0..w.len()).map(|j| (w1[j] + w[j] * w1[j] + v22[j] - w111[j]).abs()).fold(0.0, f64::max);
    let e_kp = 0.5 * da * g.sum(|j| v2[j] * v2[j] + w[j].powi(3) / 3.0 + w1[j] * w1[j]);
    let w2 = da * g.sum(|j| w[j] * w[j]);
    Ok(KpLump { n1, n2, half1, half2, w, residual_l2: (res2 * da).sqrt(), residual_max, e_kp, w2 })
}

/// Resolution and torus size for the lump ansatz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusOptions {
    #[serde(default = "default_n")]
    pub n1: usize,
    #[serde(default = "default_n")]
    pub n2: usize,
    /// Half-width of the torus in KP variables (z1 = eps x1, z2 = eps^2 x2);
    /// chosen from the tail bound when absent.
    #[serde(default)]
    pub rz: Option<f64>,
}

fn default_n() -> usize {
    512
}

impl Default for TorusOptions {
    fn default() -> Self {
        Self { n1: default_n(), n2: default_n(), rz: None }
    }
}

/// Boundary |rho - 1| allowed for the ansatz.
pub const TAIL_BOUND: f64 = 1e-6;

/// Lump amplitude data for a normalized model: (gamma, K(1), ||A||^2).
fn lump_scaling(model: &FluidModel) -> Result<(f64, f64, f64)> {
    check_normalized(model)?;
    let gamma = gamma_coefficient(model, 1.0)?;
    if gamma.degenerate {
        return Err(Error::DegenerateGamma(gamma.value));
    }
    let k1 = model.k(1.0);
    Ok((gamma.value, k1, k1 * LUMP_L2_SQUARED / (gamma.value * gamma.value)))
}

fn check_normalized(model: &FluidModel) -> Result<()> {
    if model.rho_inf != 1.0 || (model.c_s() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidModel("2D minimization needs a rescaled model (rho_inf = 1, c_s = 1)".into()));
    }
    Ok(())
}

/// A(z) = w(z / sqrt(K(1))) / gamma.
fn amplitude(gamma: f64, k1: f64, z1: f64, z2: f64) -> f64 {
    let s = k1.sqrt();
    lump(z1 / s, z2 / s) / gamma
}

/// Smallest half-width (KP variables) keeping eps^2 |A| below the tail bound
/// on the boundary, for the largest eps in use.
pub fn torus_half_width(model: &FluidModel, p: f64) -> Result<f64> {
    let (gamma, k1, a2) = lump_scaling(model)?;
    let eps = p / a2;
    // |w| <= 24 / (3 + r^2) along the axes, so |A| <~ 24 K(1) / (|gamma| r^2)
    let mut rz = (eps * eps * 24.0 * k1 / (gamma.abs() * TAIL_BOUND)).sqrt() * 1.05;
    rz = rz.max(4.0 * k1.sqrt());
    loop {
        let edge = (0..=200)
            .map(|i| {
                let s = -rz + 2.0 * rz * i as f64 / 200.0;
                amplitude(gamma, k1, rz, s).abs().max(amplitude(gamma, k1, s, rz).abs())
            })
            .fold(0.0, f64::max);
        // plus the x1-line mean removed in `sample_ansatz`
        let mean = 24.0 / (gamma.abs() * (3.0 + rz * rz / k1));
        if eps * eps * (edge + mean) < TAIL_BOUND {
            return Ok(rz);
        }
        rz *= 1.05;
    }
}

fn sample_ansatz(g: &Grid2, gamma: f64, k1: f64, eps: f64) -> TorusField2D {
    let n2 = g.n2;
    let rho: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|j| 1.0 + eps * eps * amplitude(gamma, k1, eps * g.x1(j / n2), eps * eps * g.x2(j % n2)))
        .collect();
    // The lump's algebraic tail leaves each x1 line with a nonzero mean on a
    // truncated torus; a periodic phi cannot carry it (it would cost
    // L1/2 int mean^2 ~ eps / rz^2 of energy), so it is removed from rho.
    let mut rho = rho;
    for i2 in 0..n2 {
        let m = (0..g.n1).map(|i1| rho[i1 * n2 + i2] - 1.0).sum::<f64>() / g.n1 as f64;
        for i1 in 0..g.n1 {
            rho[i1 * n2 + i2] -= m;
        }
    }
    let dr: Vec<f64> = rho.iter().map(|r| r - 1.0).collect();
    let (phi, _) = g.inverse_d1_pair(&dr, &vec![0.0; dr.len()]);
    TorusField2D { n1: g.n1, n2: g.n2, l1: g.l1, l2: g.l2, rho, phi }
}

/// KP-lump ansatz rho = 1 + eps^2 A(eps x1, eps^2 x2), phi = d1^{-1}(rho - 1),
/// with eps tuned so that the discrete momentum equals p.
pub fn ansatz_from_lump(model: &FluidModel, p: f64, opts: &TorusOptions) -> Result<TorusField2D> {
    let (gamma, k1, a2) = lump_scaling(model)?;
    let rz = match opts.rz {
        Some(r) => r,
        None => torus_half_width(model, p.max(1e-12))?,
    };
    let eps0 = p / a2;
    let (l1, l2) = if p > 0.0 { (2.0 * rz / eps0, 2.0 * rz / (eps0 * eps0)) } else { (2.0 * rz, 2.0 * rz) };
    if p == 0.0 {
        return Ok(TorusField2D::constant(opts.n1, opts.n2, l1, l2));
    }
    let g = Grid2::new(opts.n1, opts.n2, l1, l2);
    let mut f = sample_ansatz(&g, gamma, k1, eps0);
    // P is close to eps ||A||^2: one Newton step on eps, then an exact phi rescale
    let p0 = momentum_on(&g, &f);
    let eps1 = eps0 * p / p0;
    f = sample_ansatz(&g, gamma, k1, eps1);
    let defect = f.boundary_defect();
    if defect > TAIL_BOUND {
        return Err(Error::TorusTooSmall { defect, tol: TAIL_BOUND });
    }
    let p1 = momentum_on(&g, &f);
    let s = p / p1;
    f.phi.iter_mut().for_each(|v| *v *= s);
    Ok(f)
}

fn momentum_on(g: &Grid2, f: &TorusField2D) -> f64 {
    let zero = vec![0.0; f.phi.len()];
    let (sp, _) = g.fft_pair(&f.phi, &zero);
    let d1 = g.map_spectrum(|k1, _, j| C64::new(0.0, k1) * sp[j]);
    let (p1, _) = g.ifft_pair(&d1, &g.map_spectrum(|_, _, _| C64::new(0.0, 0.0)));
    g.dot(&f.rho.iter().map(|r| r - 1.0).collect::<Vec<_>>(), &p1)
}

/// P = int (rho - 1) d1 phi.
pub fn momentum_2d(field: &TorusField2D) -> f64 {
    momentum_on(&field.grid(), field)
}

/// Energy functional bound to a grid and model.
pub struct Functional {
    pub grid: Grid2,
    model: FluidModel,
    ext: PotentialExtension,
    spec: CutoffSpec,
    pub eps_reg: f64,
}

/// Everything computed in one pass over a field.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub e_tilde: f64,
    pub e_reg: f64,
    pub p: f64,
    r1: Vec<f64>,
    r2: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    rhat: Vec<C64>,
    phihat: Vec<C64>,
}

/// (dE/drho, dE/dphi, dP/drho, dP/dphi)
pub type Gradients = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Pohozaev {
    pub poho1: f64,
    pub poho2: f64,
    pub energie1: f64,
    #[serde(rename = "cP_minus_2G")]
    pub poho3: f64,
}

impl Pohozaev {
    pub fn max_abs(&self) -> f64 {
        self.poho1.abs().max(self.poho2.abs()).max(self.energie1.abs()).max(self.poho3.abs())
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b) / scale.abs()
    }
}

impl Functional {
    pub fn new(model: &FluidModel, spec: &CutoffSpec, field: &TorusField2D, eps_reg: f64) -> Result<Self> {
        check_normalized(model)?;
        Ok(Self { grid: field.grid(), model: model.clone(), ext: PotentialExtension::new(model, spec)?, spec: *spec, eps_reg })
    }

    pub fn extension(&self) -> &PotentialExtension {
        &self.ext
    }

    /// Energies, momentum and first derivatives.
    pub fn evaluate(&self, f: &TorusField2D) -> Evaluation {
        let g = &self.grid;
        let dr: Vec<f64> = f.rho.par_iter().map(|r| r - 1.0).collect();
        let (rhat, phihat) = g.fft_pair(&dr, &f.phi);
        let i = C64::new(0.0, 1.0);
        let (r1, r2) = g.ifft_pair(&g.map_spectrum(|k1, _, j| i * k1 * rhat[j]), &g.map_spectrum(|_, k2, j| i * k2 * rhat[j]));
        let (p1, p2) = g.ifft_pair(&g.map_spectrum(|k1, _, j| i * k1 * phihat[j]), &g.map_spectrum(|_, k2, j| i * k2 * phihat[j]));
        let da = g.da();
        let e_tilde = da
            * g.sum(|j| {
                let (x, _) = chi(&self.spec, f.rho[j]);
                let k = self.model.k(x);
                0.5 * (x * (p1[j] * p1[j] + p2[j] * p2[j]) + k * (r1[j] * r1[j] + r2[j] * r2[j])) + self.ext.eval(f.rho[j]).0
            });
        let reg = if self.eps_reg > 0.0 {
            let n = g.len() as f64;
            let s = self.spectral_sum(|k1, k2, j| {
                let kk = k1 * k1 + k2 * k2;
                kk * kk * (rhat[j].norm_sqr() + phihat[j].norm_sqr())
            });
            0.5 * self.eps_reg * da * s / n
        } else {
            0.0
        };
        let p = da * g.sum(|j| dr[j] * p1[j]);
        Evaluation { e_tilde, e_reg: e_tilde + reg, p, r1, r2, p1, p2, rhat, phihat }
    }

    fn spectral_sum<F: Fn(f64, f64, usize) -> f64 + Sync>(&self, f: F) -> f64 {
        let g = &self.grid;
        let n2 = g.n2;
        g.sum(|j| f(g.k1[j / n2], g.k2[j % n2], j))
    }

    /// Energy after scaling phi by s, reusing an evaluation (P scales by s too).
    fn energy_with_phi_scale(&self, f: &TorusField2D, ev: &Evaluation, s: f64) -> (f64, f64) {
        let g = &self.grid;
        let da = g.da();
        let s2 = s * s;
        let e_tilde = da
            * g.sum(|j| {
                let (x, _) = chi(&self.spec, f.rho[j]);
                let k = self.model.k(x);
                0.5 * (x * s2 * (ev.p1[j] * ev.p1[j] + ev.p2[j] * ev.p2[j]) + k * (ev.r1[j] * ev.r1[j] + ev.r2[j] * ev.r2[j]))
                    + self.ext.eval(f.rho[j]).0
            });
        let reg = if self.eps_reg > 0.0 {
            let n = g.len() as f64;
            let sum = self.spectral_sum(|k1, k2, j| {
                let kk = k1 * k1 + k2 * k2;
                kk * kk * (ev.rhat[j].norm_sqr() + s2 * ev.phihat[j].norm_sqr())
            });
            0.5 * self.eps_reg * da * sum / n
        } else {
            0.0
        };
        (e_tilde, e_tilde + reg)
    }

    /// Variational gradients of E_reg and P (L^2 inner product h1 h2 sum).
    pub fn gradients(&self, f: &TorusField2D, ev: &Evaluation) -> Gradients {
        let g = &self.grid;
        let n = g.len();
        let mut fx1 = vec![0.0; n];
        let mut fx2 = vec![0.0; n];
        let mut kx1 = vec![0.0; n];
        let mut kx2 = vec![0.0; n];
        let mut local = vec![0.0; n];
        fx1.par_iter_mut()
            .zip(fx2.par_iter_mut())
            .zip(kx1.par_iter_mut().zip(kx2.par_iter_mut()))
            .zip(local.par_iter_mut())
            .enumerate()
            .for_each(|(j, (((a1, a2), (b1, b2)), loc))| {
                let rho = f.rho[j];
                let (x, dx) = chi(&self.spec, rho);
                let [k, kp, _] = self.model.k_derivs(x);
                let (p1, p2, r1, r2) = (ev.p1[j], ev.p2[j], ev.r1[j], ev.r2[j]);
                *a1 = x * p1;
                *a2 = x * p2;
                *b1 = k * r1;
                *b2 = k * r2;
                *loc = 0.5 * dx * (p1 * p1 + p2 * p2) + 0.5 * kp * dx * (r1 * r1 + r2 * r2) + self.ext.eval(rho).1;
            });
        let (f1, f2) = g.fft_pair(&fx1, &fx2);
        let (q1, q2) = g.fft_pair(&kx1, &kx2);
        let i = C64::new(0.0, 1.0);
        let e = self.eps_reg;
        let gphi_hat = g.map_spectrum(|k1, k2, j| {
            let kk = k1 * k1 + k2 * k2;
            -(i * k1 * f1[j] + i * k2 * f2[j]) + e * kk * kk * ev.phihat[j]
        });
        let grho_hat = g.map_spectrum(|k1, k2, j| {
            let kk = k1 * k1 + k2 * k2;
            -(i * k1 * q1[j] + i * k2 * q2[j]) + e * kk * kk * ev.rhat[j]
        });
        let (gphi, mut grho) = g.ifft_pair(&gphi_hat, &grho_hat);
        grho.par_iter_mut().zip(local.par_iter()).for_each(|(a, b)| *a += b);
        let dp_rho = ev.p1.clone();
        let dp_phi: Vec<f64> = ev.r1.par_iter().map(|v| -v).collect();
        (grho, gphi, dp_rho, dp_phi)
    }

    /// Apply the inverse of the constant-state Hessian symbol of E_reg - c P.
    fn precondition(&self, a: &[f64], b: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let (sa, sb) = g.fft_pair(a, b);
        let k1c = self.model.k(1.0);
        let e = self.eps_reg;
        let i = C64::new(0.0, 1.0);
        let xr = g.map_spectrum(|k1, k2, j| {
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                return sa[j];
            }
            let m11 = 1.0 + k1c * kk + e * kk * kk;
            let m22 = kk + e * kk * kk;
            let m12 = -c * i * k1;
            let det = m11 * m22 - c * c * k1 * k1;
            (m22 * sa[j] - m12 * sb[j]) / det
        });
        let xf = g.map_spectrum(|k1, k2, j| {
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let m11 = 1.0 + k1c * kk + e * kk * kk;
            let m22 = kk + e * kk * kk;
            let m21 = c * i * k1;
            let det = m11 * m22 - c * c * k1 * k1;
            (-m21 * sa[j] + m11 * sb[j]) / det
        });
        g.ifft_pair(&xr, &xf)
    }

    /// Pohozaev-type relative defects at multiplier c.
    pub fn pohozaev(&self, f: &TorusField2D, ev: &Evaluation, c: f64) -> Pohozaev {
        let g = &self.grid;
        let da = g.da();
        let mut terms = [0.0f64; 4];
        let rows: Vec<[f64; 4]> = (0..g.n1)
            .into_par_iter()
            .map(|i1| {
                let mut t = [0.0; 4];
                for i2 in 0..g.n2 {
                    let j = i1 * g.n2 + i2;
                    let (x, _) = chi(&self.spec, f.rho[j]);
                    let k = self.model.k(x);
                    t[0] += x * ev.p1[j] * ev.p1[j] + k * ev.r1[j] * ev.r1[j];
                    t[1] += x * ev.p2[j] * ev.p2[j] + k * ev.r2[j] * ev.r2[j];
                    t[2] += x * (ev.p1[j] * ev.p1[j] + ev.p2[j] * ev.p2[j]);
                    t[3] += 2.0 * self.ext.eval(f.rho[j]).0;
                }
                t
            })
            .collect();
        for r in &rows {
            for (a, b) in terms.iter_mut().zip(r) {
                *a += b;
            }
        }
        let [i1, i2, iphi, ig] = terms.map(|v| v * da);
        let e = ev.e_tilde;
        let cp = c * ev.p;
        Pohozaev {
            poho1: rel(e, i1, e),
            poho2: rel(e, i2 + cp, e),
            energie1: rel(cp, iphi, cp),
            poho3: rel(cp, ig, cp),
        }
    }

    /// Physical energy with chi -> identity and G~ -> G; None if rho <= 0 somewhere.
    pub fn physical_energy(&self, f: &TorusField2D, ev: &Evaluation) -> Option<f64> {
        if f.rho.iter().any(|&r| !(r > 0.0)) {
            return None;
        }
        let g = &self.grid;
        Some(
            g.da()
                * g.sum(|j| {
                    let r = f.rho[j];
                    0.5 * (r * (ev.p1[j] * ev.p1[j] + ev.p2[j] * ev.p2[j]) + self.model.k(r) * (ev.r1[j] * ev.r1[j] + ev.r2[j] * ev.r2[j]))
                        + self.model.potential(r)
                }),
        )
    }
}

/// (E_tilde, E_reg).
pub fn modified_energy(field: &TorusField2D, model: &FluidModel, eps_reg: f64) -> Result<(f64, f64)> {
    let fun = Functional::new(model, &CutoffSpec::default(), field, eps_reg)?;
    let ev = fun.evaluate(field);
    Ok((ev.e_tilde, ev.e_reg))
}

/// Physical energy E (no cutoff, true potential); requires rho > 0.
pub fn physical_energy(field: &TorusField2D, model: &FluidModel) -> Result<f64> {
    let fun = Functional::new(model, &CutoffSpec::default(), field, 0.0)?;
    let ev = fun.evaluate(field);
    fun.physical_energy(field, &ev).ok_or(Error::RhoNonPositive(field.rho.iter().copied().fold(f64::INFINITY, f64::min)))
}

pub fn variational_gradient(field: &TorusField2D, model: &FluidModel, eps_reg: f64) -> Result<Gradients> {
    let fun = Functional::new(model, &CutoffSpec::default(), field, eps_reg)?;
    let ev = fun.evaluate(field);
    Ok(fun.gradients(field, &ev))
}

/// c0 with E~ >= c0 (||rho - 1||_{H^1}^2 + ||grad phi||^2): chi >= 1/2,
/// K(chi) >= min K on [1/2, 2], G~ >= c1 (rho - 1)^2.
pub fn coercivity_constant(model: &FluidModel, spec: &CutoffSpec) -> Result<f64> {
    let ext = PotentialExtension::new(model, spec)?;
    let kmin = (0..=1000).map(|i| model.k(0.5 + 1.5 * i as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
    Ok((0.25f64).min(0.5 * kmin).min(ext.c1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Iteration budget over all stages.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_schedule")]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub cutoff: CutoffSpec,
    #[serde(default)]
    pub torus: TorusOptions,
}

fn default_tol() -> f64 {
    1e-5
}
fn default_max_iter() -> usize {
    5000
}
fn default_schedule() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5, 0.0]
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            eps_schedule: default_schedule(),
            cutoff: CutoffSpec::default(),
            torus: TorusOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizationReport {
    #[serde(skip)]
    pub field: TorusField2D,
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    pub p_target: f64,
    pub p_achieved: f64,
    /// None when undefined (p = 0).
    pub c: Option<f64>,
    pub e_tilde: f64,
    pub e_reg: f64,
    /// Energy without cutoff/extension, when rho > 0.
    pub e_physical: Option<f64>,
    pub el_residual: f64,
    pub pohozaev: Pohozaev,
    pub sup_defect: f64,
    pub iterations: usize,
    pub stage_iterations: Vec<usize>,
    pub eps_schedule: Vec<f64>,
    /// Accepted E_reg values, one list per stage.
    #[serde(skip)]
    pub history: Vec<Vec<f64>>,
}

/// Minimize from the lump ansatz.
pub fn minimize(model: &FluidModel, p: f64, opts: &MinimizeOptions) -> Result<MinimizationReport> {
    let init = ansatz_from_lump(model, p, &opts.torus)?;
    minimize_from(model, p, init, opts)
}

fn inner(g: &Grid2, a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> f64 {
    g.dot(a.0, b.0) + g.dot(a.1, b.1)
}

/// Preconditioned projected gradient descent on E_reg at fixed momentum,
/// continued along the eps schedule.
pub fn minimize_from(model: &FluidModel, p: f64, init: TorusField2D, opts: &MinimizeOptions) -> Result<MinimizationReport> {
    check_normalized(model)?;
    let mut f = init;
    let mut fun = Functional::new(model, &opts.cutoff, &f, 0.0)?;
    if p == 0.0 {
        let sup = f.sup_defect();
        if sup == 0.0 && f.phi.iter().all(|&v| v == 0.0) {
            let ev = fun.evaluate(&f);
            return Ok(MinimizationReport {
                n1: f.n1,
                n2: f.n2,
                l1: f.l1,
                l2: f.l2,
                p_target: 0.0,
                p_achieved: 0.0,
                c: None,
                e_tilde: ev.e_tilde,
                e_reg: ev.e_reg,
                e_physical: Some(0.0),
                el_residual: 0.0,
                pohozaev: Pohozaev::default(),
                sup_defect: 0.0,
                iterations: 0,
                stage_iterations: vec![0; opts.eps_schedule.len()],
                eps_schedule: opts.eps_schedule.clone(),
                history: vec![],
                field: f,
            });
        }
        // any admissible state at zero momentum relaxes to the constant state
        return minimize_from(model, 0.0, TorusField2D::constant(f.n1, f.n2, f.l1, f.l2), opts);
    }
    // enforce the constraint on the initial field
    {
        let ev = fun.evaluate(&f);
        if ev.p == 0.0 || !ev.p.is_finite() {
            return Err(Error::ConstraintSingular);
        }
        let s = p / ev.p;
        f.phi.iter_mut().for_each(|v| *v *= s);
    }
    let mut total = 0;
    let mut stage_iterations = vec![];
    let mut history = vec![];
    for &eps in &opts.eps_schedule {
        fun.eps_reg = eps;
        let mut t = 1.0f64;
        let mut it = 0;
        let mut hist = vec![];
        let mut ev = fun.evaluate(&f);
        hist.push(ev.e_reg);
        loop {
            let (gr, gp, pr, pp) = fun.gradients(&f, &ev);
            let g = &fun.grid;
            let pp_norm = inner(g, (&pr, &pp), (&pr, &pp));
            if !(pp_norm > 1e-300) {
                return Err(Error::ConstraintSingular);
            }
            let c = inner(g, (&gr, &gp), (&pr, &pp)) / pp_norm;
            let rr: Vec<f64> = gr.iter().zip(&pr).map(|(a, b)| a - c * b).collect();
            let rf: Vec<f64> = gp.iter().zip(&pp).map(|(a, b)| a - c * b).collect();
            let res = (inner(g, (&rr, &rf), (&rr, &rf)) / pp_norm).sqrt();
            if res < opts.tol {
                break;
            }
            if total >= opts.max_iter {
                return Err(Error::MaxIterations { iterations: total, residual: res });
            }
            let cp = if c < 1.0 { c.max(0.0) } else { 1.0 - 1e-6 };
            let (mgr, mgp) = fun.precondition(&gr, &gp, cp);
            let (mpr, mpp) = fun.precondition(&pr, &pp, cp);
            let mu = inner(g, (&pr, &pp), (&mgr, &mgp)) / inner(g, (&pr, &pp), (&mpr, &mpp));
            // d = -M^{-1}(g - mu dP); the slope is evaluated on the projected
            // gradient so that it stays negative down to roundoff
            let qr: Vec<f64> = gr.iter().zip(&pr).map(|(a, b)| a - mu * b).collect();
            let qf: Vec<f64> = gp.iter().zip(&pp).map(|(a, b)| a - mu * b).collect();
            let (mut dr, mut df) = fun.precondition(&qr, &qf, cp);
            dr.iter_mut().chain(df.iter_mut()).for_each(|v| *v = -*v);
            let slope = inner(g, (&qr, &qf), (&dr, &df));
            if !(slope < 0.0) {
                // no descent direction left at this precision
                return Err(Error::MaxIterations { iterations: total, residual: res });
            }
            t = (2.0 * t).min(1.0);
            let accepted = loop {
                let mut trial = f.clone();
                trial.rho.par_iter_mut().zip(dr.par_iter()).for_each(|(a, d)| *a += t * d);
                trial.phi.par_iter_mut().zip(df.par_iter()).for_each(|(a, d)| *a += t * d);
                let tev = fun.evaluate(&trial);
                if tev.p.is_finite() && tev.p != 0.0 {
                    let s = p / tev.p;
                    let (et, er) = fun.energy_with_phi_scale(&trial, &tev, s);
                    if er <= ev.e_reg + 1e-4 * t * slope {
                        trial.phi.par_iter_mut().for_each(|v| *v *= s);
                        break Some((trial, et, er));
                    }
                }
                t *= 0.5;
                if t < 1e-12 {
                    break None;
                }
            };
            let Some((trial, _, _)) = accepted else {
                // line search exhausted: the residual sits at the roundoff floor
                return Err(Error::MaxIterations { iterations: total, residual: res });
            };
            let min = trial.rho.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(Error::RhoNonPositive(min));
            }
            f = trial;
            ev = fun.evaluate(&f);
            if ev.e_reg > *hist.last().unwrap() {
                return Err(Error::MaxIterations { iterations: total, residual: res });
            }
            hist.push(ev.e_reg);
            it += 1;
            total += 1;
        }
        stage_iterations.push(it);
        history.push(hist);
    }
    fun.eps_reg = 0.0;
    finalize(&fun, f, p, total, stage_iterations, opts.eps_schedule.clone(), history)
}

fn finalize(
    fun: &Functional,
    f: TorusField2D,
    p: f64,
    iterations: usize,
    stage_iterations: Vec<usize>,
    eps_schedule: Vec<f64>,
    history: Vec<Vec<f64>>,
) -> Result<MinimizationReport> {
    let ev = fun.evaluate(&f);
    let (gr, gp, pr, pp) = fun.gradients(&f, &ev);
    let g = &fun.grid;
    let pp_norm = inner(g, (&pr, &pp), (&pr, &pp));
    let c = inner(g, (&gr, &gp), (&pr, &pp)) / pp_norm;
    let rr: Vec<f64> = gr.iter().zip(&pr).map(|(a, b)| a - c * b).collect();
    let rf: Vec<f64> = gp.iter().zip(&pp).map(|(a, b)| a - c * b).collect();
    let el_residual = (inner(g, (&rr, &rf), (&rr, &rf)) / pp_norm).sqrt();
    Ok(MinimizationReport {
        n1: f.n1,
        n2: f.n2,
        l1: f.l1,
        l2: f.l2,
        p_target: p,
        p_achieved: ev.p,
        c: Some(c),
        e_tilde: ev.e_tilde,
        e_reg: ev.e_reg,
        e_physical: fun.physical_energy(&f, &ev),
        el_residual,
        pohozaev: fun.pohozaev(&f, &ev, c),
        sup_defect: f.sup_defect(),
        iterations,
        stage_iterations,
        eps_schedule,
        history,
        field: f,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmallnessCheck {
    pub sup_defect: f64,
    /// sup_defect / sqrt(E~); 0 for the constant state.
    pub bound_ratio: f64,
    /// sup_defect >= 1/3: the cutoff is active somewhere.
    pub outside_window: bool,
}

pub fn elliptic_smallness_check(report: &MinimizationReport) -> SmallnessCheck {
    let s = report.sup_defect;
    let bound_ratio = if s == 0.0 { 0.0 } else { s / report.e_tilde.max(0.0).sqrt() };
    SmallnessCheck { sup_defect: s, bound_ratio, outside_window: s >= 1.0 / 3.0 }
}

/// Relative Pohozaev defects of a minimizer (0 for the constant state).
pub fn pohozaev_check_2d(report: &MinimizationReport, model: &FluidModel) -> Result<Pohozaev> {
    let Some(c) = report.c else { return Ok(Pohozaev::default()) };
    let fun = Functional::new(model, &CutoffSpec::default(), &report.field, 0.0)?;
    let ev = fun.evaluate(&report.field);
    Ok(fun.pohozaev(&report.field, &ev, c))
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyRow {
    pub p: f64,
    pub e_tilde_min: f64,
    pub c: Option<f64>,
    pub sup_defect: f64,
    pub el_residual: f64,
    pub iterations: usize,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CurveDiagnostics {
    /// E(p_{i-1}) - 2 E(p_i) + E(p_{i+1}) (spacing-normalized for uneven grids).
    pub second_differences: Vec<f64>,
    /// (p1, p2, E(p1) + E(p2) - E(p1 + p2)) for pairs whose sum is tabulated.
    pub subadditivity: Vec<(f64, f64, f64)>,
    /// Difference quotients of consecutive rows.
    pub slopes: Vec<f64>,
    /// Least-squares fit E = a1 p + a3 p^3.
    pub a1: f64,
    pub a3: f64,
    /// Slope of log(1 - c) against log p.
    pub speed_exponent: f64,
    /// min and max of sup_defect / p^2.
    pub sup_over_p2: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyCurve {
    pub rows: Vec<EnergyRow>,
    pub diagnostics: CurveDiagnostics,
    #[serde(skip)]
    pub reports: Vec<Option<MinimizationReport>>,
}

impl EnergyCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,E_tilde_min,c,sup_defect,el_residual,flags\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                crate::wave1d::fmt17(r.p),
                crate::wave1d::fmt17(r.e_tilde_min),
                crate::wave1d::fmt17(r.c.unwrap_or(f64::NAN)),
                crate::wave1d::fmt17(r.sup_defect),
                crate::wave1d::fmt17(r.el_residual),
                r.flags.join(";")
            ));
        }
        s
    }
}

/// Rescale a minimizer to momentum p on the KP-scaled torus with the same
/// half-width: rho - 1 scales like eps^2, phi like eps, lengths like 1/eps, 1/eps^2.
pub fn rescale_to_momentum(model: &FluidModel, f: &TorusField2D, p_old: f64, p: f64) -> Result<TorusField2D> {
    let (_, _, a2) = lump_scaling(model)?;
    let (e0, e1) = (p_old / a2, p / a2);
    let r = e1 / e0;
    Ok(TorusField2D {
        n1: f.n1,
        n2: f.n2,
        l1: f.l1 / r,
        l2: f.l2 / (r * r),
        rho: f.rho.iter().map(|v| 1.0 + r * r * (v - 1.0)).collect(),
        phi: f.phi.iter().map(|v| r * v).collect(),
    })
}

/// Minimize along an increasing list of momenta. With `warm_start` each row
/// starts from the previous minimizer rescaled to the new momentum; all rows
/// share the torus half-width required by the largest momentum.
pub fn sweep_energy_curve(model: &FluidModel, p_list: &[f64], opts: &MinimizeOptions, warm_start: bool) -> Result<EnergyCurve> {
    if p_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation { field: "p_list".into(), msg: "must be strictly increasing".into() });
    }
    let pmax = p_list.iter().copied().fold(0.0, f64::max);
    let mut o = opts.clone();
    if o.torus.rz.is_none() && pmax > 0.0 {
        o.torus.rz = Some(torus_half_width(model, pmax)?);
    }
    let run = |p: f64, prev: Option<(&MinimizationReport, f64)>| -> Result<MinimizationReport> {
        match prev {
            Some((r, p_old)) if p > 0.0 && p_old > 0.0 => {
                let init = rescale_to_momentum(model, &r.field, p_old, p)?;
                minimize_from(model, p, init, &o)
            }
            _ => minimize(model, p, &o),
        }
    };
    let mut reports: Vec<Option<MinimizationReport>> = vec![];
    let mut rows = vec![];
    if warm_start {
        let mut prev: Option<(MinimizationReport, f64)> = None;
        for &p in p_list {
            let r = run(p, prev.as_ref().map(|(r, q)| (r, *q)));
            if let Ok(rep) = &r {
                prev = Some((rep.clone(), p));
            }
            rows.push(row_of(p, &r));
            reports.push(r.ok());
        }
    } else {
        let results: Vec<Result<MinimizationReport>> = p_list.par_iter().map(|&p| run(p, None)).collect();
        for (&p, r) in p_list.iter().zip(results) {
            rows.push(row_of(p, &r));
            reports.push(r.ok());
        }
    }
    let diagnostics = diagnose(&rows);
    Ok(EnergyCurve { rows, diagnostics, reports })
}

fn row_of(p: f64, r: &Result<MinimizationReport>) -> EnergyRow {
    match r {
        Ok(rep) => {
            let mut flags = vec![];
            if rep.c.is_none() {
                flags.push("c_undefined".to_string());
            }
            if rep.sup_defect >= 1.0 / 3.0 {
                flags.push("outside_window".to_string());
            }
            EnergyRow {
                p,
                e_tilde_min: rep.e_tilde,
                c: rep.c,
                sup_defect: rep.sup_defect,
                el_residual: rep.el_residual,
                iterations: rep.iterations,
                flags,
            }
        }
        Err(e) => EnergyRow {
            p,
            e_tilde_min: f64::NAN,
            c: None,
            sup_defect: f64::NAN,
            el_residual: f64::NAN,
            iterations: 0,
            flags: vec![e.kind().to_string()],
        },
    }
}

fn diagnose(rows: &[EnergyRow]) -> CurveDiagnostics {
    let ok: Vec<&EnergyRow> = rows.iter().filter(|r| r.e_tilde_min.is_finite()).collect();
    let mut d = CurveDiagnostics::default();
    for w in ok.windows(3) {
        let (p0, p1, p2) = (w[0].p, w[1].p, w[2].p);
        let (e0, e1, e2) = (w[0].e_tilde_min, w[1].e_tilde_min, w[2].e_tilde_min);
        let dd = 2.0 * ((e2 - e1) / (p2 - p1) - (e1 - e0) / (p1 - p0)) / (p2 - p0);
        let hbar = 0.5 * (p2 - p0);
        d.second_differences.push(dd * hbar * hbar);
    }
    for w in ok.windows(2) {
        d.slopes.push((w[1].e_tilde_min - w[0].e_tilde_min) / (w[1].p - w[0].p));
    }
    let pos: Vec<&&EnergyRow> = ok.iter().filter(|r| r.p > 0.0).collect();
    for (i, a) in pos.iter().enumerate() {
        for b in &pos[i..] {
            let s = a.p + b.p;
            if let Some(t) = pos.iter().find(|r| (r.p - s).abs() <= 1e-9 * s) {
                d.subadditivity.push((a.p, b.p, a.e_tilde_min + b.e_tilde_min - t.e_tilde_min));
            }
        }
    }
    // normal equations for E = a1 p + a3 p^3
    let (mut s2, mut s4, mut s6, mut y1, mut y3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &pos {
        let p = r.p;
        s2 += p * p;
        s4 += p.powi(4);
        s6 += p.powi(6);
        y1 += p * r.e_tilde_min;
        y3 += p.powi(3) * r.e_tilde_min;
    }
    let det = s2 * s6 - s4 * s4;
    if pos.len() >= 2 && det != 0.0 {
        d.a1 = (y1 * s6 - y3 * s4) / det;
        d.a3 = (s2 * y3 - s4 * y1) / det;
    } else {
        d.a1 = f64::NAN;
        d.a3 = f64::NAN;
    }
    let pts: Vec<(f64, f64)> =
        pos.iter().filter_map(|r| r.c.filter(|c| *c < 1.0).map(|c| (r.p.ln(), (1.0 - c).ln()))).collect();
    d.speed_exponent = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|v| v.0).sum::<f64>() / n;
        let my = pts.iter().map(|v| v.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|v| (v.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let ratios: Vec<f64> = pos.iter().map(|r| r.sup_defect / (r.p * r.p)).collect();
    d.sup_over_p2 = (
        ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    d
}
