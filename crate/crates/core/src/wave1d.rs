//! One-dimensional solitary waves.
//!
//! A wave of speed c satisfies u = c (rho - rho_inf) / rho and the first
//! integral K (rho')^2 / 2 = F(rho) with
//! F(rho) = G(rho) - c^2 (rho - rho_inf)^2 / (2 rho).
//! The half-orbit from the turning point rho_t (simple zero of F) to rho_inf
//! is parametrized in two pieces:
//!
//! * near rho_t: rho = rho_t + sigma s^2, which removes the 1/sqrt(F) endpoint
//!   singularity (F ~ F'(rho_t) (rho - rho_t));
//! * near rho_inf: |rho - rho_inf| = D e^{-tau}, which maps the logarithmic
//!   tail of x(rho) onto a smooth, exponentially decaying integrand.
//!
//! Both pieces are integrated by composite Gauss-Legendre rules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid_model::FluidModel;
use crate::quad::{polish_root, GaussLegendre};

/// F(rho) for speed c.
pub fn potential_f(model: &FluidModel, c: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveDensity(rho));
    }
    Ok(f_derivs(model, c, rho)[0])
}

/// (F, F', F'', F''') at rho.
fn f_derivs(model: &FluidModel, c: f64, rho: f64) -> [f64; 4] {
    let ri = model.rho_inf;
    let c2 = c * c;
    let d = rho - ri;
    let [g, g1, g2, _] = model.g_derivs(rho);
    let r2 = ri * ri;
    [
        model.potential(rho) - c2 * d * d / (2.0 * rho),
        g - 0.5 * c2 * (1.0 - r2 / (rho * rho)),
        g1 - c2 * r2 / rho.powi(3),
        g2 + 3.0 * c2 * r2 / rho.powi(4),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    Depression,
    Elevation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitClass {
    HomoclinicDepression,
    HomoclinicElevation,
    Heteroclinic,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TurningPoint {
    pub rho: f64,
    /// F'(rho) at the root.
    pub slope: f64,
    /// Simple zero with the sign required for a homoclinic orbit.
    pub homoclinic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TurningPointReport {
    pub c: f64,
    pub c_s: f64,
    pub rho_m: Option<TurningPoint>,
    #[serde(rename = "rho_M")]
    pub rho_big_m: Option<TurningPoint>,
    pub classification: OrbitClass,
}

/// |F'| below this marks a double zero (heteroclinic connection).
pub const SLOPE_TOL: f64 = 1e-6;
const SCAN_POINTS: usize = 1000;

/// Locate rho_m = sup{rho < rho_inf : F = 0} and rho_M = inf{rho > rho_inf : F = 0}.
///
/// Supersonic speeds are not an error here: the report simply carries
/// classification `None`.
pub fn find_turning_points(model: &FluidModel, c: f64) -> Result<TurningPointReport> {
    let c_s = model.c_s();
    let c = c.abs();
    let mut report = TurningPointReport { c, c_s, rho_m: None, rho_big_m: None, classification: OrbitClass::None };
    if c >= c_s {
        return Ok(report);
    }
    let ri = model.rho_inf;
    report.rho_m = scan_side(model, c, -1.0, 1e-6 * ri, 0.99 * ri);
    report.rho_big_m = scan_side(model, c, 1.0, 1e-6 * ri, 99.0 * ri);
    if report.rho_m.is_none() && report.rho_big_m.is_none() {
        return Err(Error::BracketScanFailed { lo: 0.01 * ri, hi: ri });
    }
    report.classification = match (report.rho_m, report.rho_big_m) {
        (Some(t), _) if t.homoclinic => OrbitClass::HomoclinicDepression,
        (_, Some(t)) if t.homoclinic => OrbitClass::HomoclinicElevation,
        _ => OrbitClass::Heteroclinic,
    };
    Ok(report)
}

/// Scan outward from rho_inf on a geometric grid of offsets; return the first
/// zero (sign change, or touching double zero).
fn scan_side(model: &FluidModel, c: f64, dir: f64, dmin: f64, dmax: f64) -> Option<TurningPoint> {
    let ri = model.rho_inf;
    let ratio = (dmax / dmin).powf(1.0 / (SCAN_POINTS - 1) as f64);
    let at = |i: usize| ri + dir * dmin * ratio.powi(i as i32);
    let f = |r: f64| f_derivs(model, c, r);
    let mut prev_rho = at(0);
    let mut prev_f = f(prev_rho)[0];
    if !(prev_f > 0.0) {
        return None;
    }
    let mut prev2: Option<(f64, f64)> = None;
    for i in 1..SCAN_POINTS {
        let rho = at(i);
        let fv = f(rho)[0];
        if !fv.is_finite() {
            return None;
        }
        if fv <= 0.0 {
            let root = polish_root(|r| {
                let d = f(r);
                (d[0], d[1])
            }, prev_rho, rho, 1e-15);
            let slope = f(root)[1];
            // depression: F' > 0 at rho_m; elevation: F' < 0 at rho_M
            let homoclinic = dir * slope < 0.0 && slope.abs() >= SLOPE_TOL;
            return Some(TurningPoint { rho: root, slope, homoclinic });
        }
        // touching zero: local minimum of F that reaches (numerically) zero
        if let Some((r2, f2)) = prev2 {
            if prev_f <= f2 && prev_f <= fv {
                let rstar = polish_root(|r| {
                    let d = f(r);
                    (d[1], d[2])
                }, r2, rho, 1e-15);
                let fstar = f(rstar)[0];
                if fstar.abs() <= 1e-10 * (rstar - ri).powi(2).max(1e-300) {
                    return Some(TurningPoint { rho: rstar, slope: f(rstar)[1], homoclinic: false });
                }
            }
        }
        prev2 = Some((prev_rho, prev_f));
        prev_rho = rho;
        prev_f = fv;
    }
    None
}

/// Numerical options for profile construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOptions {
    /// Nodes on each side of the center; the grid has 2 n_half + 1 nodes.
    #[serde(default = "default_n_half")]
    pub n_half: usize,
    /// |rho(+-L) - rho_inf| at the domain ends.
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Total Gauss-Legendre nodes over the half orbit.
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    /// Branch to build; `None` prefers the depression branch.
    #[serde(default)]
    pub kind: Option<WaveKind>,
}

fn default_n_half() -> usize {
    4096
}
fn default_tail_tol() -> f64 {
    1e-10
}
fn default_n_quad() -> usize {
    2048
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { n_half: default_n_half(), tail_tol: default_tail_tol(), n_quad: default_n_quad(), kind: None }
    }
}

const GL_ORDER: usize = 16;

/// Half orbit from the turning point to rho_inf, with cumulative x(q) on the
/// quadrature panels.
#[derive(Clone, Debug)]
pub struct SolitaryWave {
    model: FluidModel,
    c: f64,
    kind: WaveKind,
    rho_turn: f64,
    /// sign(rho_inf - rho_turn)
    sigma: f64,
    /// F'(rho_turn)
    slope: f64,
    f2: f64,
    f3: f64,
    s_mid: f64,
    /// |rho_inf - rho| at the junction of the two pieces
    d_mid: f64,
    gl: GaussLegendre,
    /// panel edges: piece 1 in s on [0, s_mid], piece 2 in tau on [0, tau_end]
    edges: Vec<Edge>,
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    piece: u8,
    q: f64,
    x: f64,
}

impl SolitaryWave {
    /// Build the half orbit; a negative `c` yields the mirrored-velocity wave.
    pub fn new(model: &FluidModel, c: f64, kind: Option<WaveKind>, n_quad: usize) -> Result<Self> {
        let c_s = model.c_s();
        if c.abs() >= c_s {
            return Err(Error::SupersonicSpeed { c, c_s });
        }
        if c == 0.0 {
            return Err(Error::NoHomoclinicOrbit { c, reason: "zero speed".into() });
        }
        let report = find_turning_points(model, c)?;
        let pick = |t: Option<TurningPoint>, k: WaveKind| t.filter(|t| t.homoclinic).map(|t| (t, k));
        let chosen = match kind {
            Some(WaveKind::Depression) => pick(report.rho_m, WaveKind::Depression),
            Some(WaveKind::Elevation) => pick(report.rho_big_m, WaveKind::Elevation),
            None => pick(report.rho_m, WaveKind::Depression).or(pick(report.rho_big_m, WaveKind::Elevation)),
        };
        let Some((tp, kind)) = chosen else {
            return Err(Error::NoHomoclinicOrbit { c, reason: format!("classification {:?}", report.classification) });
        };
        let ri = model.rho_inf;
        let sigma = (ri - tp.rho).signum();
        let [_, _, f2, f3] = f_derivs(model, c, tp.rho);
        let dist = (ri - tp.rho).abs();
        let s_mid = (0.5 * dist).sqrt();
        let d_mid = 0.5 * dist;
        // piece 2 runs until the tail is far below anything measurable
        let tau_end = (d_mid / 1e-13).ln().max(1.0);
        let n_panels = (n_quad / (2 * GL_ORDER)).max(2);
        let mut w = Self {
            model: model.clone(),
            c,
            kind,
            rho_turn: tp.rho,
            sigma,
            slope: tp.slope,
            f2,
            f3,
            s_mid,
            d_mid,
            gl: GaussLegendre::new(GL_ORDER),
            edges: Vec::with_capacity(2 * n_panels + 2),
        };
        let mut x = 0.0;
        w.edges.push(Edge { piece: 1, q: 0.0, x });
        for k in 0..n_panels {
            let a = s_mid * k as f64 / n_panels as f64;
            let b = s_mid * (k + 1) as f64 / n_panels as f64;
            x += w.gl.integrate(a, b, |s| w.dxds(s));
            w.edges.push(Edge { piece: 1, q: b, x });
        }
        w.edges.push(Edge { piece: 2, q: 0.0, x });
        for k in 0..n_panels {
            let a = tau_end * k as f64 / n_panels as f64;
            let b = tau_end * (k + 1) as f64 / n_panels as f64;
            x += w.gl.integrate(a, b, |t| w.dxdtau(t));
            w.edges.push(Edge { piece: 2, q: b, x });
        }
        if !x.is_finite() {
            return Err(Error::QuadratureFailure(format!("non-finite orbit length at c = {c}")));
        }
        Ok(w)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn kind(&self) -> WaveKind {
        self.kind
    }

    pub fn rho_turn(&self) -> f64 {
        self.rho_turn
    }

    pub fn model(&self) -> &FluidModel {
        &self.model
    }

    /// F at rho_turn + delta, using the Taylor expansion around the simple
    /// zero when delta is tiny (avoids cancellation against F(rho_turn) = 0).
    fn f_near_turn(&self, delta: f64) -> f64 {
        let scale = (self.model.rho_inf - self.rho_turn).abs();
        if delta.abs() < 1e-4 * scale {
            delta * (self.slope + delta * (0.5 * self.f2 + delta * self.f3 / 6.0))
        } else {
            f_derivs(&self.model, self.c, self.rho_turn + delta)[0]
        }
    }

    fn rho_s(&self, s: f64) -> f64 {
        self.rho_turn + self.sigma * s * s
    }

    fn rho_tau(&self, tau: f64) -> f64 {
        self.model.rho_inf - self.sigma * self.d_mid * (-tau).exp()
    }

    fn dxds(&self, s: f64) -> f64 {
        let delta = self.sigma * s * s;
        let rho = self.rho_turn + delta;
        let k = self.model.k(rho);
        if s == 0.0 {
            return 2.0 * (k / (2.0 * self.slope.abs())).sqrt();
        }
        let f = self.f_near_turn(delta);
        2.0 * s * (k / (2.0 * f)).sqrt()
    }

    fn dxdtau(&self, tau: f64) -> f64 {
        let dist = self.d_mid * (-tau).exp();
        let rho = self.model.rho_inf - self.sigma * dist;
        let f = f_derivs(&self.model, self.c, rho)[0];
        dist * (self.model.k(rho) / (2.0 * f)).sqrt()
    }

    fn rho_of(&self, piece: u8, q: f64) -> f64 {
        if piece == 1 {
            self.rho_s(q)
        } else {
            self.rho_tau(q)
        }
    }

    fn dx(&self, piece: u8, q: f64) -> f64 {
        if piece == 1 {
            self.dxds(q)
        } else {
            self.dxdtau(q)
        }
    }

    /// Integral over the full line (both halves) of f(rho) dx.
    pub fn integrate_orbit<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut total = 0.0;
        for pair in self.edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.piece != b.piece {
                continue;
            }
            total += self.gl.integrate(a.q, b.q, |q| f(self.rho_of(a.piece, q)) * self.dx(a.piece, q));
        }
        2.0 * total
    }

    /// P = int (rho - rho_inf) u dx by quadrature in the density variable.
    pub fn momentum(&self) -> f64 {
        let ri = self.model.rho_inf;
        let c = self.c;
        self.integrate_orbit(|rho| c * (rho - ri) * (rho - ri) / rho)
    }

    /// E = int rho u^2/2 + K rho'^2/2 + G dx; on the orbit the integrand is 2 G.
    pub fn energy(&self) -> f64 {
        self.integrate_orbit(|rho| 2.0 * self.model.potential(rho))
    }

    /// Half-length at which |rho - rho_inf| = tol.
    pub fn tail_length(&self, tol: f64) -> f64 {
        if tol >= self.d_mid {
            return self.x_of_edge_point(1, self.s_mid * (tol / self.d_mid).min(1.0).sqrt());
        }
        self.x_of_edge_point(2, (self.d_mid / tol).ln())
    }

    fn x_of_edge_point(&self, piece: u8, q: f64) -> f64 {
        let idx = self
            .edges
            .windows(2)
            .position(|p| p[0].piece == piece && p[1].piece == piece && q >= p[0].q && q <= p[1].q);
        match idx {
            Some(i) => {
                let e = self.edges[i];
                e.x + self.gl.integrate(e.q, q, |t| self.dx(piece, t))
            }
            None => {
                // beyond tau_end: extend with the asymptotic constant slope
                let last = *self.edges.last().unwrap();
                last.x + (q - last.q) * self.dx(2, last.q)
            }
        }
    }

    /// rho at signed position x (profile centered at 0).
    pub fn rho_at(&self, x: f64) -> f64 {
        let x = x.abs();
        let last = *self.edges.last().unwrap();
        if x >= last.x {
            let slope = self.dx(2, last.q);
            let tau = last.q + (x - last.x) / slope;
            return self.rho_tau(tau);
        }
        let i = self.edges.partition_point(|e| e.x <= x).saturating_sub(1);
        let mut a = self.edges[i];
        let mut b = self.edges[i + 1];
        if a.piece != b.piece {
            // zero-length junction between pieces
            a = b;
            b = self.edges[i + 2];
        }
        let piece = a.piece;
        // monotone cubic Hermite of the inverse map q(x) as initial guess
        let (da, db) = (1.0 / self.dx(piece, a.q), 1.0 / self.dx(piece, b.q));
        let q0 = hermite_inverse(a.x, b.x, a.q, b.q, da, db, x);
        let (mut lo, mut hi) = (a.q, b.q);
        let mut q = q0.clamp(lo, hi);
        for _ in 0..60 {
            let xq = a.x + self.gl.integrate(a.q, q, |t| self.dx(piece, t));
            let r = xq - x;
            if r > 0.0 {
                hi = q;
            } else {
                lo = q;
            }
            let d = self.dx(piece, q);
            let mut next = q - r / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - q).abs();
            q = next;
            if step <= 1e-15 * (b.q - a.q).abs().max(q.abs()) {
                break;
            }
        }
        self.rho_of(piece, q)
    }

    /// Sample the profile on the uniform grid x_j = (j - n_half) h over [-L, L].
    pub fn profile(&self, opts: &ProfileOptions) -> Result<WaveProfile1D> {
        if opts.n_half < 4 {
            return Err(Error::GridTooCoarse(format!("n_half = {} is too small", opts.n_half)));
        }
        let l = self.tail_length(0.9 * opts.tail_tol);
        let n = opts.n_half;
        let h = l / n as f64;
        let half: Vec<f64> = (0..=n).into_par_iter().map(|j| self.rho_at(j as f64 * h)).collect();
        let mut rho = Vec::with_capacity(2 * n + 1);
        rho.extend(half.iter().rev());
        rho.extend(half.iter().skip(1));
        rho[n] = self.rho_turn;
        let ri = self.model.rho_inf;
        let u = rho.iter().map(|&r| self.c * (r - ri) / r).collect();
        Ok(WaveProfile1D {
            c: self.c,
            rho_inf: ri,
            h,
            l,
            n_half: n,
            rho,
            u,
            rho_turn: self.rho_turn,
            wave_kind: self.kind,
        })
    }
}

/// Cubic Hermite interpolation of q(x) on [xa, xb] with Fritsch-Carlson
/// limiting of the end slopes.
fn hermite_inverse(xa: f64, xb: f64, qa: f64, qb: f64, mut da: f64, mut db: f64, x: f64) -> f64 {
    let hx = xb - xa;
    if hx <= 0.0 {
        return qa;
    }
    let secant = (qb - qa) / hx;
    if secant == 0.0 {
        return qa;
    }
    let (alpha, beta) = (da / secant, db / secant);
    let r = alpha * alpha + beta * beta;
    if r > 9.0 {
        let tau = 3.0 / r.sqrt();
        da *= tau;
        db *= tau;
    }
    let t = (x - xa) / hx;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * qa
        + (t3 - 2.0 * t2 + t) * hx * da
        + (-2.0 * t3 + 3.0 * t2) * qb
        + (t3 - t2) * hx * db
}

/// Sampled solitary-wave profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile1D {
    pub c: f64,
    pub rho_inf: f64,
    pub h: f64,
    /// Half-domain length.
    pub l: f64,
    pub n_half: usize,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub rho_turn: f64,
    pub wave_kind: WaveKind,
}

impl WaveProfile1D {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - self.n_half as f64) * self.h
    }

    /// Rebuild a profile from sampled (rho, u) on the symmetric grid.
    pub fn from_samples(c: f64, rho_inf: f64, h: f64, rho: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if rho.len() != u.len() || rho.len() % 2 == 0 || rho.len() < 9 {
            return Err(Error::GridTooCoarse("profile needs an odd number (>= 9) of samples".into()));
        }
        let n_half = rho.len() / 2;
        let center = rho[n_half];
        let wave_kind = if center <= rho_inf { WaveKind::Depression } else { WaveKind::Elevation };
        Ok(Self { c, rho_inf, h, l: h * n_half as f64, n_half, rho, u, rho_turn: center, wave_kind })
    }

    /// rho at arbitrary x by local 8-point Lagrange interpolation; rho_inf outside [-L, L].
    pub fn sample_rho(&self, x: f64) -> f64 {
        lagrange_sample(&self.rho, self.n_half, self.h, x, self.rho_inf)
    }

    pub fn sample_u(&self, x: f64) -> f64 {
        lagrange_sample(&self.u, self.n_half, self.h, x, 0.0)
    }

    /// h sum (rho - rho_inf) u.
    pub fn momentum_trapezoid(&self) -> f64 {
        self.h * self.rho.iter().zip(&self.u).map(|(r, u)| (r - self.rho_inf) * u).sum::<f64>()
    }

    /// First derivative of rho by 8th-order central differences (zero within
    /// four nodes of the ends, where the tail is flat to tail_tol).
    pub fn rho_x(&self) -> Vec<f64> {
        const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        let n = self.rho.len();
        let mut d = vec![0.0; n];
        for j in 4..n - 4 {
            let mut s = 0.0;
            for (k, w) in W.iter().enumerate() {
                s += w * (self.rho[j + k + 1] - self.rho[j - k - 1]);
            }
            d[j] = s / self.h;
        }
        d
    }

    /// h sum [rho u^2/2 + K rho_x^2/2 + G].
    pub fn energy_trapezoid(&self, model: &FluidModel) -> f64 {
        let rx = self.rho_x();
        self.h
            * self
                .rho
                .iter()
                .zip(&self.u)
                .zip(&rx)
                .map(|((&r, &u), &d)| 0.5 * r * u * u + 0.5 * model.k(r) * d * d + model.potential(r))
                .sum::<f64>()
    }

    /// Terms of the one-dimensional Pohozaev and energy identities on the grid:
    /// (int K rho_x^2 + rho u^2, 2 int G, int rho u^2).
    pub fn pohozaev_terms(&self, model: &FluidModel) -> (f64, f64, f64) {
        let rx = self.rho_x();
        let mut kin = 0.0;
        let mut pot = 0.0;
        let mut ru2 = 0.0;
        for ((&r, &u), &d) in self.rho.iter().zip(&self.u).zip(&rx) {
            kin += model.k(r) * d * d + r * u * u;
            pot += 2.0 * model.potential(r);
            ru2 += r * u * u;
        }
        (kin * self.h, pot * self.h, ru2 * self.h)
    }

    /// Max |-c u + u^2/2 + g - K rho'' - K' rho'^2 / 2| over interior nodes,
    /// derivatives by 4th-order central differences.
    pub fn ode_residual(&self, model: &FluidModel) -> f64 {
        let n = self.rho.len();
        let h = self.h;
        let r = &self.rho;
        let mut worst = 0.0f64;
        for j in 2..n - 2 {
            let d1 = (-r[j + 2] + 8.0 * r[j + 1] - 8.0 * r[j - 1] + r[j - 2]) / (12.0 * h);
            let d2 = (-r[j + 2] + 16.0 * r[j + 1] - 30.0 * r[j] + 16.0 * r[j - 1] - r[j - 2]) / (12.0 * h * h);
            let [k, k1, _] = model.k_derivs(r[j]);
            let u = self.u[j];
            let res = -self.c * u + 0.5 * u * u + model.g(r[j]) - k * d2 - 0.5 * k1 * d1 * d1;
            worst = worst.max(res.abs());
        }
        worst
    }
}

fn lagrange_sample(v: &[f64], n_half: usize, h: f64, x: f64, outside: f64) -> f64 {
    let n = v.len();
    let pos = x / h + n_half as f64;
    if pos < 0.0 || pos > (n - 1) as f64 {
        return outside;
    }
    let base = (pos.floor() as isize - 3).clamp(0, n as isize - 8) as usize;
    let mut s = 0.0;
    for i in 0..8 {
        let xi = (base + i) as f64;
        if (pos - xi).abs() < 1e-14 {
            return v[base + i];
        }
        let mut w = 1.0;
        for j in 0..8 {
            if j != i {
                let xj = (base + j) as f64;
                w *= (pos - xj) / (xi - xj);
            }
        }
        s += w * v[base + i];
    }
    s
}

/// Profile of the (preferred-branch) solitary wave of speed c.
pub fn build_profile(model: &FluidModel, c: f64, opts: &ProfileOptions) -> Result<WaveProfile1D> {
    SolitaryWave::new(model, c, opts.kind, opts.n_quad)?.profile(opts)
}

pub fn momentum_of_speed(model: &FluidModel, c: f64) -> Result<f64> {
    let sign = c.signum();
    Ok(sign * SolitaryWave::new(model, c.abs(), None, default_n_quad())?.momentum())
}

pub fn energy_of_speed(model: &FluidModel, c: f64) -> Result<f64> {
    Ok(SolitaryWave::new(model, c.abs(), None, default_n_quad())?.energy())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub c: f64,
    pub p: f64,
    pub e: f64,
    pub m: f64,
    pub dpdc: f64,
    pub dedc: f64,
    /// m''(c) by Richardson-extrapolated second differences.
    pub d2mdc2: f64,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveTolerances {
    pub fd_step: f64,
    pub fd_step_second: f64,
    pub n_quad: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeedCurve {
    pub model: FluidModel,
    pub kind: Option<WaveKind>,
    pub tolerances: CurveTolerances,
    pub rows: Vec<CurveRow>,
}

struct RowEval<'a> {
    model: &'a FluidModel,
    kind: Option<WaveKind>,
    n_quad: usize,
}

impl RowEval<'_> {
    fn pe(&self, c: f64) -> Result<(f64, f64)> {
        let w = SolitaryWave::new(self.model, c, self.kind, self.n_quad)?;
        Ok((w.momentum(), w.energy()))
    }
}

/// Tabulate P, E, m = E - cP and Richardson derivatives at each speed.
/// Rows whose wave does not exist are flagged rather than aborting.
pub fn speed_curve(model: &FluidModel, c_list: &[f64], kind: Option<WaveKind>) -> SpeedCurve {
    let c_s = model.c_s();
    let h1 = 1e-4 * c_s;
    let h2 = 1e-3 * c_s;
    let ev = RowEval { model, kind, n_quad: default_n_quad() };
    let rows = c_list
        .par_iter()
        .map(|&c| {
            let nan = f64::NAN;
            let mut row = CurveRow { c, p: nan, e: nan, m: nan, dpdc: nan, dedc: nan, d2mdc2: nan, flags: vec![] };
            let (p, e) = match ev.pe(c) {
                Ok(v) => v,
                Err(err) => {
                    row.flags.push(err.kind().to_string());
                    return row;
                }
            };
            row.p = p;
            row.e = e;
            row.m = e - c * p;
            let first = |h: f64| -> Result<(f64, f64)> {
                let (pp, ep) = ev.pe(c + h)?;
                let (pm, em) = ev.pe(c - h)?;
                Ok(((pp - pm) / (2.0 * h), (ep - em) / (2.0 * h)))
            };
            let second = |h: f64| -> Result<f64> {
                let (pp, ep) = ev.pe(c + h)?;
                let (pm, em) = ev.pe(c - h)?;
                let mp = ep - (c + h) * pp;
                let mm = em - (c - h) * pm;
                Ok((mp - 2.0 * row.m + mm) / (h * h))
            };
            match (first(h1), first(0.5 * h1)) {
                (Ok((p1, e1)), Ok((p2, e2))) => {
                    row.dpdc = (4.0 * p2 - p1) / 3.0;
                    row.dedc = (4.0 * e2 - e1) / 3.0;
                }
                _ => row.flags.push("derivative_unavailable".into()),
            }
            match (second(h2), second(0.5 * h2)) {
                (Ok(a), Ok(b)) => row.d2mdc2 = (4.0 * b - a) / 3.0,
                _ => row.flags.push("second_derivative_unavailable".into()),
            }
            row
        })
        .collect();
    SpeedCurve {
        model: model.clone(),
        kind,
        tolerances: CurveTolerances { fd_step: h1, fd_step_second: h2, n_quad: default_n_quad() },
        rows,
    }
}

impl SpeedCurve {
    /// CSV with header `c,P,E,m,dPdc,flags`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c,P,E,m,dPdc,flags\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(r.c),
                fmt17(r.p),
                fmt17(r.e),
                fmt17(r.m),
                fmt17(r.dpdc),
                r.flags.join(";")
            ));
        }
        s
    }
}

/// Float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub c: f64,
    pub dpdc: f64,
    pub tol: f64,
    pub verdict: Stability,
}

/// Sign of dP/dc with a dead band of 1e-6 |P| / c_s. Between tabulated rows
/// P and dP/dc are interpolated linearly.
pub fn stability_verdict(curve: &SpeedCurve, c: f64) -> Result<StabilityVerdict> {
    let rows: Vec<&CurveRow> = curve.rows.iter().filter(|r| r.dpdc.is_finite()).collect();
    let (lo, hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.c, b.c),
        _ => return Err(Error::SpeedOutsideCurve { c, lo: f64::NAN, hi: f64::NAN }),
    };
    if !(c >= lo && c <= hi) {
        return Err(Error::SpeedOutsideCurve { c, lo, hi });
    }
    let i = rows.partition_point(|r| r.c <= c).saturating_sub(1).min(rows.len().saturating_sub(2));
    let (dpdc, p) = if rows.len() == 1 || (rows[i].c - c).abs() <= 1e-12 * c.abs().max(1.0) {
        (rows[i].dpdc, rows[i].p)
    } else {
        let (a, b) = (rows[i], rows[i + 1]);
        let t = (c - a.c) / (b.c - a.c);
        (a.dpdc + t * (b.dpdc - a.dpdc), a.p + t * (b.p - a.p))
    };
    let tol = 1e-6 * p.abs() / curve.model.c_s();
    Ok(StabilityVerdict { c, dpdc, tol, verdict: classify(dpdc, tol) })
}

pub fn classify(dpdc: f64, tol: f64) -> Stability {
    if dpdc < -tol {
        Stability::Stable
    } else if dpdc > tol {
        Stability::Unstable
    } else {
        Stability::Inconclusive
    }
}
