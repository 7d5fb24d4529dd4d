//! Pseudo-spectral time integration of the 1D Euler-Korteweg system
//!
//! rho_t = -(rho u)_x,
//! u_t   = -(u^2/2 + g(rho) - K(rho) rho_xx - K'(rho) rho_x^2 / 2)_x
//!
//! on a periodic domain, with classical RK4 in time and 2/3-rule dealiasing.
//! Two real fields are always packed into one complex FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid_model::FluidModel;
use crate::wave1d::{SolitaryWave, WaveKind, WaveProfile1D};

/// Densities at or below this abort the run.
pub const RHO_FLOOR: f64 = 1e-3;
pub const CFL_SAFETY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub e: f64,
    pub p: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    /// Period; nodes sit at x_j = -period/2 + j h.
    pub period: f64,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub conserved_ref: Option<Conserved>,
}

impl EvolutionState {
    pub fn new(period: f64, rho: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let n = rho.len();
        if n < 4 || !n.is_power_of_two() || u.len() != n {
            return Err(Error::GridTooCoarse(format!("need a power-of-two node count, got {n}")));
        }
        Ok(Self { t: 0.0, period, rho, u, conserved_ref: None })
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    pub fn h(&self) -> f64 {
        self.period / self.n() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.period + j as f64 * self.h()
    }

    pub fn constant(period: f64, n: usize, rho_inf: f64) -> Result<Self> {
        Self::new(period, vec![rho_inf; n], vec![0.0; n])
    }
}

/// FFT plans, wavenumbers and scratch for one grid size.
pub struct Evolver {
    model: FluidModel,
    n: usize,
    period: f64,
    k: Vec<f64>,
    mask: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    buf2: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Evolver {
    pub fn new(model: &FluidModel, n: usize, period: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::GridTooCoarse(format!("need a power-of-two node count, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let k: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * m / period
            })
            .collect();
        let cut = n / 3;
        let mask = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j } else { n - j };
                m <= cut && !(j == n / 2)
            })
            .collect();
        Ok(Self {
            model: model.clone(),
            n,
            period,
            k,
            mask,
            fwd,
            inv,
            buf: vec![Complex64::new(0.0, 0.0); n],
            buf2: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn for_state(model: &FluidModel, state: &EvolutionState) -> Result<Self> {
        Self::new(model, state.n(), state.period)
    }

    fn check(&self, state: &EvolutionState) {
        assert_eq!(state.n(), self.n, "state grid does not match the evolver");
    }

    pub fn h(&self) -> f64 {
        self.period / self.n as f64
    }

    /// Largest admissible RK4 step for the current density.
    pub fn dt_bound(&self, state: &EvolutionState) -> f64 {
        let kmax = state.rho.iter().fold(0.0f64, |a, &r| a.max(self.model.k(r)));
        let h = self.h();
        CFL_SAFETY * h * h / (PI * PI * kmax)
    }

    /// Project both fields onto the dealiased band.
    pub fn dealias(&mut self, rho: &mut [f64], u: &mut [f64]) {
        for j in 0..self.n {
            self.buf[j] = Complex64::new(rho[j], u[j]);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        for j in 0..self.n {
            if !self.mask[j] {
                self.buf[j] = Complex64::new(0.0, 0.0);
            }
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        let s = 1.0 / self.n as f64;
        for j in 0..self.n {
            rho[j] = self.buf[j].re * s;
            u[j] = self.buf[j].im * s;
        }
    }

    /// Spectral (rho_x, rho_xx), band-limited.
    pub fn derivatives(&mut self, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        for j in 0..n {
            self.buf[j] = Complex64::new(rho[j], 0.0);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        // ik f^ + i (-k^2 f^): real part of the inverse is f_x, imaginary f_xx
        let i = Complex64::new(0.0, 1.0);
        for j in 0..n {
            let kk = self.k[j];
            self.buf[j] = if self.mask[j] { self.buf[j] * (i * kk - i * kk * kk) } else { Complex64::new(0.0, 0.0) };
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        let s = 1.0 / n as f64;
        (self.buf.iter().map(|z| z.re * s).collect(), self.buf.iter().map(|z| z.im * s).collect())
    }

    /// (drho/dt, du/dt).
    pub fn rhs(&mut self, rho: &[f64], u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > RHO_FLOOR) {
            return Err(Error::VacuumApproached { t, min, floor: RHO_FLOOR });
        }
        let (rx, rxx) = self.derivatives(rho);
        for j in 0..n {
            let [k, k1, _] = self.model.k_derivs(rho[j]);
            let f1 = rho[j] * u[j];
            let f2 = 0.5 * u[j] * u[j] + self.model.g(rho[j]) - k * rxx[j] - 0.5 * k1 * rx[j] * rx[j];
            self.buf2[j] = Complex64::new(f1, f2);
        }
        self.fwd.process_with_scratch(&mut self.buf2, &mut self.scratch);
        // unpack the two real spectra, apply -ik, repack as A + iB
        let i = Complex64::new(0.0, 1.0);
        for j in 0..n {
            let jm = (n - j) % n;
            let z = self.buf2[j];
            let zc = self.buf2[jm].conj();
            let a = 0.5 * (z + zc);
            let b = -0.5 * i * (z - zc);
            let d = -i * self.k[j];
            self.buf[j] = if self.mask[j] { d * a + i * (d * b) } else { Complex64::new(0.0, 0.0) };
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        let s = 1.0 / n as f64;
        Ok((self.buf.iter().map(|z| z.re * s).collect(), self.buf.iter().map(|z| z.im * s).collect()))
    }

    /// One classical RK4 step.
    pub fn step(&mut self, state: &mut EvolutionState, dt: f64) -> Result<()> {
        self.check(state);
        let bound = self.dt_bound(state);
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound });
        }
        let n = self.n;
        let t = state.t;
        let (k1r, k1u) = self.rhs(&state.rho, &state.u, t)?;
        let stage = |base: &[f64], k: &[f64], a: f64| -> Vec<f64> { (0..n).map(|j| base[j] + a * k[j]).collect() };
        let (r2, u2) = (stage(&state.rho, &k1r, 0.5 * dt), stage(&state.u, &k1u, 0.5 * dt));
        let (k2r, k2u) = self.rhs(&r2, &u2, t + 0.5 * dt)?;
        let (r3, u3) = (stage(&state.rho, &k2r, 0.5 * dt), stage(&state.u, &k2u, 0.5 * dt));
        let (k3r, k3u) = self.rhs(&r3, &u3, t + 0.5 * dt)?;
        let (r4, u4) = (stage(&state.rho, &k3r, dt), stage(&state.u, &k3u, dt));
        let (k4r, k4u) = self.rhs(&r4, &u4, t + dt)?;
        let w = dt / 6.0;
        for j in 0..n {
            state.rho[j] += w * (k1r[j] + 2.0 * k2r[j] + 2.0 * k3r[j] + k4r[j]);
            state.u[j] += w * (k1u[j] + 2.0 * k2u[j] + 2.0 * k3u[j] + k4u[j]);
        }
        state.t += dt;
        let min = state.rho.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > RHO_FLOOR) {
            return Err(Error::VacuumApproached { t: state.t, min, floor: RHO_FLOOR });
        }
        Ok(())
    }

    /// Advance to `t_end` with equal steps not exceeding the CFL bound.
    pub fn advance(&mut self, state: &mut EvolutionState, t_end: f64) -> Result<()> {
        let span = t_end - state.t;
        if span <= 0.0 {
            return Ok(());
        }
        let steps = (span / self.dt_bound(state)).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            let bound = self.dt_bound(state);
            if dt > bound {
                // density grew where K increases: subdivide the remaining span
                return self.advance(state, t_end);
            }
            self.step(state, dt)?;
        }
        state.t = t_end;
        Ok(())
    }

    /// (E, P, mass) by trapezoid sums with spectral rho_x.
    pub fn conserved(&mut self, state: &EvolutionState) -> Conserved {
        self.check(state);
        let (rx, _) = self.derivatives(&state.rho);
        let ri = self.model.rho_inf;
        let h = self.h();
        let (mut e, mut p, mut mass) = (0.0, 0.0, 0.0);
        for j in 0..self.n {
            let (r, u) = (state.rho[j], state.u[j]);
            e += 0.5 * (r * u * u + self.model.k(r) * rx[j] * rx[j]) + self.model.potential(r);
            p += (r - ri) * u;
            mass += r - ri;
        }
        Conserved { e: e * h, p: p * h, mass: mass * h }
    }

    fn spectrum(&mut self, rho: &[f64], u: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n;
        for j in 0..n {
            self.buf[j] = Complex64::new(rho[j], u[j]);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        let mut a = vec![Complex64::new(0.0, 0.0); n];
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        let i = Complex64::new(0.0, 1.0);
        for j in 0..n {
            let z = self.buf[j];
            let zc = self.buf[(n - j) % n].conj();
            a[j] = 0.5 * (z + zc);
            b[j] = -0.5 * i * (z - zc);
        }
        (a, b)
    }

    /// inf over shifts y of the discrete H^1 x L^2 distance between
    /// (rho, u)(. + y) and the reference. Returns (dist, y) with y in [-period/2, period/2).
    pub fn orbital_distance(&mut self, state: &EvolutionState, reference: &EvolutionState) -> (f64, f64) {
        self.check(state);
        self.check(reference);
        let n = self.n;
        let ri = self.model.rho_inf;
        let dr: Vec<f64> = state.rho.iter().map(|r| r - ri).collect();
        let dp: Vec<f64> = reference.rho.iter().map(|r| r - ri).collect();
        let (sr, su) = self.spectrum(&dr, &state.u);
        let (pr, pu) = self.spectrum(&dp, &reference.u);
        let w: Vec<f64> = self.k.iter().map(|k| 1.0 + k * k).collect();
        // cross term X_k; C(y) = Re sum X_k e^{i k y}
        let x: Vec<Complex64> = (0..n).map(|j| w[j] * sr[j] * pr[j].conj() + su[j] * pu[j].conj()).collect();
        self.buf.copy_from_slice(&x);
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        let h = self.h();
        let (jbest, _) = self.buf.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, z)| if z.re > acc.1 { (j, z.re) } else { acc });
        // parabolic refinement on the sampled correlation
        let cm = self.buf[(jbest + n - 1) % n].re;
        let c0 = self.buf[jbest].re;
        let cp = self.buf[(jbest + 1) % n].re;
        let denom = cm - 2.0 * c0 + cp;
        let mut y = jbest as f64 * h;
        if denom < 0.0 {
            y += 0.5 * h * (cm - cp) / denom;
        }
        // Newton on C'(y) = 0 with exact spectral evaluation
        for _ in 0..4 {
            let (mut d1, mut d2) = (0.0, 0.0);
            for j in 0..n {
                let kk = self.k[j];
                let e = Complex64::from_polar(1.0, kk * y);
                let z = x[j] * e;
                d1 += -kk * z.im;
                d2 += -kk * kk * z.re;
            }
            if d2 >= 0.0 {
                break;
            }
            let step = -d1 / d2;
            if step.abs() > h {
                break;
            }
            y += step;
            if step.abs() < 1e-15 * self.period {
                break;
            }
        }
        let mut acc = 0.0;
        for j in 0..n {
            let e = Complex64::from_polar(1.0, self.k[j] * y);
            acc += w[j] * (sr[j] * e - pr[j]).norm_sqr() + (su[j] * e - pu[j]).norm_sqr();
        }
        let dist = (acc * self.period / (n as f64 * n as f64)).sqrt();
        let mut y = y.rem_euclid(self.period);
        if y >= 0.5 * self.period {
            y -= self.period;
        }
        (dist, y)
    }

    /// Discrete H^1 x L^2 norm of (r, v).
    pub fn h1l2_norm(&mut self, r: &[f64], v: &[f64]) -> f64 {
        let (a, b) = self.spectrum(r, v);
        let n = self.n as f64;
        let s: f64 = (0..self.n).map(|j| (1.0 + self.k[j] * self.k[j]) * a[j].norm_sqr() + b[j].norm_sqr()).sum();
        (s * self.period / (n * n)).sqrt()
    }
}

pub fn rhs(state: &EvolutionState, model: &FluidModel) -> Result<(Vec<f64>, Vec<f64>)> {
    Evolver::for_state(model, state)?.rhs(&state.rho, &state.u, state.t)
}

pub fn step(state: &EvolutionState, model: &FluidModel, dt: f64) -> Result<EvolutionState> {
    let mut s = state.clone();
    Evolver::for_state(model, state)?.step(&mut s, dt)?;
    Ok(s)
}

pub fn conserved_quantities(state: &EvolutionState, model: &FluidModel) -> Result<Conserved> {
    Ok(Evolver::for_state(model, state)?.conserved(state))
}

pub fn orbital_distance(state: &EvolutionState, profile: &EvolutionState, model: &FluidModel) -> Result<(f64, f64)> {
    Ok(Evolver::for_state(model, state)?.orbital_distance(state, profile))
}

/// Sample a tabulated profile on a periodic grid centered at x = 0.
pub fn embed_profile(profile: &WaveProfile1D, n: usize, period: f64) -> Result<EvolutionState> {
    let h = period / n as f64;
    let rho = (0..n).map(|j| profile.sample_rho(-0.5 * period + j as f64 * h)).collect();
    let u = (0..n).map(|j| profile.sample_u(-0.5 * period + j as f64 * h)).collect();
    EvolutionState::new(period, rho, u)
}

/// Evaluate an exact solitary wave on a periodic grid, centered at `shift`.
pub fn embed_wave(wave: &SolitaryWave, n: usize, period: f64, shift: f64) -> Result<EvolutionState> {
    let h = period / n as f64;
    let ri = wave.model().rho_inf;
    let c = wave.c();
    let rho: Vec<f64> = (0..n)
        .map(|j| {
            let mut x = -0.5 * period + j as f64 * h - shift;
            x -= period * (x / period).round();
            wave.rho_at(x)
        })
        .collect();
    let u = rho.iter().map(|&r| c * (r - ri) / r).collect();
    EvolutionState::new(period, rho, u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationShape {
    /// sin(2 pi mode x / period) on rho.
    Sine { mode: usize },
    /// exp(-(x/width)^2) on rho.
    Gaussian { width: f64 },
    /// Random low-mode combination under a Gaussian envelope, on both fields.
    Random { modes: usize, width: f64 },
}

impl Default for PerturbationShape {
    fn default() -> Self {
        PerturbationShape::Gaussian { width: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentOptions {
    pub delta: f64,
    #[serde(default)]
    pub shape: PerturbationShape,
    pub horizon: f64,
    /// Node count; chosen from the tail decay rate when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "default_escape")]
    pub escape_factor: f64,
    #[serde(default = "default_close")]
    pub close_factor: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kind: Option<WaveKind>,
    /// Keep every k-th sample as a snapshot (0 = none).
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_sample_dt() -> f64 {
    0.5
}
fn default_escape() -> f64 {
    100.0
}
fn default_close() -> f64 {
    5.0
}
fn default_tail_tol() -> f64 {
    1e-10
}

impl ExperimentOptions {
    pub fn new(delta: f64, horizon: f64) -> Self {
        Self {
            delta,
            shape: PerturbationShape::default(),
            horizon,
            n: None,
            sample_dt: default_sample_dt(),
            escape_factor: default_escape(),
            close_factor: default_close(),
            tail_tol: default_tail_tol(),
            seed: 0,
            kind: None,
            snapshot_stride: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    RemainedClose,
    Escaped { t_escape: f64 },
    SolverAbort { t: f64 },
    /// Neither close throughout nor escaped before the horizon.
    Intermediate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Drift {
    pub de_rel: f64,
    pub dp: f64,
    pub dmass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub c: f64,
    pub delta: f64,
    pub n: usize,
    pub period: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub orbital_dist: Vec<f64>,
    pub shifts: Vec<f64>,
    pub drifts: Vec<Drift>,
    pub max_drift: Drift,
    /// Drifts stayed below 1e-6 over the run.
    pub conservation_ok: bool,
    pub outcome: Outcome,
    #[serde(skip)]
    pub snapshots: Vec<EvolutionState>,
}

/// Smallest power of two giving at least 16 nodes per tail e-folding length.
pub fn resolving_node_count(model: &FluidModel, c: f64, period: f64) -> usize {
    let ri = model.rho_inf;
    let rate = ((model.c_s().powi(2) - c * c) / (ri * model.k(ri))).sqrt();
    let h_max = 1.0 / (16.0 * rate);
    ((period / h_max).ceil() as usize).next_power_of_two().max(64)
}

fn perturbation(shape: &PerturbationShape, state: &EvolutionState, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = state.n();
    let period = state.period;
    match *shape {
        PerturbationShape::Sine { mode } => {
            let r = (0..n).map(|j| (2.0 * PI * mode as f64 * state.x(j) / period).sin()).collect();
            (r, vec![0.0; n])
        }
        PerturbationShape::Gaussian { width } => {
            let r = (0..n).map(|j| (-(state.x(j) / width).powi(2)).exp()).collect();
            (r, vec![0.0; n])
        }
        PerturbationShape::Random { modes, width } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = vec![0.0; n];
            let mut v = vec![0.0; n];
            for m in 1..=modes.max(1) {
                let (a, pa, b, pb): (f64, f64, f64, f64) =
                    (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI));
                for j in 0..n {
                    let x = state.x(j);
                    let env = (-(x / width).powi(2)).exp();
                    let kx = m as f64 * x / width;
                    r[j] += env * a * (kx + pa).cos();
                    v[j] += env * b * (kx + pb).cos();
                }
            }
            (r, v)
        }
    }
}

/// Evolve the wave of speed c plus a perturbation of H^1 x L^2 size delta
/// and monitor the orbital distance.
pub fn stability_experiment(model: &FluidModel, c: f64, opts: &ExperimentOptions) -> Result<StabilityReport> {
    let wave = SolitaryWave::new(model, c, opts.kind, 2048)?;
    let period = 4.0 * wave.tail_length(opts.tail_tol);
    let needed = resolving_node_count(model, c, period);
    let n = opts.n.unwrap_or(needed);
    if n < needed {
        return Err(Error::GridTooCoarse(format!("{n} nodes do not resolve the tail (need {needed})")));
    }
    let reference = embed_wave(&wave, n, period, 0.0)?;
    run_experiment(model, c, reference, opts)
}

/// Same experiment around a sampled profile (e.g. one read back from disk),
/// embedded on a period of four half-domains.
pub fn stability_experiment_from_profile(model: &FluidModel, profile: &WaveProfile1D, opts: &ExperimentOptions) -> Result<StabilityReport> {
    let period = 4.0 * profile.l;
    let needed = resolving_node_count(model, profile.c, period);
    let n = opts.n.unwrap_or(needed);
    if n < needed {
        return Err(Error::GridTooCoarse(format!("{n} nodes do not resolve the tail (need {needed})")));
    }
    let reference = embed_profile(profile, n, period)?;
    run_experiment(model, profile.c, reference, opts)
}

fn run_experiment(model: &FluidModel, c: f64, mut reference: EvolutionState, opts: &ExperimentOptions) -> Result<StabilityReport> {
    let (n, period) = (reference.n(), reference.period);
    let mut ev = Evolver::new(model, n, period)?;
    {
        let (r, u) = (&mut reference.rho.clone(), &mut reference.u.clone());
        ev.dealias(r, u);
        reference.rho = r.clone();
        reference.u = u.clone();
    }
    let mut state = reference.clone();
    if opts.delta != 0.0 {
        let (mut pr, mut pu) = perturbation(&opts.shape, &state, opts.seed);
        ev.dealias(&mut pr, &mut pu);
        let norm = ev.h1l2_norm(&pr, &pu);
        for j in 0..n {
            state.rho[j] += opts.delta * pr[j] / norm;
            state.u[j] += opts.delta * pu[j] / norm;
        }
    }
    let c0 = ev.conserved(&state);
    state.conserved_ref = Some(c0);
    let dt = ev.dt_bound(&state);
    let mut report = StabilityReport {
        c,
        delta: opts.delta,
        n,
        period,
        dt,
        times: vec![],
        orbital_dist: vec![],
        shifts: vec![],
        drifts: vec![],
        max_drift: Drift { de_rel: 0.0, dp: 0.0, dmass: 0.0 },
        conservation_ok: true,
        outcome: Outcome::RemainedClose,
        snapshots: vec![],
    };
    let escape = opts.escape_factor * opts.delta.abs();
    let close = opts.close_factor * opts.delta.abs();
    let close_abs = close.max(1e-8);
    let mut ever_far = false;
    let samples = (opts.horizon / opts.sample_dt).ceil().max(1.0) as usize;
    for s in 0..=samples {
        if s > 0 {
            let t_next = (s as f64 * opts.sample_dt).min(opts.horizon);
            match ev.advance(&mut state, t_next) {
                Ok(()) => {}
                Err(Error::VacuumApproached { t, .. }) => {
                    report.outcome = Outcome::SolverAbort { t };
                    return Ok(report);
                }
                Err(e) => return Err(e),
            }
        }
        let (d, y) = ev.orbital_distance(&state, &reference);
        let q = ev.conserved(&state);
        let drift = Drift { de_rel: (q.e - c0.e).abs() / c0.e.abs(), dp: (q.p - c0.p).abs(), dmass: (q.mass - c0.mass).abs() };
        report.max_drift.de_rel = report.max_drift.de_rel.max(drift.de_rel);
        report.max_drift.dp = report.max_drift.dp.max(drift.dp);
        report.max_drift.dmass = report.max_drift.dmass.max(drift.dmass);
        if drift.de_rel >= 1e-6 || drift.dp >= 1e-6 || drift.dmass >= 1e-6 {
            report.conservation_ok = false;
        }
        report.times.push(state.t);
        report.orbital_dist.push(d);
        report.shifts.push(y);
        report.drifts.push(drift);
        if opts.snapshot_stride > 0 && s % opts.snapshot_stride == 0 {
            report.snapshots.push(state.clone());
        }
        if opts.delta != 0.0 && d > escape {
            report.outcome = Outcome::Escaped { t_escape: state.t };
            return Ok(report);
        }
        if d >= close_abs {
            ever_far = true;
        }
    }
    if ever_far {
        report.outcome = Outcome::Intermediate;
    }
    Ok(report)
}
