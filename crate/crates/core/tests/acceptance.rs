//! Acceptance suite. Each criterion prints one `CRITERION n: PASS|FAIL|BLOCKED`
//! line on stderr (uncaptured) and asserts its own verdict. Criteria run one
//! at a time so that runtimes are measured on an otherwise idle pool.

use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use ek_core::evolve1d::{stability_experiment, ExperimentOptions, Outcome};
use ek_core::fluid_model::{CapillarityLaw, FluidModel, PressureLaw};
use ek_core::io;
use ek_core::minimize2d::{self, EnergyCurve, MinimizeOptions, TorusOptions};
use ek_core::spectral1d::{assemble, essential_spectrum_floor, kernel_check, negative_eigencount};
use ek_core::wave1d::{self, ProfileOptions, Stability, WaveKind};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, status: &str, detail: &str, elapsed: Duration) {
    let line = format!("CRITERION {n}: {status} ({:.1} s) {detail}\n", elapsed.as_secs_f64());
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
}

fn verdict(n: u32, ok: bool, detail: String, t0: Instant) {
    report(n, if ok { "PASS" } else { "FAIL" }, &detail, t0.elapsed());
    assert!(ok, "criterion {n}: {detail}");
}

fn gp() -> FluidModel {
    FluidModel::gross_pitaevskii(1.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

const SPEEDS: [f64; 3] = [0.3, 0.5, 0.7];

#[test]
fn criterion_1_profile_construction() {
    let _g = serial();
    let t0 = Instant::now();
    let m = gp();
    let mut ok = true;
    let mut detail = String::new();
    for c in SPEEDS {
        let w = wave1d::SolitaryWave::new(&m, c, None, 2048).unwrap();
        let prof = w.profile(&ProfileOptions { n_half: 4096, ..Default::default() }).unwrap();
        let res = prof.ode_residual(&m);
        let dp = rel(prof.momentum_trapezoid(), w.momentum());
        let de = rel(prof.energy_trapezoid(&m), w.energy());
        ok &= res < 1e-6 && dp < 1e-8 && de < 1e-8;
        detail += &format!("[c={c}: residual {res:.2e}, dP {dp:.2e}, dE {de:.2e}] ");
    }
    let el = t0.elapsed();
    ok &= el < Duration::from_secs(10);
    verdict(1, ok, detail, t0);
}

#[test]
fn criterion_2_speed_curve_identities() {
    let _g = serial();
    let t0 = Instant::now();
    let cs: Vec<f64> = (0..21).map(|i| 0.2 + 0.7 * i as f64 / 20.0).collect();
    let curve = wave1d::speed_curve(&gp(), &cs, None);
    let mut worst_m = 0.0f64;
    let mut worst_e = 0.0f64;
    for r in &curve.rows[1..20] {
        worst_m = worst_m.max((r.d2mdc2 + r.dpdc).abs() / r.dpdc.abs());
        worst_e = worst_e.max((r.dedc - r.c * r.dpdc).abs() / r.dedc.abs());
    }
    let ok = worst_m < 1e-4 && worst_e < 1e-4 && t0.elapsed() < Duration::from_secs(60);
    verdict(2, ok, format!("max |m''+P'|/|P'| = {worst_m:.2e}, max |E'-cP'|/|E'| = {worst_e:.2e}"), t0);
}

#[test]
fn criterion_3_spectral_assumptions() {
    let _g = serial();
    let t0 = Instant::now();
    let m = gp();
    let mut ok = true;
    let mut detail = String::new();
    for c in SPEEDS {
        let opts = ProfileOptions { n_half: 4096, ..Default::default() };
        let prof = wave1d::build_profile(&m, c, &opts).unwrap();
        let op = assemble(&prof, &m, opts.tail_tol).unwrap();
        let count = negative_eigencount(&op);
        let k = kernel_check(&op, &prof).unwrap();
        let scale = op.spectral_scale();
        let third = op.eigenvalue(2);
        let floor = essential_spectrum_floor(&m, c);
        ok &= count == 1 && k.lambda0.abs() < 1e-3 * scale && k.cosine > 0.999 && third > 0.1 * floor;
        detail += &format!(
            "[c={c}: neg {count}, |l0|/scale {:.2e}, cos {:.6}, l2/floor {:.3}] ",
            k.lambda0.abs() / scale,
            k.cosine,
            third / floor
        );
    }
    ok &= t0.elapsed() < Duration::from_secs(30);
    verdict(3, ok, detail, t0);
}

#[test]
fn criterion_4_conservation_and_transport() {
    let _g = serial();
    let t0 = Instant::now();
    let m = gp();
    let c = 0.5;
    let mut opts = ExperimentOptions::new(0.0, 10.0);
    opts.n = Some(2048);
    let rep = stability_experiment(&m, c, &opts).unwrap();
    let p = wave1d::momentum_of_speed(&m, c).unwrap();
    let de = rep.max_drift.de_rel;
    let dp = rep.max_drift.dp / p;
    let t_end = *rep.times.last().unwrap();
    let speed = rep.shifts.last().unwrap() / t_end;
    let ok = de < 1e-8 && dp < 1e-8 && rel(speed, c) < 0.01 && t_end == 10.0 && t0.elapsed() < Duration::from_secs(120);
    verdict(4, ok, format!("N={} dE/E {de:.2e}, dP/P {dp:.2e}, speed {speed:.6} (c = {c})", rep.n), t0);
}

struct ScanHit {
    model: FluidModel,
    a: f64,
    b: f64,
    c: f64,
    dpdc: f64,
    p: f64,
}

/// Search a cubic_vdw box for a depression wave with dP/dc > 0 (verdict
/// Unstable) and a moderate dip (rho_m > 0.3), maximizing P'/P.
fn scan_unstable(log: &mut Vec<String>) -> Option<ScanHit> {
    let cs: Vec<f64> = (1..=12).map(|i| 0.05 * i as f64).collect();
    let mut best: Option<ScanHit> = None;
    for a in [1.0, 1.5, 2.0, 2.5, 3.0] {
        for b in [-3.0, -2.5, -2.0, -1.5, -1.0, -0.5] {
            let model = match FluidModel::new(PressureLaw::CubicVdw { a, b }, CapillarityLaw::Constant { kappa: 1.0 }, 1.0) {
                Ok(m) => m,
                Err(e) => {
                    log.push(format!("a={a} b={b}: {}", e.kind()));
                    continue;
                }
            };
            let curve = wave1d::speed_curve(&model, &cs, Some(WaveKind::Depression));
            let mut unstable = 0;
            for r in &curve.rows {
                let Ok(v) = wave1d::stability_verdict(&curve, r.c) else { continue };
                if v.verdict != Stability::Unstable || !r.dpdc.is_finite() {
                    continue;
                }
                let Ok(tp) = wave1d::find_turning_points(&model, r.c) else { continue };
                if !tp.rho_m.as_ref().is_some_and(|t| t.rho > 0.3) {
                    continue;
                }
                unstable += 1;
                if best.as_ref().is_none_or(|h| r.dpdc / r.p > h.dpdc / h.p) {
                    best = Some(ScanHit { model: model.clone(), a, b, c: r.c, dpdc: r.dpdc, p: r.p });
                }
            }
            log.push(format!("a={a} b={b}: {unstable} unstable speeds"));
        }
    }
    best
}

#[test]
fn criterion_5_stability_dichotomy() {
    let _g = serial();
    let t0 = Instant::now();
    let delta = 1e-3;
    let gp_model = gp();
    let mut log = vec![];
    let hit = scan_unstable(&mut log);
    let stable_run = || {
        let curve = wave1d::speed_curve(&gp_model, &[0.5], None);
        let dpdc = curve.rows[0].dpdc;
        let rep = stability_experiment(&gp_model, 0.5, &ExperimentOptions::new(delta, 50.0)).unwrap();
        (dpdc, rep)
    };
    let unstable_run = || hit.as_ref().map(|h| stability_experiment(&h.model, h.c, &ExperimentOptions::new(delta, 200.0)).unwrap());
    let ((dpdc, stable), unstable) = rayon::join(stable_run, unstable_run);
    let max_stable = stable.orbital_dist.iter().copied().fold(0.0, f64::max);
    let ok_a = dpdc < 0.0 && stable.outcome == Outcome::RemainedClose && max_stable < 5.0 * delta;
    let detail_a = format!("(a) GP c=0.5 dP/dc {dpdc:.3}, max dist {:.2} delta", max_stable / delta);
    match (hit, unstable) {
        (Some(h), Some(rep)) => {
            let max_u = rep.orbital_dist.iter().copied().fold(0.0, f64::max);
            let ok_b = match rep.outcome {
                Outcome::Escaped { .. } => max_u > 100.0 * delta,
                Outcome::SolverAbort { .. } => true,
                _ => false,
            };
            let detail = format!(
                "{detail_a}; (b) cubic_vdw a={} b={} c={:.2} dP/dc {:.3} P {:.3}: {:?}, max dist {:.1} delta",
                h.a,
                h.b,
                h.c,
                h.dpdc,
                h.p,
                rep.outcome,
                max_u / delta
            );
            verdict(5, ok_a && ok_b && t0.elapsed() < Duration::from_secs(900), detail, t0);
        }
        _ => {
            report(5, "BLOCKED", &format!("{detail_a}; (b) SCAN_EXHAUSTED: {}", log.join("; ")), t0.elapsed());
            panic!("criterion 5(b) blocked: SCAN_EXHAUSTED");
        }
    }
}

#[test]
fn criterion_6_kp_lump() {
    let _g = serial();
    let t0 = Instant::now();
    let k = minimize2d::kp1_lump(512, 512, 40.0, 40.0).unwrap();
    let identity = (k.e_kp + k.w2 / 6.0).abs() / k.e_kp.abs();
    let ok = k.residual_l2 < 1e-6 && identity < 0.01 && t0.elapsed() < Duration::from_secs(30);
    verdict(
        6,
        ok,
        format!("residual L2 {:.3e} (max {:.3e}), |E_KP + int w^2/6| / |E_KP| = {identity:.4}", k.residual_l2, k.residual_max),
        t0,
    );
}

const P_LIST: [f64; 3] = [0.2, 0.3, 0.4];

struct SweepRun {
    curve: EnergyCurve,
    elapsed: Duration,
}

static SWEEP: OnceLock<SweepRun> = OnceLock::new();

fn sweep() -> &'static SweepRun {
    SWEEP.get_or_init(|| {
        let t0 = Instant::now();
        let opts = MinimizeOptions { tol: 1e-9, torus: TorusOptions { n1: 512, n2: 512, rz: None }, ..Default::default() };
        let curve = minimize2d::sweep_energy_curve(&gp(), &P_LIST, &opts, true).unwrap();
        SweepRun { curve, elapsed: t0.elapsed() }
    })
}

#[test]
fn criterion_7_minimizer_certification() {
    let _g = serial();
    let t0 = Instant::now();
    let s = sweep();
    let mut ok = s.elapsed < Duration::from_secs(30 * 60 * P_LIST.len() as u64);
    let mut detail = String::new();
    for (p, r) in P_LIST.iter().zip(&s.curve.reports) {
        let Some(r) = r else {
            ok = false;
            detail += &format!("[p={p}: failed] ");
            continue;
        };
        let c = r.c.unwrap_or(f64::NAN);
        let poho = r.pohozaev;
        ok &= r.el_residual < 1e-5 && poho.max_abs() < 1e-3 && c > 0.0 && c < 1.0 && r.sup_defect < 1.0 / 3.0;
        detail += &format!(
            "[p={p}: res {:.1e}, poho ({:.1e}, {:.1e}, {:.1e}, {:.1e}), 1-c {:.3e}, sup {:.2e}, E-p {:.3e}] ",
            r.el_residual,
            poho.poho1,
            poho.poho2,
            poho.energie1,
            poho.poho3,
            1.0 - c,
            r.sup_defect,
            r.e_tilde - p
        );
    }
    verdict(7, ok, detail, t0);
}

#[test]
fn criterion_8_energy_curve_asymptotics() {
    let _g = serial();
    let t0 = Instant::now();
    let d = &sweep().curve.diagnostics;
    let max_dd = d.second_differences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_sub = d.subadditivity.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    let (lo, hi) = d.sup_over_p2;
    let ok = (0.95..=1.05).contains(&d.a1)
        && d.a3 < 0.0
        && (1.7..=2.3).contains(&d.speed_exponent)
        && max_dd <= 1e-4
        && !d.subadditivity.is_empty()
        && min_sub > 0.0
        && lo > 0.5 * hi;
    verdict(
        8,
        ok,
        format!(
            "a1 {:.6}, a3 {:.3e}, slope(1-c) {:.3}, max second difference {max_dd:.2e}, min subadditivity margin {min_sub:.2e}, sup/p^2 in [{lo:.3e}, {hi:.3e}]",
            d.a1, d.a3, d.speed_exponent
        ),
        t0,
    );
}

fn run_twice(dir: &Path, name: &str, cfg: serde_json::Value) -> Vec<String> {
    let mut diffs = vec![];
    let mut outputs = vec![];
    for k in 0..2 {
        let mut v = cfg.clone();
        v["output_dir"] = serde_json::json!(dir.join(format!("{name}_{k}")));
        let c = io::config_from_value(v).unwrap();
        outputs.push(io::run(&c).unwrap());
    }
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        if a.file_name() == Some("manifest.json".as_ref()) {
            continue; // differs by output_dir only
        }
        if std::fs::read(a).unwrap() != std::fs::read(b).unwrap() {
            diffs.push(a.display().to_string());
        }
    }
    diffs
}

#[test]
fn criterion_9_determinism() {
    let _g = serial();
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("wave1d", serde_json::json!({"command": "wave1d", "params": {"c": 0.5}})),
        ("curve1d", serde_json::json!({"command": "curve1d", "params": {"c_min": 0.2, "c_max": 0.9, "n_points": 21}})),
        ("spectrum1d", serde_json::json!({"command": "spectrum1d", "params": {"c": 0.5}})),
        (
            "evolve1d",
            serde_json::json!({"command": "evolve1d", "rng_seed": 42,
                "params": {"c": 0.5, "delta": 1e-3, "horizon": 2.0, "shape": {"kind": "random", "modes": 6, "width": 3.0}, "snapshot_stride": 2}}),
        ),
        ("minimize2d", serde_json::json!({"command": "minimize2d", "params": {"p": 0.3, "n1": 128, "n2": 128, "tol": 1e-9}})),
        ("sweep2d", serde_json::json!({"command": "sweep2d", "params": {"p_list": [0.2, 0.3], "n1": 64, "n2": 64, "tol": 1e-8}})),
        ("kp-lump", serde_json::json!({"command": "kp-lump"})),
    ];
    let mut diffs = vec![];
    for (name, cfg) in configs {
        diffs.extend(run_twice(dir.path(), name, cfg));
    }
    let ok = diffs.is_empty();
    verdict(9, ok, if ok { "7 commands rerun byte-identically".into() } else { format!("differing outputs: {diffs:?}") }, t0);
}
