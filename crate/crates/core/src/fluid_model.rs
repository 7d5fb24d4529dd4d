//! Pressure and capillarity laws, normalization to the unit base state, and
//! the cutoff / coercive-extension constructions used by the modified energy.
//!
//! All laws are a closed enumeration so that every derivative needed downstream
//! (g', g'', g''', K', K'') has an exact closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{smoothstep, GaussLegendre};

/// Pressure law g (derivative of the internal energy density G).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureLaw {
    /// g(s) = s - 1
    GrossPitaevskii {},
    /// g(s) = s^gamma - 1
    Power { gamma: f64 },
    /// g(s) = (s-1) + a (s-1)^2 + b (s-1)^3
    CubicVdw { a: f64, b: f64 },
}

/// Capillarity coefficient K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapillarityLaw {
    /// K(s) = kappa
    Constant { kappa: f64 },
    /// K(s) = kappa / s
    Inverse { kappa: f64 },
    /// K(s) = kappa s^m
    Power { kappa: f64, m: f64 },
}

impl PressureLaw {
    /// (g, g', g'', g''') at s.
    pub fn derivs(&self, s: f64) -> [f64; 4] {
        match *self {
            PressureLaw::GrossPitaevskii {} => [s - 1.0, 1.0, 0.0, 0.0],
            PressureLaw::Power { gamma } => {
                let p = s.powf(gamma - 3.0);
                [
                    s.powf(gamma) - 1.0,
                    gamma * p * s * s,
                    gamma * (gamma - 1.0) * p * s,
                    gamma * (gamma - 1.0) * (gamma - 2.0) * p,
                ]
            }
            PressureLaw::CubicVdw { a, b } => {
                let d = s - 1.0;
                [
                    d + a * d * d + b * d * d * d,
                    1.0 + 2.0 * a * d + 3.0 * b * d * d,
                    2.0 * a + 6.0 * b * d,
                    6.0 * b,
                ]
            }
        }
    }

    /// Primitive Q(d) = int_0^d g(1 + x) dx, evaluated without cancellation
    /// for small |d|.
    fn primitive_from_one(&self, d: f64) -> f64 {
        match *self {
            PressureLaw::GrossPitaevskii {} => 0.5 * d * d,
            PressureLaw::CubicVdw { a, b } => d * d * (0.5 + d * (a / 3.0 + 0.25 * b * d)),
            PressureLaw::Power { gamma } => {
                if d.abs() < 0.1 {
                    // sum_j binom(gamma, j) d^(j+1)/(j+1), j >= 1
                    let mut binom = 1.0;
                    let mut pow = d;
                    let mut sum = 0.0;
                    for j in 1..80 {
                        binom *= (gamma - (j as f64 - 1.0)) / j as f64;
                        pow *= d;
                        let term = binom * pow / (j as f64 + 1.0);
                        sum += term;
                        if term.abs() <= 1e-18 * sum.abs() {
                            break;
                        }
                    }
                    sum
                } else {
                    ((gamma + 1.0) * d.ln_1p()).exp_m1() / (gamma + 1.0) - d
                }
            }
        }
    }

    /// int_{sa}^{sb} g(s) ds
    pub fn primitive(&self, sa: f64, sb: f64) -> f64 {
        self.primitive_from_one(sb - 1.0) - self.primitive_from_one(sa - 1.0)
    }
}

impl CapillarityLaw {
    /// (K, K', K'') at s.
    pub fn derivs(&self, s: f64) -> [f64; 3] {
        match *self {
            CapillarityLaw::Constant { kappa } => [kappa, 0.0, 0.0],
            CapillarityLaw::Inverse { kappa } => {
                let inv = 1.0 / s;
                [kappa * inv, -kappa * inv * inv, 2.0 * kappa * inv * inv * inv]
            }
            CapillarityLaw::Power { kappa, m } => {
                let p = s.powf(m - 2.0);
                [kappa * p * s * s, kappa * m * p * s, kappa * m * (m - 1.0) * p]
            }
        }
    }
}

/// Density/pressure scale factors applied on top of the raw laws.
/// g(rho) = g_law(rho0 rho) / g_scale and K(rho) = K_law(rho0 rho) / rho0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub rho0: f64,
    pub g_scale: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Self { rho0: 1.0, g_scale: 1.0 }
    }
}

impl Scaling {
    fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidModel {
    pub pressure: PressureLaw,
    pub capillarity: CapillarityLaw,
    pub rho_inf: f64,
    #[serde(default, skip_serializing_if = "Scaling::is_identity")]
    pub scaling: Scaling,
}

impl FluidModel {
    pub fn new(pressure: PressureLaw, capillarity: CapillarityLaw, rho_inf: f64) -> Result<Self> {
        let m = Self { pressure, capillarity, rho_inf, scaling: Scaling::default() };
        m.validate()?;
        Ok(m)
    }

    /// Gross-Pitaevskii pressure with constant capillarity, rho_inf = 1.
    pub fn gross_pitaevskii(kappa: f64) -> Self {
        Self::new(PressureLaw::GrossPitaevskii {}, CapillarityLaw::Constant { kappa }, 1.0)
            .expect("valid GP model")
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rho_inf;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidModel(format!("rho_inf must be positive, got {r}")));
        }
        match self.pressure {
            PressureLaw::Power { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                return Err(Error::InvalidModel(format!("power exponent must be positive, got {gamma}")));
            }
            _ => {}
        }
        let [g, g1, ..] = self.g_derivs(r);
        if g.abs() > 1e-12 * g1.abs().max(1.0) {
            return Err(Error::InvalidModel(format!("g(rho_inf) = {g} is not zero")));
        }
        if !(g1 > 0.0) {
            return Err(Error::SupersonicBaseState { rho0: r, g_prime: g1 });
        }
        for i in 0..=200 {
            // geometric samples over [rho_inf/8, 8 rho_inf]
            let rho = r * 8f64.powf(-1.0 + 2.0 * i as f64 / 200.0);
            let k = self.k(rho);
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidModel(format!("K({rho}) = {k} is not positive")));
            }
        }
        Ok(())
    }

    /// (g, g', g'', g''') at rho.
    pub fn g_derivs(&self, rho: f64) -> [f64; 4] {
        let Scaling { rho0, g_scale } = self.scaling;
        let [g, g1, g2, g3] = self.pressure.derivs(rho0 * rho);
        [g / g_scale, rho0 * g1 / g_scale, rho0 * rho0 * g2 / g_scale, rho0.powi(3) * g3 / g_scale]
    }

    pub fn g(&self, rho: f64) -> f64 {
        self.g_derivs(rho)[0]
    }

    pub fn g_prime(&self, rho: f64) -> f64 {
        self.g_derivs(rho)[1]
    }

    /// G(rho) = int_{rho_inf}^{rho} g.
    pub fn potential(&self, rho: f64) -> f64 {
        let Scaling { rho0, g_scale } = self.scaling;
        self.pressure.primitive(rho0 * self.rho_inf, rho0 * rho) / (rho0 * g_scale)
    }

    /// (K, K', K'') at rho.
    pub fn k_derivs(&self, rho: f64) -> [f64; 3] {
        let rho0 = self.scaling.rho0;
        let [k, k1, k2] = self.capillarity.derivs(rho0 * rho);
        [k / rho0, k1, rho0 * k2]
    }

    pub fn k(&self, rho: f64) -> f64 {
        self.k_derivs(rho)[0]
    }

    /// c_s at the reference density.
    pub fn c_s(&self) -> f64 {
        (self.rho_inf * self.g_prime(self.rho_inf)).sqrt()
    }
}

/// sqrt(rho0 g'(rho0)).
pub fn sound_speed(model: &FluidModel, rho0: f64) -> Result<f64> {
    if !(rho0 > 0.0) {
        return Err(Error::NonPositiveDensity(rho0));
    }
    let g1 = model.g_prime(rho0);
    if !(g1 > 0.0) {
        return Err(Error::SupersonicBaseState { rho0, g_prime: g1 });
    }
    Ok((rho0 * g1).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaCoefficient {
    pub value: f64,
    /// |Gamma| < 1e-8: the small-momentum construction does not apply.
    pub degenerate: bool,
}

/// Gamma = 3 + rho0 g''(rho0) / g'(rho0).
pub fn gamma_coefficient(model: &FluidModel, rho0: f64) -> Result<GammaCoefficient> {
    if !(rho0 > 0.0) {
        return Err(Error::NonPositiveDensity(rho0));
    }
    let [_, g1, g2, _] = model.g_derivs(rho0);
    if !(g1 > 0.0) {
        return Err(Error::SupersonicBaseState { rho0, g_prime: g1 });
    }
    let value = 3.0 + rho0 * g2 / g1;
    Ok(GammaCoefficient { value, degenerate: value.abs() < 1e-8 })
}

/// Normalized model with constant state 1, g'(1) = 1 and unit sound speed.
pub fn rescale(model: &FluidModel, rho0: f64) -> Result<FluidModel> {
    if !(rho0 > 0.0) {
        return Err(Error::NonPositiveDensity(rho0));
    }
    let [g, g1, ..] = model.g_derivs(rho0);
    if !(g1 > 0.0) {
        return Err(Error::SupersonicBaseState { rho0, g_prime: g1 });
    }
    if g.abs() > 1e-12 * g1.max(1.0) {
        return Err(Error::InvalidModel(format!("g({rho0}) = {g} is not zero")));
    }
    let s = model.scaling;
    let scaling = Scaling { rho0: s.rho0 * rho0, g_scale: s.g_scale * g1 * rho0 };
    Ok(FluidModel {
        pressure: model.pressure.clone(),
        capillarity: model.capillarity.clone(),
        rho_inf: 1.0,
        scaling,
    })
}

/// Parameters of the cutoff chi and of the coercive extension of G.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    /// Half-width of the window where the extended potential equals G.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Number of matched derivatives at the blend edges.
    #[serde(default = "default_blend_order")]
    pub blend_order: usize,
}

fn default_delta() -> f64 {
    0.25
}

fn default_blend_order() -> usize {
    3
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { delta: default_delta(), blend_order: default_blend_order() }
    }
}

pub const CHI_LO: f64 = 0.5;
pub const CHI_HI: f64 = 2.0;

impl CutoffSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Validation {
                field: "cutoff.delta".into(),
                msg: format!("must lie in (0, 1/2), got {}", self.delta),
            });
        }
        if self.blend_order < 2 {
            return Err(Error::Validation {
                field: "cutoff.blend_order".into(),
                msg: format!("must be >= 2, got {}", self.blend_order),
            });
        }
        Ok(())
    }
}

/// Quintic with q(0)=q'(0)=q''(0)=0, q(1)=1, q'(1)=1, q''(1)=0.
fn chi_ramp(t: f64) -> (f64, f64) {
    let t2 = t * t;
    (t2 * t * (6.0 - 8.0 * t + 3.0 * t2), t2 * (18.0 - 32.0 * t + 15.0 * t2))
}

/// Cutoff chi and chi'. Identity on [2/3, 4/3], clamped to 1/2 and 2 outside
/// [1/2, 2], C^2 quintic blends in between.
pub fn chi(_spec: &CutoffSpec, rho: f64) -> (f64, f64) {
    const A: f64 = 2.0 / 3.0;
    const B: f64 = 4.0 / 3.0;
    if rho > A && rho < B {
        (rho, 1.0)
    } else if rho <= CHI_LO {
        (CHI_LO, 0.0)
    } else if rho >= CHI_HI {
        (CHI_HI, 0.0)
    } else if rho <= A {
        let w = A - CHI_LO;
        let (q, dq) = chi_ramp((rho - CHI_LO) / w);
        (CHI_LO + w * q, dq)
    } else {
        let w = CHI_HI - B;
        let (q, dq) = chi_ramp((CHI_HI - rho) / w);
        (CHI_HI - w * q, dq)
    }
}

/// Coercive extension of the potential: equal to G on (1-delta, 1+delta),
/// g~ = rho - 1 outside (1-2 delta, 1+2 delta), smoothstep blend in between.
/// Requires a normalized model (rho_inf = 1).
#[derive(Clone, Debug)]
pub struct PotentialExtension {
    model: FluidModel,
    spec: CutoffSpec,
    gl: GaussLegendre,
    /// G~ at 1 - 2 delta and 1 + 2 delta.
    g_tilde_lo: f64,
    g_tilde_hi: f64,
    /// Sampled constants: c1 (rho-1)^2 <= G~ <= c3 (rho-1)^2, |g~| <= c2 |rho-1|.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl PotentialExtension {
    pub fn new(model: &FluidModel, spec: &CutoffSpec) -> Result<Self> {
        spec.validate()?;
        if model.rho_inf != 1.0 {
            return Err(Error::InvalidModel("extension requires a rescaled model (rho_inf = 1)".into()));
        }
        let mut ext = Self {
            model: model.clone(),
            spec: *spec,
            gl: GaussLegendre::new(32),
            g_tilde_lo: 0.0,
            g_tilde_hi: 0.0,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
        };
        let d = spec.delta;
        ext.g_tilde_hi = model.potential(1.0 + d) + ext.blend_integral(1.0 + d, 1.0 + 2.0 * d);
        ext.g_tilde_lo = model.potential(1.0 - d) - ext.blend_integral(1.0 - 2.0 * d, 1.0 - d);

        let (mut c1, mut c2, mut c3) = (f64::INFINITY, 0.0f64, 0.0f64);
        let n = 30_000;
        for i in 0..=n {
            let rho = -10.0 + 30.0 * i as f64 / n as f64;
            let dr = rho - 1.0;
            if dr.abs() < 1e-3 {
                continue;
            }
            let (gt, gd) = ext.eval(rho);
            let q = gt / (dr * dr);
            c1 = c1.min(q);
            c3 = c3.max(q);
            c2 = c2.max((gd / dr).abs());
        }
        if !(c1 > 0.0) {
            return Err(Error::ExtensionNotCoercive(c1));
        }
        ext.c1 = c1;
        ext.c2 = c2;
        ext.c3 = c3;
        Ok(ext)
    }

    pub fn spec(&self) -> &CutoffSpec {
        &self.spec
    }

    pub fn model(&self) -> &FluidModel {
        &self.model
    }

    /// Blend weight toward rho - 1 at distance |rho - 1|.
    fn weight(&self, rho: f64) -> f64 {
        let d = self.spec.delta;
        smoothstep(self.spec.blend_order, ((rho - 1.0).abs() - d) / d)
    }

    fn blended_g(&self, rho: f64) -> f64 {
        let s = self.weight(rho);
        (1.0 - s) * self.model.g(rho) + s * (rho - 1.0)
    }

    fn blend_integral(&self, a: f64, b: f64) -> f64 {
        self.gl.integrate(a, b, |r| self.blended_g(r))
    }

    /// (G~, g~) at rho.
    pub fn eval(&self, rho: f64) -> (f64, f64) {
        let d = self.spec.delta;
        let dr = rho - 1.0;
        if dr.abs() < d {
            (self.model.potential(rho), self.model.g(rho))
        } else if dr >= 2.0 * d {
            (self.g_tilde_hi + 0.5 * (dr * dr - 4.0 * d * d), dr)
        } else if dr <= -2.0 * d {
            (self.g_tilde_lo + 0.5 * (dr * dr - 4.0 * d * d), dr)
        } else if dr > 0.0 {
            (self.model.potential(1.0 + d) + self.blend_integral(1.0 + d, rho), self.blended_g(rho))
        } else {
            (self.model.potential(1.0 - d) - self.blend_integral(rho, 1.0 - d), self.blended_g(rho))
        }
    }
}

/// (G~, g~) at rho for a normalized model.
pub fn extended_potential(model: &FluidModel, spec: &CutoffSpec, rho: f64) -> Result<(f64, f64)> {
    Ok(PotentialExtension::new(model, spec)?.eval(rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(gamma: f64) -> FluidModel {
        FluidModel::new(PressureLaw::Power { gamma }, CapillarityLaw::Constant { kappa: 1.0 }, 1.0).unwrap()
    }

    fn cubic(a: f64, b: f64) -> FluidModel {
        FluidModel::new(PressureLaw::CubicVdw { a, b }, CapillarityLaw::Constant { kappa: 1.0 }, 1.0).unwrap()
    }

    #[test]
    fn sound_speed_examples() {
        assert_eq!(sound_speed(&FluidModel::gross_pitaevskii(1.0), 1.0).unwrap(), 1.0);
        assert!((sound_speed(&power(2.0), 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sound_speed(&cubic(-2.0, 0.0), 1.0).unwrap(), 1.0);
        assert!(matches!(
            sound_speed(&FluidModel::gross_pitaevskii(1.0), 0.0),
            Err(Error::NonPositiveDensity(_))
        ));
        // g'(rho) = 1 + 2a(rho-1) is negative at rho = 2 for a = -1
        assert!(matches!(sound_speed(&cubic(-1.0, 0.0), 2.0), Err(Error::SupersonicBaseState { .. })));
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_coefficient(&FluidModel::gross_pitaevskii(1.0), 1.0).unwrap();
        assert_eq!(g.value, 3.0);
        assert!(!g.degenerate);
        assert!((gamma_coefficient(&power(3.0), 1.0).unwrap().value - 5.0).abs() < 1e-14);
        let d = gamma_coefficient(&cubic(-1.5, 0.0), 1.0).unwrap();
        assert_eq!(d.value, 0.0);
        assert!(d.degenerate);
    }

    #[test]
    fn rescale_power_law() {
        let r = rescale(&power(2.0), 1.0).unwrap();
        // g_r(rho) = (rho^2 - 1)/2
        for rho in [0.3, 1.0, 1.7] {
            assert!((r.g(rho) - (rho * rho - 1.0) / 2.0).abs() < 1e-15);
        }
        assert!((r.g_prime(1.0) - 1.0).abs() < 1e-15);
        let gp = FluidModel::gross_pitaevskii(1.0);
        assert_eq!(rescale(&gp, 1.0).unwrap(), gp);
    }

    #[test]
    fn rescale_nontrivial_base_state() {
        // cubic with a second zero: g(s) = (s-1)(1 + a(s-1) + b(s-1)^2), a=-3,b=2 -> zeros at 1.5 and 2
        let m = FluidModel {
            pressure: PressureLaw::CubicVdw { a: -3.0, b: 2.0 },
            capillarity: CapillarityLaw::Inverse { kappa: 0.5 },
            rho_inf: 1.0,
            scaling: Scaling::default(),
        };
        let rho0 = 2.0;
        assert!(m.g_prime(rho0) > 0.0);
        let r = rescale(&m, rho0).unwrap();
        assert!(r.g(1.0).abs() < 1e-14);
        assert!((r.g_prime(1.0) - 1.0).abs() < 1e-12);
        assert!((sound_speed(&r, 1.0).unwrap() - 1.0).abs() < 1e-12);
        // K_r(rho) = K(rho0 rho)/rho0
        assert!((r.k(0.7) - m.k(1.4) / 2.0).abs() < 1e-15);
        // G_r' = g_r by finite differences
        let h = 1e-6;
        let fd = (r.potential(1.1 + h) - r.potential(1.1 - h)) / (2.0 * h);
        assert!((fd - r.g(1.1)).abs() < 1e-8);
    }

    #[test]
    fn chi_plateaus() {
        let s = CutoffSpec::default();
        assert_eq!(chi(&s, 1.0), (1.0, 1.0));
        assert_eq!(chi(&s, 0.1), (0.5, 0.0));
        assert_eq!(chi(&s, 3.0), (2.0, 0.0));
    }

    #[test]
    fn extension_examples() {
        let gp = FluidModel::gross_pitaevskii(1.0);
        let s = CutoffSpec::default();
        let ext = PotentialExtension::new(&gp, &s).unwrap();
        assert_eq!(ext.eval(1.0), (0.0, 0.0));
        assert!((ext.eval(1.1).0 - 0.005).abs() < 1e-15);
        let (g10, gd10) = ext.eval(10.0);
        assert_eq!(gd10, 9.0);
        assert!(g10 >= ext.c1 * 81.0);
        // for GP the extension is exact everywhere: offset vanishes
        assert!((g10 - 40.5).abs() < 1e-12);
    }

    #[test]
    fn extension_rejects_unscaled_model() {
        let m = FluidModel { rho_inf: 2.0, ..FluidModel::gross_pitaevskii(1.0) };
        assert!(PotentialExtension::new(&m, &CutoffSpec::default()).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(FluidModel::new(PressureLaw::GrossPitaevskii {}, CapillarityLaw::Constant { kappa: 1.0 }, 2.0).is_err());
        assert!(FluidModel::new(PressureLaw::GrossPitaevskii {}, CapillarityLaw::Constant { kappa: -1.0 }, 1.0).is_err());
        assert!(FluidModel::new(PressureLaw::CubicVdw { a: 0.0, b: 0.0 }, CapillarityLaw::Power { kappa: 1.0, m: 2.0 }, 1.0).is_ok());
    }

    #[test]
    fn json_shape() {
        let m = FluidModel::gross_pitaevskii(1.0);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"{"pressure":{"law":"gross_pitaevskii","params":{}},"capillarity":{"law":"constant","params":{"kappa":1.0}},"rho_inf":1.0}"#
        );
        let back: FluidModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"pressure":{"law":"unknown","params":{}},"capillarity":{"law":"constant","params":{"kappa":1.0}},"rho_inf":1.0}"#;
        assert!(serde_json::from_str::<FluidModel>(bad).is_err());
        let extra = r#"{"pressure":{"law":"power","params":{"gamma":2.0,"zeta":1}},"capillarity":{"law":"constant","params":{"kappa":1.0}},"rho_inf":1.0}"#;
        assert!(serde_json::from_str::<FluidModel>(extra).is_err());
    }
}
