//! Small numerical kernels shared by the 1D and 2D modules: Gauss-Legendre
//! rules, bracketed root polishing and polynomial smoothsteps.

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Bisection on a sign-changing bracket followed by safeguarded Newton.
/// `f` returns `(value, derivative)`.
pub fn polish_root<F: Fn(f64) -> (f64, f64)>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let flo = f(lo).0;
    let fhi = f(hi).0;
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo.signum() != fhi.signum());
    let lo_sign = flo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() < 1e-6 * mid.abs().max(1e-300) {
            break;
        }
        let fm = f(mid).0;
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let (v, d) = f(x);
        if v == 0.0 {
            return x;
        }
        if v.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = if d != 0.0 { x - v / d } else { 0.5 * (lo + hi) };
        if !(next > lo.min(hi) && next < lo.max(hi)) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= xtol * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Binomial-coefficient smoothstep of order `m`: S(0)=0, S(1)=1 and the first
/// `m` derivatives vanish at both ends. Clamped outside [0, 1].
pub fn smoothstep(m: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    let mut pow = 1.0;
    for k in 0..=m {
        if k > 0 {
            binom *= (m + k) as f64 / k as f64;
            pow *= 1.0 - t;
        }
        sum += binom * pow;
    }
    t.powi(m as i32 + 1) * sum
}

/// Derivative of [`smoothstep`]: (2m+1)!/(m!)^2 t^m (1-t)^m.
pub fn smoothstep_deriv(m: usize, t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let mut coef = 1.0;
    // (2m+1)! / (m!)^2 = (2m+1) * C(2m, m)
    for k in 1..=m {
        coef *= (m + k) as f64 / k as f64;
    }
    coef *= (2 * m + 1) as f64;
    coef * (t * (1.0 - t)).powi(m as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact for 8 nodes
        let v = gl.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn smoothstep_endpoints_and_derivative() {
        for m in 1..6 {
            assert_eq!(smoothstep(m, 0.0), 0.0);
            assert_eq!(smoothstep(m, 1.0), 1.0);
            assert!((smoothstep(m, 0.5) - 0.5).abs() < 1e-14);
            let t = 0.37;
            let h = 1e-6;
            let fd = (smoothstep(m, t + h) - smoothstep(m, t - h)) / (2.0 * h);
            assert!((fd - smoothstep_deriv(m, t)).abs() < 1e-7);
        }
    }

    #[test]
    fn polish_root_finds_sqrt2() {
        let r = polish_root(|x| (x * x - 2.0, 2.0 * x), 0.0, 3.0, 1e-15);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }
}
