//! Scalar integration: Gauss–Legendre rules, time-ordered nested integrals
//! over a window, and Legendre expansion coefficients of a coefficient
//! function.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Number of Gauss–Legendre nodes per level in [`nested_simplex`].
pub const NESTED_NODES: usize = 16;
/// Node count of the verification pass in [`nested_simplex`].
pub const NESTED_VERIFY_NODES: usize = 24;
/// Relative agreement required between the two nested passes.
pub const NESTED_VERIFY_TOL: f64 = 1e-10;
/// Maximum nesting depth supported by [`nested_simplex`].
pub const MAX_NESTING: usize = 4;

const INTEGRATE_PANEL_NODES: usize = 16;
const INTEGRATE_REL_TOL: f64 = 1e-13;
const INTEGRATE_MAX_DOUBLINGS: usize = 6;

/// Prefactor of the leading-order Legendre expression for β₁₂,
/// `β₁₂ ≈ k · (u₂⁽¹⁾u₁⁽²⁾ − u₁⁽¹⁾u₂⁽²⁾)`. Checked against the nested
/// quadrature in the tests; `2/3` is off by a factor of four.
pub const LEGENDRE_BETA12_PREFACTOR: f64 = 1.0 / 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("Gauss-Legendre order {0} outside 1..=64")]
    InvalidOrder(usize),
    #[error("adaptive integration did not converge; best estimate {estimate:e} (last change {change:e})")]
    NotConverged { estimate: f64, change: f64 },
    #[error("nesting depth {0} outside 1..={MAX_NESTING}")]
    InvalidDepth(usize),
    #[error("nested integral verification failed: {coarse:e} vs {fine:e}")]
    VerificationFailed { coarse: f64, fine: f64 },
    #[error("Legendre expansion order {0} outside 1..=6")]
    InvalidExpansionOrder(usize),
    #[error("window width must be finite and nonzero, got {0}")]
    InvalidWindow(f64),
    #[error("integrand returned a non-finite value at t = {0}")]
    NonFinite(f64),
}

/// A smooth real coefficient function `t ↦ f(t)`.
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    /// `t ↦ t`.
    pub fn identity() -> Self {
        Self::new(|t| t)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

/// The interval `[mu - dt/2, mu + dt/2]`.
///
/// `dt` is positive for windows built with [`Window::new`]. [`Window::reversed`]
/// flips its sign, which describes the same interval traversed backward in
/// time (start `mu + |dt|/2`, end `mu - |dt|/2`); all integrals over a
/// backward window are the signed ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub mu: f64,
    pub dt: f64,
}

impl Window {
    pub fn new(mu: f64, dt: f64) -> Result<Self, QuadratureError> {
        if !(dt.is_finite() && dt > 0.0 && mu.is_finite()) {
            return Err(QuadratureError::InvalidWindow(dt));
        }
        Ok(Self { mu, dt })
    }

    /// Window covering `[t0, t1]`, backward when `t1 < t0`.
    pub fn between(t0: f64, t1: f64) -> Result<Self, QuadratureError> {
        let dt = t1 - t0;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(QuadratureError::InvalidWindow(dt));
        }
        Ok(Self { mu: 0.5 * (t0 + t1), dt })
    }

    pub fn reversed(self) -> Self {
        Self { mu: self.mu, dt: -self.dt }
    }

    pub fn is_backward(&self) -> bool {
        self.dt < 0.0
    }

    pub fn start(&self) -> f64 {
        self.mu - 0.5 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.mu + 0.5 * self.dt
    }

    pub fn width(&self) -> f64 {
        self.dt.abs()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if !(1..=64).contains(&n) {
        return Err(QuadratureError::InvalidOrder(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `P_0(x) .. P_{n}(x)`.
pub fn legendre_values(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(next);
    }
    out
}

/// `∫_a^b f(t) dt` by composite 16-point Gauss–Legendre, doubling the
/// panel count until successive estimates agree to 1e-13 relative.
///
/// `b < a` gives the signed (negated) integral.
pub fn integrate(f: &ScalarFn, a: f64, b: f64) -> Result<f64, QuadratureError> {
    if a == b {
        return Ok(0.0);
    }
    let (x, w) = gauss_legendre(INTEGRATE_PANEL_NODES)?;
    let panel = |panels: usize| -> Result<(f64, f64), QuadratureError> {
        let h = (b - a) / panels as f64;
        let mut sum = 0.0;
        let mut abs_sum = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let t = lo + 0.5 * h * (xi + 1.0);
                let v = f.eval(t);
                if !v.is_finite() {
                    return Err(QuadratureError::NonFinite(t));
                }
                sum += wi * v;
                abs_sum += wi * v.abs();
            }
        }
        Ok((0.5 * h * sum, 0.5 * h.abs() * abs_sum))
    };
    let (mut prev, _) = panel(1)?;
    let mut change = f64::INFINITY;
    for k in 1..=INTEGRATE_MAX_DOUBLINGS {
        let (cur, scale) = panel(1 << k)?;
        change = (cur - prev).abs();
        if change <= INTEGRATE_REL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(QuadratureError::NotConverged { estimate: prev, change })
}

/// Spectral integration operator on the Gauss–Legendre nodes: with `g`
/// sampled at the nodes, `(Q g)_j ≈ ∫_{-1}^{x_j} g`, exact when `g` is a
/// polynomial of degree below `n`.
struct NodeRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>, // n×n, row-major
}

impl NodeRule {
    fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n).expect("valid order");
        let pm: Vec<Vec<f64>> = nodes.iter().map(|&x| legendre_values(n, x)).collect();
        let mut cumulative = vec![0.0; n * n];
        for j in 0..n {
            // ∫_{-1}^{x_j} P_k = (P_{k+1} - P_{k-1})(x_j) / (2k+1), k ≥ 1
            let pj = &pm[j];
            let mut antider = vec![0.0; n];
            antider[0] = nodes[j] + 1.0;
            for k in 1..n {
                antider[k] = (pj[k + 1] - pj[k - 1]) / (2.0 * k as f64 + 1.0);
            }
            for m in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += (2.0 * k as f64 + 1.0) * 0.5 * pm[m][k] * antider[k];
                }
                cumulative[j * n + m] = weights[m] * s;
            }
        }
        Self { nodes, weights, cumulative }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Cumulative integral `∫_{start}^{t_j} g` on a window mapped from `[-1, 1]`.
    fn cumulate(&self, g: &[f64], half_width: f64) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| half_width * self.cumulative[j * n..(j + 1) * n].iter().zip(g).map(|(q, v)| q * v).sum::<f64>())
            .collect()
    }

    fn total(&self, g: &[f64], half_width: f64) -> f64 {
        half_width * self.weights.iter().zip(g).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn node_rule(n: usize) -> &'static NodeRule {
    use std::sync::OnceLock;
    static R16: OnceLock<NodeRule> = OnceLock::new();
    static R24: OnceLock<NodeRule> = OnceLock::new();
    match n {
        NESTED_NODES => R16.get_or_init(|| NodeRule::new(NESTED_NODES)),
        NESTED_VERIFY_NODES => R24.get_or_init(|| NodeRule::new(NESTED_VERIFY_NODES)),
        _ => unreachable!("only the two nested rules are cached"),
    }
}

fn sample(f: &ScalarFn, rule: &NodeRule, w: &Window) -> Result<Vec<f64>, QuadratureError> {
    let (start, half) = (w.start(), 0.5 * w.dt);
    rule.nodes
        .iter()
        .map(|&x| {
            let t = start + half * (x + 1.0);
            let v = f.eval(t);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(QuadratureError::NonFinite(t))
            }
        })
        .collect()
}

fn nested_with_rule(samples: &[Vec<f64>], rule: &NodeRule, half: f64) -> f64 {
    let mut g = samples[0].clone();
    for outer in &samples[1..] {
        let inner = rule.cumulate(&g, half);
        g = inner.iter().zip(outer).map(|(a, b)| a * b).collect();
    }
    rule.total(&g, half)
}

fn agree(coarse: f64, fine: f64, scale: f64) -> bool {
    (coarse - fine).abs() <= NESTED_VERIFY_TOL * fine.abs().max(scale)
}

/// Magnitude below which a nested integral is treated as cancelled: the
/// simplex integral of the pointwise bounds.
fn nested_scale(samples: &[Vec<f64>], dt: f64) -> f64 {
    let mut s = 1.0;
    for (k, vals) in samples.iter().enumerate() {
        let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        s *= sup * dt.abs() / (k + 1) as f64;
    }
    s.max(f64::MIN_POSITIVE)
}

/// Time-ordered nested integral over the window:
/// `∫ dt_S fs[S-1](t_S) ∫^{t_S} dt_{S-1} … ∫^{t_2} dt_1 fs[0](t_1)`
/// with every variable starting at `w.start()`.
///
/// Each level applies the 16-node Gauss–Legendre cumulative-integration
/// operator; the result is recomputed with 24 nodes and must agree to 1e-10.
pub fn nested_simplex(fs: &[ScalarFn], w: &Window) -> Result<f64, QuadratureError> {
    if fs.is_empty() || fs.len() > MAX_NESTING {
        return Err(QuadratureError::InvalidDepth(fs.len()));
    }
    let half = 0.5 * w.dt;
    let mut results = [0.0; 2];
    let mut scale = 0.0;
    for (slot, n) in [NESTED_NODES, NESTED_VERIFY_NODES].into_iter().enumerate() {
        let rule = node_rule(n);
        let samples = fs.iter().map(|f| sample(f, rule, w)).collect::<Result<Vec<_>, _>>()?;
        if slot == 1 {
            scale = nested_scale(&samples, w.dt);
        }
        results[slot] = nested_with_rule(&samples, rule, half);
    }
    if !agree(results[0], results[1], scale) {
        return Err(QuadratureError::VerificationFailed { coarse: results[0], fine: results[1] });
    }
    Ok(results[0])
}

/// All nested integrals `ω_{i_1…i_S}` of two functions for every index word
/// up to `max_len` letters.
///
/// Words are keyed innermost-first over the alphabet `{1, 2}` (so `[2, 1]`
/// is `∫ dt_2 u_1(t_2) ∫^{t_2} dt_1 u_2(t_1)`).
#[derive(Clone, Debug)]
pub struct OmegaTable {
    max_len: usize,
    // index = offset(len) + word bits, first letter in the highest bit
    values: Vec<f64>,
}

impl OmegaTable {
    pub fn compute(u1: &ScalarFn, u2: &ScalarFn, w: &Window, max_len: usize) -> Result<Self, QuadratureError> {
        if max_len == 0 || max_len > MAX_NESTING {
            return Err(QuadratureError::InvalidDepth(max_len));
        }
        let half = 0.5 * w.dt;
        let mut passes = Vec::with_capacity(2);
        let mut scales = Vec::new();
        for n in [NESTED_NODES, NESTED_VERIFY_NODES] {
            let rule = node_rule(n);
            let base = [sample(u1, rule, w)?, sample(u2, rule, w)?];
            let sup = [
                base[0].iter().fold(0.0f64, |m, v| m.max(v.abs())),
                base[1].iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ];
            let mut values = Vec::new();
            let mut word_scales = Vec::new();
            // integrands for words of the current length
            let mut frontier: Vec<(Vec<f64>, f64)> = (0..2).map(|i| (base[i].clone(), sup[i] * w.dt.abs())).collect();
            for len in 1..=max_len {
                for (g, s) in &frontier {
                    values.push(rule.total(g, half));
                    word_scales.push(*s);
                }
                if len == max_len {
                    break;
                }
                let mut next = Vec::with_capacity(frontier.len() * 2);
                for (g, s) in &frontier {
                    let inner = rule.cumulate(g, half);
                    for i in 0..2 {
                        let gi: Vec<f64> = inner.iter().zip(&base[i]).map(|(a, b)| a * b).collect();
                        next.push((gi, s * sup[i] * w.dt.abs() / (len + 1) as f64));
                    }
                }
                frontier = next;
            }
            passes.push(values);
            scales = word_scales;
        }
        for ((c, f), s) in passes[0].iter().zip(&passes[1]).zip(&scales) {
            if !agree(*c, *f, s.max(f64::MIN_POSITIVE)) {
                return Err(QuadratureError::VerificationFailed { coarse: *c, fine: *f });
            }
        }
        Ok(Self { max_len, values: passes.swap_remove(0) })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// `ω` for a word of letters in `{1, 2}`, innermost first.
    pub fn get(&self, word: &[u8]) -> f64 {
        assert!(!word.is_empty() && word.len() <= self.max_len, "word length out of range");
        let offset: usize = (1..word.len()).map(|l| 1usize << l).sum();
        let mut bits = 0usize;
        for &letter in word {
            assert!(letter == 1 || letter == 2, "letters are 1 or 2");
            bits = (bits << 1) | (letter as usize - 1);
        }
        self.values[offset + bits]
    }
}

/// Legendre coefficients `u⁽¹⁾ … u⁽ⁿᵐᵃˣ⁾` of a function on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreCoeffs {
    pub values: Vec<f64>,
}

impl LegendreCoeffs {
    /// `u⁽ⁿ⁾`, one-based.
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    /// Partial sum `(1/δt) Σ u⁽ⁿ⁾ P_{n-1}(s/(δt/2))` at offset `s` from the midpoint.
    pub fn reconstruct(&self, w: &Window, s: f64) -> f64 {
        let p = legendre_values(self.values.len(), 2.0 * s / w.dt);
        self.values.iter().zip(&p).map(|(u, pk)| u * pk).sum::<f64>() / w.dt
    }
}

/// `u⁽ⁿ⁾ = δt / c_{n-1} ∫_{-1}^{1} f(μ + vδt/2) P_{n-1}(v) dv` with
/// `c_k = 2/(2k+1)`.
pub fn legendre_coeffs(f: &ScalarFn, w: &Window, n_max: usize) -> Result<LegendreCoeffs, QuadratureError> {
    if !(1..=6).contains(&n_max) {
        return Err(QuadratureError::InvalidExpansionOrder(n_max));
    }
    let (nodes, weights) = gauss_legendre(32)?;
    let mut values = vec![0.0; n_max];
    for (&v, &wt) in nodes.iter().zip(&weights) {
        let t = w.mu + 0.5 * v * w.dt;
        let fv = f.eval(t);
        if !fv.is_finite() {
            return Err(QuadratureError::NonFinite(t));
        }
        let p = legendre_values(n_max - 1, v);
        for (k, pk) in p.iter().enumerate() {
            values[k] += wt * fv * pk;
        }
    }
    for (k, val) in values.iter_mut().enumerate() {
        let c = 2.0 / (2.0 * k as f64 + 1.0);
        *val *= w.dt / c;
    }
    Ok(LegendreCoeffs { values })
}

/// Leading-order β₁₂ from the first two Legendre coefficients of each
/// function: `prefactor · (u₂⁽¹⁾u₁⁽²⁾ − u₁⁽¹⁾u₂⁽²⁾)`. Use
/// [`LEGENDRE_BETA12_PREFACTOR`] unless testing conventions.
pub fn beta12_legendre(u1: &LegendreCoeffs, u2: &LegendreCoeffs, prefactor: f64) -> f64 {
    prefactor * (u2.get(1) * u1.get(2) - u1.get(1) * u2.get(2))
}
