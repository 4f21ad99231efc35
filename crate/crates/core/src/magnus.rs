//! Continuous-BCH coefficients for `A(t) = x(t) Z₁ + y(t) Z₂`.
//!
//! The Magnus terms of the window propagator reduce to commutator words in
//! `Z₁, Z₂` with real coefficients β, each a signed combination of nested
//! time-ordered integrals ω of the two coefficient functions.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

use crate::linalg::{self, commutator, CMatrix, HermitianEig, LinalgError, LocalSum, C64};
use crate::quadrature::{OmegaTable, QuadratureError, ScalarFn, Window};

/// `u = β₁₂/β₂` is refused when `|β₂| < BETA2_FLOOR_REL · |δt|`.
pub const BETA2_FLOOR_REL: f64 = 1e-12;
/// Prefactor of the eight-term ω₄ combination in `β_{ij12}`. Positive under
/// the innermost-first ω convention; a numerically extracted Magnus
/// logarithm confirms the sign, and the negative choice drops MST to order 5.
pub const BETA_IJ12_PREFACTOR: f64 = 1.0 / 12.0;
/// Tolerance for flagging both operators anti-Hermitian.
pub const ANTI_HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagnusError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("beta order must be 2, 4 or 6, got {0}")]
    InvalidOrder(u8),
    #[error("{0} was not computed at this order")]
    Absent(&'static str),
    #[error(
        "|beta2| = {beta2:e} is below the floor {floor:e}; swap the term assignment \
         so the regular coefficient sits in slot Y"
    )]
    DegenerateBeta2 { beta2: f64, floor: f64 },
}

/// Operator slot of a two-term generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    X,
    Y,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::X => "X",
            Slot::Y => "Y",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Precomputed route to `e^{c Z}` for one slot operator.
#[derive(Clone, Debug)]
pub enum SlotExp {
    /// `Z` is diagonal; exponentiate entrywise.
    Diagonal(Vec<C64>),
    /// `Z` is a sum of single-qubit operators; exponentiate qubit by qubit.
    Local(LocalSum),
    /// `Z = factor · H` with `H = V Λ V†` Hermitian and `V` unitary to rounding.
    Spectral { eig: HermitianEig, factor: C64 },
    /// No structure; Padé every time.
    General(CMatrix),
}

impl SlotExp {
    fn new(z: &CMatrix) -> Self {
        if z.is_diagonal() {
            return SlotExp::Diagonal(z.diagonal());
        }
        if let Some(local) = LocalSum::detect(z, linalg::LOCAL_SUM_TOL) {
            return SlotExp::Local(local);
        }
        if z.is_hermitian(ANTI_HERMITIAN_TOL) {
            if let Some(s) = Self::spectral(z, C64::new(1.0, 0.0)) {
                return s;
            }
        }
        if z.is_anti_hermitian(ANTI_HERMITIAN_TOL) {
            let h = z.scale(C64::new(0.0, 1.0));
            let h = (&h + &h.adjoint()).scale_real(0.5);
            if let Some(s) = Self::spectral(&h, C64::new(0.0, -1.0)) {
                return s;
            }
        }
        SlotExp::General(z.clone())
    }

    fn spectral(h: &CMatrix, factor: C64) -> Option<Self> {
        let eig = linalg::hermitian_eig(h).ok()?;
        Some(SlotExp::Spectral { eig, factor })
    }

    /// `e^{c Z}`.
    pub fn exp(&self, c: f64) -> Result<CMatrix, LinalgError> {
        match self {
            SlotExp::Diagonal(d) => Ok(CMatrix::from_diag(&d.iter().map(|&z| (z * c).exp()).collect::<Vec<_>>())),
            SlotExp::Local(local) => Ok(local.exp_apply(c, &CMatrix::identity(local.dim()))),
            SlotExp::Spectral { eig, factor } => Ok(linalg::exp_scaled(eig, *factor * c)),
            SlotExp::General(z) => linalg::expm(&z.scale_real(c)),
        }
    }

    /// `e^{c Z} · m`.
    pub fn apply(&self, c: f64, m: &CMatrix) -> Result<CMatrix, LinalgError> {
        match self {
            SlotExp::Diagonal(d) => Ok(m.scale_rows(&d.iter().map(|&z| (z * c).exp()).collect::<Vec<_>>())),
            SlotExp::Local(local) => Ok(local.exp_apply(c, m)),
            SlotExp::Spectral { eig, factor } => Ok(linalg::exp_scaled_apply(eig, *factor * c, m)),
            SlotExp::General(z) => Ok(&linalg::expm(&z.scale_real(c))? * m),
        }
    }

    /// Upper bound on `‖Z‖₂`.
    pub fn norm_bound(&self) -> f64 {
        match self {
            SlotExp::Diagonal(d) => d.iter().fold(0.0, |m, z| m.max(z.norm())),
            SlotExp::Local(local) => local.norm_bound(),
            SlotExp::Spectral { eig, factor, .. } => eig.spectral_radius() * factor.norm(),
            SlotExp::General(z) => z.frobenius_norm(),
        }
    }
}

type CacheKey = (u64, u64, u8);

/// `A(t) = x(t) Z₁ + y(t) Z₂`.
///
/// Clones share the β cache; it is keyed by the exact bits of `(μ, δt)`.
#[derive(Clone)]
pub struct TwoTermGenerator {
    z1: CMatrix,
    z2: CMatrix,
    xfn: ScalarFn,
    yfn: ScalarFn,
    anti_hermitian: bool,
    slot_exp: Arc<[OnceLock<SlotExp>; 2]>,
    cache: Option<Arc<RwLock<HashMap<CacheKey, BetaSet>>>>,
}

impl fmt::Debug for TwoTermGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoTermGenerator")
            .field("dim", &self.dim())
            .field("anti_hermitian", &self.anti_hermitian)
            .finish()
    }
}

impl TwoTermGenerator {
    pub fn new(z1: CMatrix, z2: CMatrix, xfn: ScalarFn, yfn: ScalarFn) -> Result<Self, MagnusError> {
        if z1.dim() != z2.dim() {
            return Err(LinalgError::DimensionMismatch { left: z1.dim(), right: z2.dim() }.into());
        }
        let anti_hermitian = z1.is_anti_hermitian(ANTI_HERMITIAN_TOL) && z2.is_anti_hermitian(ANTI_HERMITIAN_TOL);
        Ok(Self {
            z1,
            z2,
            xfn,
            yfn,
            anti_hermitian,
            slot_exp: Arc::new([OnceLock::new(), OnceLock::new()]),
            cache: Some(Arc::new(RwLock::new(HashMap::new()))),
        })
    }

    /// Generator for `-i(f(t) F + g(t) G)` with Hermitian `F`, `G`.
    pub fn from_hamiltonian(f_op: &CMatrix, g_op: &CMatrix, f: ScalarFn, g: ScalarFn) -> Result<Self, MagnusError> {
        let minus_i = C64::new(0.0, -1.0);
        Self::new(f_op.scale(minus_i), g_op.scale(minus_i), f, g)
    }

    /// Same generator without memoized β values.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    /// `(Z₁, x) ↔ (Z₂, y)`. The propagator is unchanged; slot roles are not.
    pub fn swapped(&self) -> Self {
        let mut out = Self::new(self.z2.clone(), self.z1.clone(), self.yfn.clone(), self.xfn.clone())
            .expect("dimensions already validated");
        if self.cache.is_none() {
            out.cache = None;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.z1.dim()
    }

    pub fn z1(&self) -> &CMatrix {
        &self.z1
    }

    pub fn z2(&self) -> &CMatrix {
        &self.z2
    }

    pub fn operator(&self, slot: Slot) -> &CMatrix {
        match slot {
            Slot::X => &self.z1,
            Slot::Y => &self.z2,
        }
    }

    pub fn xfn(&self) -> &ScalarFn {
        &self.xfn
    }

    pub fn yfn(&self) -> &ScalarFn {
        &self.yfn
    }

    pub fn coefficient(&self, slot: Slot) -> &ScalarFn {
        match slot {
            Slot::X => &self.xfn,
            Slot::Y => &self.yfn,
        }
    }

    pub fn is_anti_hermitian(&self) -> bool {
        self.anti_hermitian
    }

    /// `A(t)`.
    pub fn at(&self, t: f64) -> CMatrix {
        self.z1.scale_real(self.xfn.eval(t)).add_scaled(C64::new(self.yfn.eval(t), 0.0), &self.z2)
    }

    pub fn slot_exp(&self, slot: Slot) -> &SlotExp {
        let idx = match slot {
            Slot::X => 0,
            Slot::Y => 1,
        };
        self.slot_exp[idx].get_or_init(|| SlotExp::new(self.operator(slot)))
    }

    fn cached(&self, key: CacheKey) -> Option<BetaSet> {
        let cache = self.cache.as_ref()?;
        let map = cache.read().ok()?;
        map.get(&key).cloned().or_else(|| {
            // a higher-order entry covers lower requests
            (key.2 + 2..=6).step_by(2).find_map(|o| map.get(&(key.0, key.1, o)).map(|b| b.truncated(key.2)))
        })
    }

    fn store(&self, key: CacheKey, betas: &BetaSet) {
        if let Some(cache) = &self.cache {
            if let Ok(mut map) = cache.write() {
                map.insert(key, betas.clone());
            }
        }
    }
}

/// Continuous-BCH coefficients on one window. Entries above the requested
/// order are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaSet {
    pub window: Window,
    pub order: u8,
    pub b1: f64,
    pub b2: f64,
    pub b12: Option<f64>,
    pub b112: Option<f64>,
    pub b212: Option<f64>,
    pub b1112: Option<f64>,
    pub b1212: Option<f64>,
    pub b2112: Option<f64>,
    pub b2212: Option<f64>,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64, MagnusError> {
    v.ok_or(MagnusError::Absent(name))
}

impl BetaSet {
    pub fn beta12(&self) -> Result<f64, MagnusError> {
        need(self.b12, "beta12")
    }
    pub fn beta112(&self) -> Result<f64, MagnusError> {
        need(self.b112, "beta112")
    }
    pub fn beta212(&self) -> Result<f64, MagnusError> {
        need(self.b212, "beta212")
    }
    pub fn beta1112(&self) -> Result<f64, MagnusError> {
        need(self.b1112, "beta1112")
    }
    pub fn beta1212(&self) -> Result<f64, MagnusError> {
        need(self.b1212, "beta1212")
    }
    pub fn beta2112(&self) -> Result<f64, MagnusError> {
        need(self.b2112, "beta2112")
    }
    pub fn beta2212(&self) -> Result<f64, MagnusError> {
        need(self.b2212, "beta2212")
    }

    /// `β_{i12}` for `i ∈ {1, 2}`.
    pub fn beta_i12(&self, i: u8) -> Result<f64, MagnusError> {
        match i {
            1 => self.beta112(),
            _ => self.beta212(),
        }
    }

    /// `β_{ij12}` for `i, j ∈ {1, 2}`.
    pub fn beta_ij12(&self, i: u8, j: u8) -> Result<f64, MagnusError> {
        match (i, j) {
            (1, 1) => self.beta1112(),
            (1, 2) => self.beta1212(),
            (2, 1) => self.beta2112(),
            _ => self.beta2212(),
        }
    }

    /// `u = β₁₂/β₂`, refused when β₂ is degenerate.
    pub fn u(&self) -> Result<f64, MagnusError> {
        let floor = BETA2_FLOOR_REL * self.window.width();
        if self.b2.abs() < floor {
            return Err(MagnusError::DegenerateBeta2 { beta2: self.b2, floor });
        }
        Ok(self.beta12()? / self.b2)
    }

    fn truncated(&self, order: u8) -> BetaSet {
        let mut out = self.clone();
        out.order = order;
        if order < 4 {
            out.b12 = None;
        }
        if order < 6 {
            out.b112 = None;
            out.b212 = None;
            out.b1112 = None;
            out.b1212 = None;
            out.b2112 = None;
            out.b2212 = None;
        }
        out
    }
}

/// β coefficients of `gen` on `w` up to `order` (2, 4 or 6).
pub fn beta_set(gen: &TwoTermGenerator, w: &Window, order: u8) -> Result<BetaSet, MagnusError> {
    let depth = match order {
        2 => 1,
        4 => 2,
        6 => 4,
        _ => return Err(MagnusError::InvalidOrder(order)),
    };
    let key = (w.mu.to_bits(), w.dt.to_bits(), order);
    if let Some(hit) = gen.cached(key) {
        return Ok(hit);
    }
    let om = OmegaTable::compute(&gen.xfn, &gen.yfn, w, depth)?;
    let o = |word: &[u8]| om.get(word);

    let mut out = BetaSet {
        window: *w,
        order,
        b1: o(&[1]),
        b2: o(&[2]),
        b12: None,
        b112: None,
        b212: None,
        b1112: None,
        b1212: None,
        b2112: None,
        b2212: None,
    };
    if order >= 4 {
        out.b12 = Some(0.5 * (o(&[2, 1]) - o(&[1, 2])));
    }
    if order >= 6 {
        let b_i12 = |i: u8| (o(&[2, 1, i]) - o(&[1, 2, i]) - o(&[i, 2, 1]) + o(&[i, 1, 2])) / 6.0;
        let b_ij12 = |i: u8, j: u8| {
            BETA_IJ12_PREFACTOR
                * (o(&[i, j, 2, 1]) - o(&[i, j, 1, 2]) + o(&[j, 1, 2, i]) - o(&[j, 2, 1, i]) + o(&[2, 1, j, i])
                - o(&[1, 2, j, i])
                + o(&[1, j, i, 2])
                    - o(&[2, j, i, 1]))
        };
        out.b112 = Some(b_i12(1));
        out.b212 = Some(b_i12(2));
        out.b1112 = Some(b_ij12(1, 1));
        out.b1212 = Some(b_ij12(1, 2));
        out.b2112 = Some(b_ij12(2, 1));
        out.b2212 = Some(b_ij12(2, 2));
    }
    gen.store(key, &out);
    Ok(out)
}

/// Nested commutators needed by Ω₂..Ω₄ and Υ₅.
struct Words {
    c12: CMatrix,
    c_i12: [CMatrix; 2],
    c_ij12: [[CMatrix; 2]; 2],
}

fn words(gen: &TwoTermGenerator) -> Result<Words, MagnusError> {
    let z = [gen.z1(), gen.z2()];
    let c12 = commutator(z[0], z[1])?;
    let c_i12 = [commutator(z[0], &c12)?, commutator(z[1], &c12)?];
    let c_ij12 = [
        [commutator(z[0], &c_i12[0])?, commutator(z[0], &c_i12[1])?],
        [commutator(z[1], &c_i12[0])?, commutator(z[1], &c_i12[1])?],
    ];
    Ok(Words { c12, c_i12, c_ij12 })
}

/// `[Ω₁, Ω₂, Ω₃, Ω₄]` on the window.
pub fn omega_matrices(gen: &TwoTermGenerator, w: &Window) -> Result<[CMatrix; 4], MagnusError> {
    let b = beta_set(gen, w, 6)?;
    let ws = words(gen)?;
    let real = |x: f64| C64::new(x, 0.0);
    let omega1 = gen.z1().scale_real(b.b1).add_scaled(real(b.b2), gen.z2());
    let omega2 = ws.c12.scale_real(b.beta12()?);
    let mut omega3 = CMatrix::zeros(gen.dim());
    let mut omega4 = CMatrix::zeros(gen.dim());
    for i in 0..2 {
        omega3 = omega3.add_scaled(real(b.beta_i12(i as u8 + 1)?), &ws.c_i12[i]);
        for j in 0..2 {
            omega4 = omega4.add_scaled(real(b.beta_ij12(i as u8 + 1, j as u8 + 1)?), &ws.c_ij12[i][j]);
        }
    }
    Ok([omega1, omega2, omega3, omega4])
}

/// Time-dependent leading error of the conjugated product:
/// `Ω₃ + Ω₄ − (u²/2) β₂ [Z₁,[Z₁,Z₂]]`.
pub fn upsilon5(gen: &TwoTermGenerator, w: &Window) -> Result<CMatrix, MagnusError> {
    let b = beta_set(gen, w, 6)?;
    let u = b.u()?;
    let [_, _, omega3, omega4] = omega_matrices(gen, w)?;
    let c112 = commutator(gen.z1(), &commutator(gen.z1(), gen.z2())?)?;
    Ok((&omega3 + &omega4).add_scaled(C64::new(-0.5 * u * u * b.b2, 0.0), &c112))
}

/// Fifth-order error operator of a symmetric time-independent splitting:
/// `γ₁[A,[A,[A,[A,B]]]] + γ₂[A,[A,[B,[A,B]]]] + γ₃[B,[A,[A,[A,B]]]]
///  + γ₄[B,[B,[B,[A,B]]]] + γ₅[B,[B,[A,[A,B]]]] + γ₆[A,[B,[B,[A,B]]]]`.
pub fn c5_leading_error(gammas: &[f64; 6], a: &CMatrix, b: &CMatrix) -> Result<CMatrix, MagnusError> {
    let ab = commutator(a, b)?;
    let aab = commutator(a, &ab)?;
    let bab = commutator(b, &ab)?;
    let aaab = commutator(a, &aab)?;
    let abab = commutator(a, &bab)?;
    let bbab = commutator(b, &bab)?;
    let baab = commutator(b, &aab)?;
    let terms = [
        commutator(a, &aaab)?,
        commutator(a, &abab)?,
        commutator(b, &aaab)?,
        commutator(b, &bbab)?,
        commutator(b, &baab)?,
        commutator(a, &bbab)?,
    ];
    let mut out = CMatrix::zeros(a.dim());
    for (g, t) in gammas.iter().zip(&terms) {
        out = out.add_scaled(C64::new(*g, 0.0), t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_norm;

    fn sx() -> CMatrix {
        CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }
    fn sz() -> CMatrix {
        CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    fn gen(x: ScalarFn, y: ScalarFn) -> TwoTermGenerator {
        TwoTermGenerator::from_hamiltonian(&sx(), &sz(), x, y).unwrap()
    }

    fn slope(f: impl Fn(f64) -> f64, dts: &[f64]) -> f64 {
        let pts: Vec<(f64, f64)> = dts.iter().map(|&dt| (dt, f(dt).abs())).collect();
        crate::reference::order_fit_with_floor(&pts, 1e-300).unwrap().slope
    }

    #[test]
    fn constant_coefficients_reduce_to_first_order() {
        let g = gen(ScalarFn::constant(1.0), ScalarFn::constant(1.0));
        for &(mu, dt) in &[(0.0, 0.1), (3.0, 0.4)] {
            let w = Window::new(mu, dt).unwrap();
            let b = beta_set(&g, &w, 6).unwrap();
            assert!((b.b1 - dt).abs() < 1e-15 && (b.b2 - dt).abs() < 1e-15);
            let tol = 1e-14 * dt.powi(2);
            for v in [b.b12, b.b112, b.b212, b.b1112, b.b1212, b.b2112, b.b2212] {
                assert!(v.unwrap().abs() < tol, "{v:?}");
            }
            let [_, o2, o3, o4] = omega_matrices(&g, &w).unwrap();
            assert!(frobenius_norm(&o2) < 1e-14 && frobenius_norm(&o3) < 1e-14 && frobenius_norm(&o4) < 1e-14);
            assert!(frobenius_norm(&upsilon5(&g, &w).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn order_controls_population() {
        let g = gen(ScalarFn::constant(1.0), ScalarFn::identity());
        let w = Window::new(1.0, 0.1).unwrap();
        let b2 = beta_set(&g, &w, 2).unwrap();
        assert_eq!(b2.b12, None);
        assert_eq!(b2.beta12(), Err(MagnusError::Absent("beta12")));
        let b4 = beta_set(&g, &w, 4).unwrap();
        assert!(b4.b12.is_some() && b4.b112.is_none());
        assert_eq!(beta_set(&g, &w, 3), Err(MagnusError::InvalidOrder(3)));
    }

    #[test]
    fn cache_serves_lower_orders_from_higher() {
        let g = gen(ScalarFn::new(f64::sin), ScalarFn::constant(1.0));
        let w = Window::new(0.5, 0.2).unwrap();
        let full = beta_set(&g, &w, 6).unwrap();
        let low = beta_set(&g, &w, 4).unwrap();
        assert_eq!(low.order, 4);
        assert_eq!(low.b12, full.b12);
        assert_eq!(low.b112, None);
        let uncached = beta_set(&g.clone().without_cache(), &w, 4).unwrap();
        assert_eq!(uncached, low);
    }

    #[test]
    fn landau_zener_beta12_closed_form() {
        let g = gen(ScalarFn::constant(1.0), ScalarFn::identity());
        let w = Window::new(1.0, 0.1).unwrap();
        let b = beta_set(&g, &w, 4).unwrap();
        assert!((b.b1 - 0.1).abs() < 1e-15);
        assert!((b.b2 - 0.1).abs() < 1e-15);
        let expected = -0.1f64.powi(3) / 12.0;
        assert!((b.beta12().unwrap() - expected).abs() < 1e-12 * expected.abs());
        assert!((b.u().unwrap() - expected / 0.1).abs() < 1e-12 * (expected / 0.1).abs());
    }

    #[test]
    fn beta12_slope_is_three() {
        let g = gen(ScalarFn::new(f64::sin), ScalarFn::constant(1.0));
        let s = slope(|dt| beta_set(&g, &Window::new(0.7, dt).unwrap(), 4).unwrap().b12.unwrap(), &[0.2, 0.1, 0.05, 0.025]);
        assert!((s - 3.0).abs() < 0.05, "slope={s}");
    }

    #[test]
    fn higher_beta_slopes() {
        let g = gen(ScalarFn::new(|t: f64| (1.3 * t).sin() + 0.5), ScalarFn::new(|t: f64| t.exp()));
        let dts = [0.2, 0.1, 0.05, 0.025];
        let b = |dt: f64| beta_set(&g, &Window::new(0.4, dt).unwrap(), 6).unwrap();
        let s112 = slope(|dt| b(dt).b112.unwrap(), &dts);
        let s1112 = slope(|dt| b(dt).b1112.unwrap(), &dts);
        assert!((s112 - 5.0).abs() < 0.1, "beta112 slope={s112}");
        assert!((s1112 - 5.0).abs() < 0.1, "beta1112 slope={s1112}");
    }

    #[test]
    fn reversed_window_flips_low_order_betas() {
        let g = gen(ScalarFn::new(f64::cos), ScalarFn::new(|t| 1.0 + t));
        let w = Window::new(0.3, 0.2).unwrap();
        let f = beta_set(&g, &w, 4).unwrap();
        let r = beta_set(&g, &w.reversed(), 4).unwrap();
        assert!((f.b1 + r.b1).abs() < 1e-15);
        assert!((f.b2 + r.b2).abs() < 1e-15);
        assert!((f.b12.unwrap() + r.b12.unwrap()).abs() < 1e-15);
        assert!((f.u().unwrap() - r.u().unwrap()).abs() < 1e-12 * f.u().unwrap().abs());
    }

    #[test]
    fn swap_negates_beta12_and_keeps_omega2() {
        let g = gen(ScalarFn::new(f64::sin), ScalarFn::new(|t| 2.0 + t));
        let s = g.swapped();
        let w = Window::new(0.8, 0.15).unwrap();
        let a = beta_set(&g, &w, 6).unwrap();
        let b = beta_set(&s, &w, 6).unwrap();
        assert!((a.b12.unwrap() + b.b12.unwrap()).abs() < 1e-15);
        let oa = omega_matrices(&g, &w).unwrap();
        let ob = omega_matrices(&s, &w).unwrap();
        for k in 0..4 {
            let scale = frobenius_norm(&oa[k]).max(1e-30);
            assert!(frobenius_norm(&(&oa[k] - &ob[k])) < 1e-10 * scale, "Omega{}", k + 1);
        }
    }

    #[test]
    fn omega2_and_upsilon5_are_anti_hermitian() {
        let g = gen(ScalarFn::constant(1.0), ScalarFn::identity());
        assert!(g.is_anti_hermitian());
        let w = Window::new(1.0, 0.1).unwrap();
        let [_, o2, _, _] = omega_matrices(&g, &w).unwrap();
        assert!(o2.anti_hermitian_defect() < 1e-15);
        let u5 = upsilon5(&g, &w).unwrap();
        assert!(u5.anti_hermitian_defect() <= 1e-12 * frobenius_norm(&u5));
    }

    #[test]
    fn upsilon5_slope_is_five() {
        let g = gen(ScalarFn::constant(1.0), ScalarFn::identity());
        let s = slope(|dt| frobenius_norm(&upsilon5(&g, &Window::new(1.0, dt).unwrap()).unwrap()), &[0.2, 0.1, 0.05, 0.025]);
        assert!((s - 5.0).abs() < 0.2, "slope={s}");
    }

    #[test]
    fn upsilon5_rejects_degenerate_beta2() {
        // y(t) = t is odd about μ = 0, so β₂ = 0
        let g = gen(ScalarFn::constant(1.0), ScalarFn::identity());
        let w = Window::new(0.0, 0.1).unwrap();
        assert!(matches!(upsilon5(&g, &w), Err(MagnusError::DegenerateBeta2 { .. })));
    }

    #[test]
    fn c5_trivial_cases() {
        let a = sx().scale(C64::new(0.0, -0.1));
        let b = sz().scale(C64::new(0.0, -0.2));
        assert_eq!(frobenius_norm(&c5_leading_error(&[0.0; 6], &a, &b).unwrap()), 0.0);
        let diag = CMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 5.0]]);
        assert_eq!(frobenius_norm(&c5_leading_error(&[1.0; 6], &sz(), &diag).unwrap()), 0.0);
        assert!(c5_leading_error(&[1.0; 6], &sz(), &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn c5_single_term_matches_hand_nesting() {
        let a = sx();
        let b = sz();
        let mut gam = [0.0; 6];
        gam[3] = 1.0;
        let got = c5_leading_error(&gam, &a, &b).unwrap();
        let ab = commutator(&a, &b).unwrap();
        let mut expect = ab;
        for _ in 0..3 {
            expect = commutator(&b, &expect).unwrap();
        }
        assert!(frobenius_norm(&(&got - &expect)) < 1e-14);
    }

    #[test]
    fn slot_exp_routes() {
        let g = gen(ScalarFn::constant(1.0), ScalarFn::identity());
        assert!(matches!(g.slot_exp(Slot::X), SlotExp::Local(_)));
        assert!(matches!(g.slot_exp(Slot::Y), SlotExp::Diagonal(_)));
        for slot in [Slot::X, Slot::Y] {
            let direct = linalg::expm(&g.operator(slot).scale_real(0.37)).unwrap();
            let fast = g.slot_exp(slot).exp(0.37).unwrap();
            assert!(frobenius_norm(&(&direct - &fast)) < 1e-14);
        }
        let nilpotent = [&[0.0, 1.0, 0.0][..], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]];
        let general = SlotExp::new(&CMatrix::from_real_rows(&nilpotent));
        assert!(matches!(general, SlotExp::General(_)));
        let e = general.exp(2.0).unwrap();
        assert!((e[(0, 2)].re - 2.0).abs() < 1e-15);
        let hermitian = [&[1.0, 0.5, 0.0][..], &[0.5, -1.0, 0.2], &[0.0, 0.2, 0.3]];
        assert!(matches!(SlotExp::new(&CMatrix::from_real_rows(&hermitian)), SlotExp::Spectral { .. }));
    }
}
