//! Model manifolds, scalar fields on them, and the interpolation fields
//! `F = F̃ + C·h` on `M×ℝ` and `M×[0,1]²`.
//!
//! Points live in a fixed five-slot layout `[x, y, z, s, t]`; `t` plays the
//! role of the second square coordinate `s′`. Unused slots stay at zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError, Program, Var};
use crate::linalg::{dot, norm, solve};

pub type ChartPoint = [f64; 5];

pub const SX: usize = 0;
pub const SY: usize = 1;
pub const SZ: usize = 2;
pub const SS: usize = 3;
pub const ST: usize = 4;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is not near a critical point (|grad| = {grad:e})")]
    NotNearCritical { grad: f64 },
    #[error("profile derivative nearly vanishes on the blend window (min |h'| = {min:e})")]
    ProfileDegenerate { min: f64 },
    #[error("interior critical point at {point:?}")]
    InteriorCriticalPoint { point: Vec<f64> },
    #[error("field is not 1-periodic on the torus (defect {defect:e})")]
    NotPeriodic { defect: f64 },
    #[error("variable `{var}` is not a coordinate of {manifold}")]
    ForeignVariable { var: &'static str, manifold: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Torus,
    Sphere,
    ProductR(Box<Manifold>),
    ProductSquare(Box<Manifold>),
}

impl Manifold {
    pub fn product_r(base: Manifold) -> Manifold {
        Manifold::ProductR(Box::new(base))
    }

    pub fn product_square(base: Manifold) -> Manifold {
        Manifold::ProductSquare(Box::new(base))
    }

    /// The closed surface factor.
    pub fn base(&self) -> &Manifold {
        match self {
            Manifold::ProductR(b) | Manifold::ProductSquare(b) => b.base(),
            m => m,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.base(), Manifold::Sphere)
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.base(), Manifold::Torus)
    }

    pub fn has_s(&self) -> bool {
        !matches!(self, Manifold::Torus | Manifold::Sphere)
    }

    pub fn has_t(&self) -> bool {
        matches!(self, Manifold::ProductSquare(_))
    }

    fn base_slots(&self) -> &'static [usize] {
        if self.is_sphere() {
            &[SX, SY, SZ]
        } else {
            &[SX, SY]
        }
    }

    /// Active chart slots in order.
    pub fn slots(&self) -> Vec<usize> {
        let mut v = self.base_slots().to_vec();
        if self.has_s() {
            v.push(SS);
        }
        if self.has_t() {
            v.push(ST);
        }
        v
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        2 + usize::from(self.has_s()) + usize::from(self.has_t())
    }

    pub fn allowed_vars(&self) -> Vec<Var> {
        self.slots().into_iter().map(|i| Var::ALL[i]).collect()
    }

    pub fn name(&self) -> String {
        match self {
            Manifold::Torus => "T2".into(),
            Manifold::Sphere => "S2".into(),
            Manifold::ProductR(b) => format!("{}xR", b.name()),
            Manifold::ProductSquare(b) => format!("{}x[0,1]^2", b.name()),
        }
    }

    pub fn to_coords(&self, p: &ChartPoint) -> Vec<f64> {
        self.slots().into_iter().map(|i| p[i]).collect()
    }

    pub fn from_coords(&self, c: &[f64]) -> ChartPoint {
        let mut p = [0.0; 5];
        for (i, v) in self.slots().into_iter().zip(c) {
            p[i] = *v;
        }
        p
    }

    /// Torus coordinates wrap into `[0,1)`; sphere points are renormalised.
    pub fn normalize(&self, p: &ChartPoint) -> ChartPoint {
        let mut q = *p;
        if self.is_torus() {
            for i in [SX, SY] {
                let mut w = q[i] - q[i].floor();
                if w >= 1.0 - 1e-12 {
                    w = 0.0;
                }
                q[i] = w;
            }
        } else {
            let r = (q[SX] * q[SX] + q[SY] * q[SY] + q[SZ] * q[SZ]).sqrt();
            for i in [SX, SY, SZ] {
                q[i] /= r;
            }
        }
        q
    }

    /// Keeps the point on the manifold without wrapping the torus, so that
    /// integrated paths remain continuous in the universal cover.
    pub fn reproject(&self, p: &mut ChartPoint) {
        if self.is_sphere() {
            let r = (p[SX] * p[SX] + p[SY] * p[SY] + p[SZ] * p[SZ]).sqrt();
            for i in [SX, SY, SZ] {
                p[i] /= r;
            }
        }
    }

    /// `q − p` with torus components taken to the nearest image.
    pub fn displacement(&self, p: &ChartPoint, q: &ChartPoint) -> ChartPoint {
        let mut d = [0.0; 5];
        for i in self.slots() {
            d[i] = q[i] - p[i];
        }
        if self.is_torus() {
            for i in [SX, SY] {
                d[i] -= d[i].round();
            }
        }
        d
    }

    pub fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> f64 {
        norm(&self.displacement(p, q))
    }

    /// Integer deck translation carrying `cp` to the image nearest `p`.
    pub fn lift_of(&self, cp: &ChartPoint, p: &ChartPoint) -> [i64; 2] {
        if self.is_torus() {
            [(p[SX] - cp[SX]).round() as i64, (p[SY] - cp[SY]).round() as i64]
        } else {
            [0, 0]
        }
    }

    /// Orthonormal tangent basis in five-slot ambient coordinates.
    pub fn tangent_frame(&self, p: &ChartPoint) -> Vec<ChartPoint> {
        let mut frame = Vec::with_capacity(4);
        if self.is_sphere() {
            let n = [p[SX], p[SY], p[SZ]];
            let drop = (0..3)
                .max_by(|&i, &j| n[i].abs().partial_cmp(&n[j].abs()).unwrap().then(j.cmp(&i)))
                .unwrap();
            let mut basis: Vec<[f64; 3]> = Vec::new();
            for axis in 0..3 {
                if axis == drop {
                    continue;
                }
                let mut v = [0.0; 3];
                v[axis] = 1.0;
                let vn = dot(&v, &n);
                for k in 0..3 {
                    v[k] -= vn * n[k];
                }
                for b in &basis {
                    let vb = dot(&v, b);
                    for k in 0..3 {
                        v[k] -= vb * b[k];
                    }
                }
                let r = norm(&v);
                for x in v.iter_mut() {
                    *x /= r;
                }
                basis.push(v);
            }
            for b in basis {
                frame.push([b[0], b[1], b[2], 0.0, 0.0]);
            }
        } else {
            frame.push([1.0, 0.0, 0.0, 0.0, 0.0]);
            frame.push([0.0, 1.0, 0.0, 0.0, 0.0]);
        }
        if self.has_s() {
            frame.push([0.0, 0.0, 0.0, 1.0, 0.0]);
        }
        if self.has_t() {
            frame.push([0.0, 0.0, 0.0, 0.0, 1.0]);
        }
        frame
    }

    /// Moves from `p` along the ambient vector `v` and reprojects.
    pub fn retract(&self, p: &ChartPoint, v: &ChartPoint) -> ChartPoint {
        let mut q = *p;
        for i in 0..5 {
            q[i] += v[i];
        }
        self.reproject(&mut q);
        q
    }

    /// Seed points on the closed factor: an `n×n` grid on the torus, an
    /// `n`-latitude by `n`-longitude grid plus both poles on the sphere.
    pub fn base_grid(&self, n: usize) -> Vec<ChartPoint> {
        let mut out = Vec::new();
        if self.is_torus() {
            for i in 0..n {
                for j in 0..n {
                    out.push([i as f64 / n as f64, j as f64 / n as f64, 0.0, 0.0, 0.0]);
                }
            }
        } else {
            out.push([0.0, 0.0, 1.0, 0.0, 0.0]);
            out.push([0.0, 0.0, -1.0, 0.0, 0.0]);
            for i in 0..n {
                let theta = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                for j in 0..n {
                    let phi = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                    out.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos(), 0.0, 0.0]);
                }
            }
        }
        out
    }
}

/// A smooth function with compiled first and second derivatives.
#[derive(Clone, Debug)]
pub struct Smooth {
    pub expr: Expr,
    value: Program,
    grad: Vec<Program>,
    hess: Vec<Vec<Program>>,
}

impl Smooth {
    pub fn new(expr: Expr) -> Smooth {
        let value = Program::compile(&expr);
        let firsts: Vec<Expr> = Var::ALL.iter().map(|v| expr.diff(*v)).collect();
        let grad = firsts.iter().map(Program::compile).collect();
        let hess = (0..5)
            .map(|i| (0..5).map(|j| Program::compile(&firsts[i.min(j)].diff(Var::ALL[i.max(j)]))).collect())
            .collect();
        Smooth { expr, value, grad, hess }
    }

    #[inline]
    pub fn value(&self, p: &ChartPoint) -> f64 {
        self.value.run(p)
    }

    #[inline]
    pub fn grad_into(&self, p: &ChartPoint, slots: &[usize], out: &mut ChartPoint) {
        for &i in slots {
            out[i] = self.grad[i].run(p);
        }
    }

    pub fn hess_entry(&self, p: &ChartPoint, i: usize, j: usize) -> f64 {
        self.hess[i][j].run(p)
    }
}

/// Smooth monotone cutoff, `0` for `s ≤ ε` and `1` for `s ≥ 1−ε`.
///
/// `ρ(s) = S(S(u))` with `S(u) = 3u² − 2u³` and `u = clamp((s−ε)/(1−2ε))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blend {
    pub eps: f64,
}

impl Blend {
    fn u(&self, s: f64) -> (f64, f64) {
        let w = 1.0 - 2.0 * self.eps;
        if w <= 0.0 {
            return (if s < 0.5 { 0.0 } else { 1.0 }, 0.0);
        }
        ((s - self.eps) / w, 1.0 / w)
    }

    /// `(ρ, ρ′, ρ″)` at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let (u, du) = self.u(s);
        if u <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if u >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let sm = |x: f64| 3.0 * x * x - 2.0 * x * x * x;
        let d1 = |x: f64| 6.0 * x - 6.0 * x * x;
        let d2 = |x: f64| 6.0 - 12.0 * x;
        let inner = sm(u);
        let rho = sm(inner);
        let r1 = d1(inner) * d1(u) * du;
        let r2 = (d2(inner) * d1(u) * d1(u) + d1(inner) * d2(u)) * du * du;
        (rho, r1, r2)
    }

    pub fn max_slope(&self) -> f64 {
        let w = 1.0 - 2.0 * self.eps;
        if w <= 0.0 {
            0.0
        } else {
            2.25 / w
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Plain(Smooth),
    Interp {
        f1: Smooth,
        f2: Smooth,
        same: bool,
        blend: Blend,
        c: f64,
        h: Smooth,
    },
    Square {
        f1: Smooth,
        f2: Smooth,
        f3: Smooth,
        blend: Blend,
        c: f64,
        h: Smooth,
    },
}

/// A scalar field on a model manifold.
#[derive(Clone, Debug)]
pub struct ScalarField {
    manifold: Manifold,
    slots: Vec<usize>,
    base_slots: Vec<usize>,
    kind: Kind,
}

/// Value, ambient gradient and ambient Hessian at a point.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: ChartPoint,
    pub hess: [[f64; 5]; 5],
}

fn check_vars(e: &Expr, allowed: &[Var], m: &Manifold) -> Result<(), GeometryError> {
    for v in e.free_vars() {
        if !allowed.contains(&v) {
            return Err(GeometryError::ForeignVariable { var: v.name(), manifold: m.name() });
        }
    }
    Ok(())
}

fn check_periodic(f: &Smooth) -> Result<(), GeometryError> {
    let mut defect: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let p = [0.0137 + i as f64 * 0.0971, 0.0291 + j as f64 * 0.0953, 0.0, 0.0, 0.0];
            let v = f.value(&p);
            for k in [SX, SY] {
                let mut q = p;
                q[k] += 1.0;
                defect = defect.max((f.value(&q) - v).abs());
            }
        }
    }
    if defect > 1e-10 {
        return Err(GeometryError::NotPeriodic { defect });
    }
    Ok(())
}

fn base_smooth(base: &Manifold, e: &Expr) -> Result<Smooth, GeometryError> {
    check_vars(e, &base.allowed_vars(), base)?;
    let f = Smooth::new(e.clone());
    if base.is_torus() {
        check_periodic(&f)?;
    }
    Ok(f)
}

fn profile_smooth(h: &Expr) -> Result<Smooth, GeometryError> {
    check_vars(h, &[Var::S], &Manifold::product_r(Manifold::Torus))?;
    Ok(Smooth::new(h.clone()))
}

fn at_s(s: f64) -> ChartPoint {
    [0.0, 0.0, 0.0, s, 0.0]
}

impl ScalarField {
    fn with_kind(manifold: Manifold, kind: Kind) -> ScalarField {
        let slots = manifold.slots();
        let base_slots = manifold.base_slots().to_vec();
        ScalarField { manifold, slots, base_slots, kind }
    }

    /// A field given directly by one expression in the manifold's coordinates.
    pub fn new(manifold: Manifold, e: &Expr) -> Result<ScalarField, GeometryError> {
        check_vars(e, &manifold.allowed_vars(), &manifold)?;
        let f = Smooth::new(e.clone());
        if manifold.is_torus() && !manifold.has_s() {
            check_periodic(&f)?;
        }
        Ok(Self::with_kind(manifold, Kind::Plain(f)))
    }

    pub fn parse(manifold: Manifold, src: &str) -> Result<ScalarField, GeometryError> {
        Self::new(manifold, &expr::parse(src)?)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn value(&self, p: &ChartPoint) -> f64 {
        match &self.kind {
            Kind::Plain(f) => f.value(p),
            Kind::Interp { f1, f2, same, blend, c, h } => {
                let (r, _, _) = blend.eval(p[SS]);
                let base = if *same || r == 0.0 {
                    f1.value(p)
                } else if r == 1.0 {
                    f2.value(p)
                } else {
                    (1.0 - r) * f1.value(p) + r * f2.value(p)
                };
                base + c * h.value(&at_s(p[SS]))
            }
            Kind::Square { f1, f2, f3, blend, c, h } => {
                let (rs, _, _) = blend.eval(p[SS]);
                let (rt, _, _) = blend.eval(p[ST]);
                let a = mix(rs, || f2.value(p), || f3.value(p));
                let base = mix(rt, || f1.value(p), || a);
                base + c * (h.value(&at_s(p[SS])) + h.value(&at_s(p[ST])))
            }
        }
    }

    /// Euclidean gradient in the chart (ambient for the sphere).
    pub fn ambient_grad(&self, p: &ChartPoint) -> ChartPoint {
        let mut g = [0.0; 5];
        match &self.kind {
            Kind::Plain(f) => f.grad_into(p, &self.slots, &mut g),
            Kind::Interp { f1, f2, same, blend, c, h } => {
                let (r, r1, _) = blend.eval(p[SS]);
                let hs = at_s(p[SS]);
                let dh = h.grad[SS].run(&hs);
                if *same || r == 0.0 {
                    f1.grad_into(p, &self.base_slots, &mut g);
                    g[SS] = c * dh;
                    if !*same && r1 != 0.0 {
                        g[SS] += r1 * (f2.value(p) - f1.value(p));
                    }
                } else if r == 1.0 {
                    f2.grad_into(p, &self.base_slots, &mut g);
                    g[SS] = c * dh;
                } else {
                    let mut g1 = [0.0; 5];
                    let mut g2 = [0.0; 5];
                    f1.grad_into(p, &self.base_slots, &mut g1);
                    f2.grad_into(p, &self.base_slots, &mut g2);
                    for &i in &self.base_slots {
                        g[i] = (1.0 - r) * g1[i] + r * g2[i];
                    }
                    g[SS] = r1 * (f2.value(p) - f1.value(p)) + c * dh;
                }
            }
            Kind::Square { .. } => {
                let j = self.jet_inner(p, false);
                g = j.grad;
            }
        }
        g
    }

    /// Riemannian gradient as an ambient vector.
    pub fn grad(&self, p: &ChartPoint) -> ChartPoint {
        let mut g = self.ambient_grad(p);
        if self.manifold.is_sphere() {
            let pg = g[SX] * p[SX] + g[SY] * p[SY] + g[SZ] * p[SZ];
            for i in [SX, SY, SZ] {
                g[i] -= pg * p[i];
            }
        }
        g
    }

    pub fn jet(&self, p: &ChartPoint) -> Jet {
        self.jet_inner(p, true)
    }

    fn jet_inner(&self, p: &ChartPoint, want_hess: bool) -> Jet {
        let mut out = Jet { value: 0.0, grad: [0.0; 5], hess: [[0.0; 5]; 5] };
        let slots = &self.slots;
        let bs = &self.base_slots;
        let base_jet = |f: &Smooth| -> Jet {
            let mut j = Jet { value: f.value(p), grad: [0.0; 5], hess: [[0.0; 5]; 5] };
            f.grad_into(p, bs, &mut j.grad);
            if want_hess {
                for &a in bs {
                    for &b in bs {
                        j.hess[a][b] = f.hess_entry(p, a, b);
                    }
                }
            }
            j
        };
        match &self.kind {
            Kind::Plain(f) => {
                out.value = f.value(p);
                f.grad_into(p, slots, &mut out.grad);
                if want_hess {
                    for &a in slots {
                        for &b in slots {
                            out.hess[a][b] = f.hess_entry(p, a, b);
                        }
                    }
                }
            }
            Kind::Interp { f1, f2, same, blend, c, h } => {
                let (r, r1, r2) = blend.eval(p[SS]);
                let j1 = base_jet(f1);
                let j2 = if *same { j1 } else { base_jet(f2) };
                let hs = at_s(p[SS]);
                out.value = (1.0 - r) * j1.value + r * j2.value + c * h.value(&hs);
                if r == 0.0 {
                    out.value = j1.value + c * h.value(&hs);
                }
                for &a in bs {
                    out.grad[a] = (1.0 - r) * j1.grad[a] + r * j2.grad[a];
                    for &b in bs {
                        out.hess[a][b] = (1.0 - r) * j1.hess[a][b] + r * j2.hess[a][b];
                    }
                    out.hess[a][SS] = r1 * (j2.grad[a] - j1.grad[a]);
                    out.hess[SS][a] = out.hess[a][SS];
                }
                out.grad[SS] = r1 * (j2.value - j1.value) + c * h.grad[SS].run(&hs);
                out.hess[SS][SS] = r2 * (j2.value - j1.value) + c * h.hess_entry(&hs, SS, SS);
            }
            Kind::Square { f1, f2, f3, blend, c, h } => {
                let (rs, rs1, rs2) = blend.eval(p[SS]);
                let (rt, rt1, rt2) = blend.eval(p[ST]);
                let j1 = base_jet(f1);
                let j2 = base_jet(f2);
                let j3 = base_jet(f3);
                let hs = at_s(p[SS]);
                let ht = at_s(p[ST]);
                // A = (1−ρs) f2 + ρs f3 ; F̃ = (1−ρt) f1 + ρt A
                let a_val = (1.0 - rs) * j2.value + rs * j3.value;
                out.value = (1.0 - rt) * j1.value + rt * a_val + c * (h.value(&hs) + h.value(&ht));
                for &a in bs {
                    let a_g = (1.0 - rs) * j2.grad[a] + rs * j3.grad[a];
                    out.grad[a] = (1.0 - rt) * j1.grad[a] + rt * a_g;
                    for &b in bs {
                        let a_h = (1.0 - rs) * j2.hess[a][b] + rs * j3.hess[a][b];
                        out.hess[a][b] = (1.0 - rt) * j1.hess[a][b] + rt * a_h;
                    }
                    out.hess[a][SS] = rt * rs1 * (j3.grad[a] - j2.grad[a]);
                    out.hess[SS][a] = out.hess[a][SS];
                    out.hess[a][ST] = rt1 * (a_g - j1.grad[a]);
                    out.hess[ST][a] = out.hess[a][ST];
                }
                out.grad[SS] = rt * rs1 * (j3.value - j2.value) + c * h.grad[SS].run(&hs);
                out.grad[ST] = rt1 * (a_val - j1.value) + c * h.grad[SS].run(&ht);
                out.hess[SS][SS] = rt * rs2 * (j3.value - j2.value) + c * h.hess_entry(&hs, SS, SS);
                out.hess[ST][ST] = rt2 * (a_val - j1.value) + c * h.hess_entry(&ht, SS, SS);
                out.hess[SS][ST] = rt1 * rs1 * (j3.value - j2.value);
                out.hess[ST][SS] = out.hess[SS][ST];
            }
        }
        out
    }

    /// Riemannian gradient and Hessian expressed in the tangent frame at `p`.
    pub fn frame_jet(&self, p: &ChartPoint) -> (Vec<ChartPoint>, Vec<f64>, Vec<Vec<f64>>) {
        let frame = self.manifold.tangent_frame(p);
        let j = self.jet(p);
        let n = frame.len();
        let g: Vec<f64> = frame.iter().map(|e| dot(e, &j.grad)).collect();
        let radial = if self.manifold.is_sphere() {
            j.grad[SX] * p[SX] + j.grad[SY] * p[SY] + j.grad[SZ] * p[SZ]
        } else {
            0.0
        };
        let mut h = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for i in 0..5 {
                    if frame[a][i] == 0.0 {
                        continue;
                    }
                    for k in 0..5 {
                        acc += frame[a][i] * j.hess[i][k] * frame[b][k];
                    }
                }
                h[a][b] = acc;
            }
            let on_sphere = frame[a][SX] != 0.0 || frame[a][SY] != 0.0 || frame[a][SZ] != 0.0;
            if on_sphere {
                h[a][a] -= radial;
            }
        }
        (frame, g, h)
    }

    /// Hessian in the tangent frame; only meaningful near a critical point.
    pub fn hessian(&self, p: &ChartPoint) -> Result<Vec<Vec<f64>>, GeometryError> {
        let (_, g, h) = self.frame_jet(p);
        let gn = norm(&g);
        if gn > 1e-6 {
            return Err(GeometryError::NotNearCritical { grad: gn });
        }
        Ok(h)
    }

    /// One Newton iteration toward a zero of the gradient.
    pub fn newton_step(&self, p: &ChartPoint) -> Option<(ChartPoint, f64)> {
        let (frame, g, h) = self.frame_jet(p);
        let gn = norm(&g);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let d = solve(&h, &neg)?;
        let mut step = [0.0; 5];
        let mut len = 0.0;
        for (k, e) in frame.iter().enumerate() {
            for i in 0..5 {
                step[i] += d[k] * e[i];
            }
            len += d[k] * d[k];
        }
        let len = len.sqrt();
        if len > 0.05 {
            for x in step.iter_mut() {
                *x *= 0.05 / len;
            }
        }
        Some((self.manifold.retract(p, &step), gn))
    }

    /// Damped Newton iteration; returns the point once `|grad| ≤ tol`.
    pub fn newton(&self, p0: &ChartPoint, tol: f64, max_iter: usize) -> Option<ChartPoint> {
        let mut p = *p0;
        for _ in 0..max_iter {
            let gn = norm(&self.grad(&p));
            if gn <= tol {
                return Some(p);
            }
            let (q, _) = self.newton_step(&p)?;
            if q.iter().any(|x| !x.is_finite()) {
                return None;
            }
            if self.manifold.has_s() && (q[SS].abs() > 10.0 || q[ST].abs() > 10.0) {
                return None;
            }
            p = q;
        }
        let gn = norm(&self.grad(&p));
        (gn <= tol).then_some(p)
    }
}

fn mix(r: f64, a: impl FnOnce() -> f64, b: impl FnOnce() -> f64) -> f64 {
    if r == 0.0 {
        a()
    } else if r == 1.0 {
        b()
    } else {
        (1.0 - r) * a() + r * b()
    }
}

/// Data for an interpolation pair `F = F̃ + C·h` on `M×ℝ`.
#[derive(Clone, Debug)]
pub struct InterpolationSpec {
    pub base: Manifold,
    pub f1: Expr,
    pub f2: Expr,
    pub eps: f64,
    pub h: Expr,
    pub c: Option<f64>,
}

impl InterpolationSpec {
    pub fn new(base: Manifold, f1: Expr, f2: Expr) -> InterpolationSpec {
        InterpolationSpec { base, f1, f2, eps: 0.1, h: standard_profile(), c: None }
    }
}

/// `h(s) = s³ − (3/2)s²`: maximum at 0, minimum at 1.
pub fn standard_profile() -> Expr {
    expr::parse("pow(s,3)-1.5*pow(s,2)").expect("static profile")
}

/// `min |h′|` over `[ε, 1−ε]`, sampled on 401 points.
fn min_profile_slope(h: &Smooth, eps: f64) -> f64 {
    let (lo, hi) = if eps <= 0.5 { (eps, 1.0 - eps) } else { (1.0 - eps, eps) };
    (0..=400)
        .map(|k| {
            let s = lo + (hi - lo) * k as f64 / 400.0;
            h.grad[SS].run(&at_s(s)).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

fn max_blend_slope(blend: &Blend) -> f64 {
    (0..=400)
        .map(|k| blend.eval(blend.eps + (1.0 - 2.0 * blend.eps) * k as f64 / 400.0).1.abs())
        .fold(0.0, f64::max)
}

/// `C = (1 + max |∂_s F̃|) / min_{[ε,1−ε]} |h′|`.
pub fn pick_c(spec: &InterpolationSpec) -> Result<f64, GeometryError> {
    let h = profile_smooth(&spec.h)?;
    let f1 = base_smooth(&spec.base, &spec.f1)?;
    let f2 = base_smooth(&spec.base, &spec.f2)?;
    let min_dh = min_profile_slope(&h, spec.eps);
    if min_dh < 1e-9 {
        return Err(GeometryError::ProfileDegenerate { min: min_dh });
    }
    let gap = spec
        .base
        .base_grid(64)
        .iter()
        .map(|p| (f2.value(p) - f1.value(p)).abs())
        .fold(0.0, f64::max);
    let slope = max_blend_slope(&Blend { eps: spec.eps });
    Ok((1.0 + slope * gap) / min_dh)
}

/// Builds `F` and checks by a Newton sweep that it has no critical point
/// with `s ∈ (0,1)`.
pub fn build_interpolation(spec: &InterpolationSpec) -> Result<ScalarField, GeometryError> {
    let c = match spec.c {
        Some(c) => c,
        None => pick_c(spec)?,
    };
    let f1 = base_smooth(&spec.base, &spec.f1)?;
    let f2 = base_smooth(&spec.base, &spec.f2)?;
    let same = spec.f1 == spec.f2;
    let h = profile_smooth(&spec.h)?;
    let field = ScalarField::with_kind(
        Manifold::product_r(spec.base.clone()),
        Kind::Interp { f1, f2, same, blend: Blend { eps: spec.eps }, c, h },
    );
    field.check_no_interior_critical(&[SS])?;
    Ok(field)
}

/// `F = f + C·h` on `M×ℝ`, the split field used on either side of a graft.
pub fn product_field(base: &Manifold, f: &Expr, h: &Expr, c: f64) -> Result<ScalarField, GeometryError> {
    let f1 = base_smooth(base, f)?;
    let h = profile_smooth(h)?;
    Ok(ScalarField::with_kind(
        Manifold::product_r(base.clone()),
        Kind::Interp { f2: f1.clone(), f1, same: true, blend: Blend { eps: 0.1 }, c, h },
    ))
}

/// Corner functions of an interpolation square.
#[derive(Clone, Debug)]
pub struct SquareSpec {
    pub base: Manifold,
    pub f1: Expr,
    pub f2: Expr,
    pub f3: Expr,
    pub eps: f64,
    pub h: Expr,
    pub c: Option<f64>,
}

impl SquareSpec {
    pub fn new(base: Manifold, f1: Expr, f2: Expr, f3: Expr) -> SquareSpec {
        SquareSpec { base, f1, f2, f3, eps: 0.1, h: standard_profile(), c: None }
    }

    /// The edge interpolations `(f1→f2, f2→f3, f1→f3)` sharing ε, h and C.
    pub fn edges(&self, c: f64) -> [InterpolationSpec; 3] {
        let mk = |a: &Expr, b: &Expr| InterpolationSpec {
            base: self.base.clone(),
            f1: a.clone(),
            f2: b.clone(),
            eps: self.eps,
            h: self.h.clone(),
            c: Some(c),
        };
        [mk(&self.f1, &self.f2), mk(&self.f2, &self.f3), mk(&self.f1, &self.f3)]
    }
}

/// Same bound as [`pick_c`], maximised over both square directions.
pub fn pick_c_square(spec: &SquareSpec) -> Result<f64, GeometryError> {
    let h = profile_smooth(&spec.h)?;
    let f1 = base_smooth(&spec.base, &spec.f1)?;
    let f2 = base_smooth(&spec.base, &spec.f2)?;
    let f3 = base_smooth(&spec.base, &spec.f3)?;
    let min_dh = min_profile_slope(&h, spec.eps);
    if min_dh < 1e-9 {
        return Err(GeometryError::ProfileDegenerate { min: min_dh });
    }
    let blend = Blend { eps: spec.eps };
    let slope = max_blend_slope(&blend);
    let mut gap: f64 = 0.0;
    for p in spec.base.base_grid(64) {
        let (v1, v2, v3) = (f1.value(&p), f2.value(&p), f3.value(&p));
        gap = gap.max((v3 - v2).abs()).max((v2 - v1).abs()).max((v3 - v1).abs());
    }
    Ok((1.0 + slope * gap) / min_dh)
}

pub fn build_square(spec: &SquareSpec) -> Result<ScalarField, GeometryError> {
    let c = match spec.c {
        Some(c) => c,
        None => pick_c_square(spec)?,
    };
    let field = ScalarField::with_kind(
        Manifold::product_square(spec.base.clone()),
        Kind::Square {
            f1: base_smooth(&spec.base, &spec.f1)?,
            f2: base_smooth(&spec.base, &spec.f2)?,
            f3: base_smooth(&spec.base, &spec.f3)?,
            blend: Blend { eps: spec.eps },
            c,
            h: profile_smooth(&spec.h)?,
        },
    );
    field.check_no_interior_critical(&[SS, ST])?;
    Ok(field)
}

impl ScalarField {
    pub fn interpolation_constant(&self) -> Option<f64> {
        match &self.kind {
            Kind::Plain(_) => None,
            Kind::Interp { c, .. } | Kind::Square { c, .. } => Some(*c),
        }
    }

    pub fn blend(&self) -> Option<Blend> {
        match &self.kind {
            Kind::Plain(_) => None,
            Kind::Interp { blend, .. } | Kind::Square { blend, .. } => Some(*blend),
        }
    }

    fn check_no_interior_critical(&self, params: &[usize]) -> Result<(), GeometryError> {
        let levels: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
        let base = self.manifold.base().base_grid(if params.len() == 1 { 12 } else { 8 });
        let mut seeds = Vec::new();
        for b in &base {
            if params.len() == 1 {
                for &s in &levels {
                    let mut p = *b;
                    p[SS] = s;
                    seeds.push(p);
                }
            } else {
                for &s in &levels {
                    for &t in &levels {
                        let mut p = *b;
                        p[SS] = s;
                        p[ST] = t;
                        seeds.push(p);
                    }
                }
            }
        }
        use rayon::prelude::*;
        let hit = seeds.par_iter().find_map_first(|seed| {
            let p = self.newton(seed, 1e-10, 60)?;
            let inside = params.iter().any(|&k| p[k] > 1e-6 && p[k] < 1.0 - 1e-6);
            inside.then_some(p)
        });
        match hit {
            Some(p) => Err(GeometryError::InteriorCriticalPoint { point: self.manifold.to_coords(&p) }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Env;
    use std::f64::consts::PI;

    fn coscos() -> ScalarField {
        ScalarField::parse(Manifold::Torus, "cos(2*pi*x)+cos(2*pi*y)").unwrap()
    }

    fn height() -> ScalarField {
        ScalarField::parse(Manifold::Sphere, "z").unwrap()
    }

    #[test]
    fn gradient_examples() {
        let g = coscos().grad(&[0.0; 5]);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
        let g = height().grad(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
        let g = height().grad(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g, [0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn hessian_examples() {
        let f = coscos();
        let k = 4.0 * PI * PI;
        let h = f.hessian(&[0.0; 5]).unwrap();
        assert!((h[0][0] + k).abs() < 1e-9 && (h[1][1] + k).abs() < 1e-9 && h[0][1].abs() < 1e-12);
        let h = f.hessian(&[0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((h[0][0] - k).abs() < 1e-9 && (h[1][1] + k).abs() < 1e-9);
        let h = height().hessian(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(h, vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
        assert!(matches!(
            f.hessian(&[0.25, 0.0, 0.0, 0.0, 0.0]),
            Err(GeometryError::NotNearCritical { .. })
        ));
    }

    #[test]
    fn blend_is_exact_outside_window() {
        let b = Blend { eps: 0.1 };
        assert_eq!(b.eval(0.05), (0.0, 0.0, 0.0));
        assert_eq!(b.eval(0.1), (0.0, 0.0, 0.0));
        assert_eq!(b.eval(0.95), (1.0, 0.0, 0.0));
        let (r, r1, _) = b.eval(0.5);
        assert!((r - 0.5).abs() < 1e-15);
        assert!((r1 - b.max_slope()).abs() < 1e-12);
    }

    #[test]
    fn blend_derivatives_match_differences() {
        let b = Blend { eps: 0.1 };
        for k in 1..40 {
            let s = 0.1 + 0.8 * k as f64 / 40.0;
            let d = 1e-6;
            let (_, r1, r2) = b.eval(s);
            let fd1 = (b.eval(s + d).0 - b.eval(s - d).0) / (2.0 * d);
            let fd2 = (b.eval(s + d).1 - b.eval(s - d).1) / (2.0 * d);
            assert!((r1 - fd1).abs() < 1e-6, "{s}");
            assert!((r2 - fd2).abs() < 1e-4, "{s}");
        }
    }

    fn torus_spec(f1: &str, f2: &str) -> InterpolationSpec {
        InterpolationSpec::new(Manifold::Torus, expr::parse(f1).unwrap(), expr::parse(f2).unwrap())
    }

    #[test]
    fn pick_c_examples() {
        let f = "cos(2*pi*x)+cos(2*pi*y)";
        let c = pick_c(&torus_spec(f, f)).unwrap();
        assert!((c - 1.0 / 0.27).abs() < 1e-9, "{c}");
        // max |f2 - f1| · max ρ′ = 2
        let shift = 2.0 / Blend { eps: 0.1 }.max_slope();
        let c = pick_c(&torus_spec(f, &format!("{f} + {shift:?}"))).unwrap();
        assert!((c - 3.0 / 0.27).abs() < 1e-6, "{c}");
        let mut spec = torus_spec(f, f);
        spec.eps = 0.5;
        let c = pick_c(&spec).unwrap();
        assert!((c - 1.0 / 0.75).abs() < 1e-12);
        let mut spec = torus_spec(f, f);
        spec.h = expr::parse("pow(s,3)").unwrap();
        spec.eps = 0.0;
        assert!(matches!(pick_c(&spec), Err(GeometryError::ProfileDegenerate { .. })));
    }

    #[test]
    fn boundary_slices_are_exact() {
        let f = "cos(2*pi*x)+cos(2*pi*y)";
        let g = "cos(2*pi*(x-0.3))+cos(2*pi*(y-0.2))";
        let field = build_interpolation(&torus_spec(f, g)).unwrap();
        let f1 = coscos();
        let c = field.interpolation_constant().unwrap();
        let h = standard_profile();
        for k in 0..100 {
            let x = (k as f64 * 0.6180339887) % 1.0;
            let y = (k as f64 * 0.41421356) % 1.0;
            let s = 0.1 * (k as f64 / 99.0);
            let p = [x, y, 0.0, s, 0.0];
            let hs = h.eval(&Env::new().with(Var::S, s)).unwrap();
            assert_eq!(field.value(&p), f1.value(&p) + c * hs);
        }
    }

    #[test]
    fn undersized_constant_creates_interior_critical_points() {
        let f = "cos(2*pi*x)+cos(2*pi*y)";
        let mut spec = torus_spec(f, &format!("{f} + 1"));
        spec.eps = 0.4;
        let c = pick_c(&spec).unwrap();
        spec.c = Some(c);
        assert!(build_interpolation(&spec).is_ok());
        spec.c = Some(c / 2.0);
        assert!(matches!(build_interpolation(&spec), Err(GeometryError::InteriorCriticalPoint { .. })));
    }

    #[test]
    fn square_restricts_to_edges() {
        let f1 = "cos(2*pi*x)+cos(2*pi*y)";
        let f2 = "cos(2*pi*(x-0.1))+cos(2*pi*y)";
        let f3 = "cos(2*pi*(x-0.3))+cos(2*pi*(y-0.2))";
        let spec = SquareSpec::new(
            Manifold::Torus,
            expr::parse(f1).unwrap(),
            expr::parse(f2).unwrap(),
            expr::parse(f3).unwrap(),
        );
        let sq = build_square(&spec).unwrap();
        let c = sq.interpolation_constant().unwrap();
        let [e12, e23, e13] = spec.edges(c);
        let e12 = build_interpolation(&e12).unwrap();
        let e23 = build_interpolation(&e23).unwrap();
        let e13 = build_interpolation(&e13).unwrap();
        let h = |s: f64| c * (s * s * s - 1.5 * s * s);
        for k in 0..50 {
            let x = (k as f64 * 0.6180339887) % 1.0;
            let y = (k as f64 * 0.41421356) % 1.0;
            let u = k as f64 / 49.0;
            let lo = 0.1 * u;
            let hi = 0.9 + 0.1 * u;
            // s ≤ ε: the f1→f2 interpolation running in s′
            let p = [x, y, 0.0, lo, u];
            let q = [x, y, 0.0, u, 0.0];
            assert!((sq.value(&p) - (e12.value(&q) + h(lo))).abs() < 1e-12);
            // s ≥ 1−ε: f1→f3 in s′
            let p = [x, y, 0.0, hi, u];
            assert!((sq.value(&p) - (e13.value(&q) + h(hi))).abs() < 1e-12);
            // s′ ≥ 1−ε: f2→f3 in s
            let p = [x, y, 0.0, u, hi];
            assert!((sq.value(&p) - (e23.value(&q) + h(hi))).abs() < 1e-12);
        }
    }

    #[test]
    fn square_jet_matches_differences() {
        let spec = SquareSpec::new(
            Manifold::Torus,
            expr::parse("cos(2*pi*x)+cos(2*pi*y)").unwrap(),
            expr::parse("cos(2*pi*(x-0.1))+cos(2*pi*y)").unwrap(),
            expr::parse("cos(2*pi*(x-0.3))+cos(2*pi*(y-0.2))").unwrap(),
        );
        let sq = build_square(&spec).unwrap();
        let p = [0.31, 0.72, 0.0, 0.43, 0.58];
        let j = sq.jet(&p);
        let d = 1e-6;
        for i in [SX, SY, SS, ST] {
            let mut a = p;
            let mut b = p;
            a[i] += d;
            b[i] -= d;
            let fd = (sq.value(&a) - sq.value(&b)) / (2.0 * d);
            assert!((fd - j.grad[i]).abs() < 1e-5 * (1.0 + fd.abs()), "grad {i}");
            let ga = sq.jet(&a).grad;
            let gb = sq.jet(&b).grad;
            for k in [SX, SY, SS, ST] {
                let fd = (ga[k] - gb[k]) / (2.0 * d);
                assert!((fd - j.hess[i][k]).abs() < 1e-4 * (1.0 + fd.abs()), "hess {i} {k}");
            }
        }
    }

    #[test]
    fn sphere_frame_is_orthonormal_and_tangent() {
        let m = Manifold::Sphere;
        for p in m.base_grid(6) {
            let fr = m.tangent_frame(&p);
            assert_eq!(fr.len(), 2);
            for a in &fr {
                assert!(dot(a, &p).abs() < 1e-12);
                assert!((norm(a) - 1.0).abs() < 1e-12);
            }
            assert!(dot(&fr[0], &fr[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_periodic_torus_fields() {
        assert!(matches!(
            ScalarField::parse(Manifold::Torus, "x"),
            Err(GeometryError::NotPeriodic { .. })
        ));
        assert!(matches!(
            ScalarField::parse(Manifold::Torus, "z"),
            Err(GeometryError::ForeignVariable { .. })
        ));
    }
}
