//! Interpolation squares, the λ-family of step maps between the two ways
//! around a square, wall classification and the commutativity verdicts.
//!
//! Below `s′ = ε` and `s = ε` the square field is the product
//! `f₁ + C·(h(s) + h(s′))`, so a trajectory leaving `(x,0,0)` at angle `λ`
//! follows a fixed curve in the `(s,s′)` plane while its base point runs
//! along `W^u_{f₁}(x)`. Sweeps seed on that curve where `max(s,s′)` first
//! reaches [`S_SEED`], exactly as the continuation sweeps do on `s = S_SEED`.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::{
    build_step_map, generator_loop, top_layer, ContinuationError, Dynamics, StepImage, StepMap, SweepOptions,
    VertexImage, S_SEED,
};
use crate::flow::{find_critical_points_from, integrate, CriticalPoint, FlowError, FlowOptions, Landscape, Probe};
use crate::geometry::{ChartPoint, GeometryError, ScalarField, SS, ST};
use crate::mscomplex::{ComplexError, MorseComplexData};
use crate::pi1::{is_trivial, presentation, Budget, Pi1Error, Presentation, TrivialityVerdict};
use crate::word::{self, cyclic_eq_up_to_inverse, cyclic_reduce, exponent_sums, free_reduce, inverse, Letter, Word};

pub const SCHEMA: &str = "sweep/v1";
pub const MIN_GRID: usize = 16;
/// Longest conjugator tried by [`verify_iso`] and [`conjugate_equal`].
pub const MAX_CONJUGATOR: usize = 8;
/// Starting radius of the parameter curve.
const RHO: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FunctorialityError {
    #[error("λ = {lambda} is not generic")]
    NonGenericLambda { lambda: f64 },
    #[error("wall at λ = {lambda} matches no known pattern: {diff}")]
    UnclassifiedWall { lambda: f64, diff: String },
    #[error("word problem undecided within budget (generator {generator})")]
    InconclusiveBudget { generator: usize },
    #[error("λ grid needs at least {MIN_GRID} samples, got {0}")]
    GridTooSmall(usize),
    #[error("incompatible step maps: {0}")]
    Incompatible(String),
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Pi1(#[from] Pi1Error),
}

/// Critical points of a square field, searched from the base grid lifted to
/// each corner of `[0,1]²`.
pub fn square_critical_points(square: &ScalarField, seeds_per_axis: usize) -> Result<Vec<CriticalPoint>, FlowError> {
    if seeds_per_axis < 8 {
        return Err(FlowError::TooFewSeeds);
    }
    let base = square.manifold().base().base_grid(seeds_per_axis);
    let mut seeds = Vec::with_capacity(4 * base.len());
    for (s, t) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        for b in &base {
            let mut p = *b;
            p[SS] = s;
            p[ST] = t;
            seeds.push(p);
        }
    }
    find_critical_points_from(square, &seeds)
}

/// The point of the parameter curve leaving `(0,0)` at angle `λ` where
/// `max(s, s′)` first reaches [`S_SEED`].
pub fn lambda_seed(square: &ScalarField, lambda: f64) -> [f64; 2] {
    let anchor = square.manifold().base().base_grid(1)[0];
    // both parameters sit below ε, where the parameter gradient is C·h′
    let rate = |q: [f64; 2]| {
        let mut p = anchor;
        p[SS] = q[0];
        p[ST] = q[1];
        let g = square.grad(&p);
        [-g[SS], -g[ST]]
    };
    let mu = rate([RHO, 0.0])[0] / RHO;
    let h = 0.01 / mu.max(1e-6);
    let mut q = [RHO * lambda.cos(), RHO * lambda.sin()];
    let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
    while q[0].max(q[1]) < S_SEED {
        let k1 = rate(q);
        let k2 = rate(add(q, k1, h / 2.0));
        let k3 = rate(add(q, k2, h / 2.0));
        let k4 = rate(add(q, k3, h));
        for i in 0..2 {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    q
}

/// The square flow seen from the `(1,1)` corner, seeded at one angle.
pub struct SquareFlow {
    pub top: Landscape,
    pub opts: FlowOptions,
    pub seed: [f64; 2],
}

impl SquareFlow {
    /// Passes are read where both parameters are at least `1 − ε`, where the
    /// field is exactly `f₃ + C·(h(s) + h(s′))`.
    pub fn new(
        square: Arc<ScalarField>,
        target: &MorseComplexData,
        lambda: f64,
        opts: &FlowOptions,
    ) -> Result<SquareFlow, FunctorialityError> {
        let eps = square.blend().map_or(0.0, |b| b.eps);
        let seed = lambda_seed(&square, lambda);
        let opts = FlowOptions { pass_level: Some(1.0 - eps), ..opts.clone() };
        Ok(SquareFlow { top: top_layer(square, &target.critical_points)?, opts, seed })
    }
}

impl Dynamics for SquareFlow {
    fn run(&self, p: &ChartPoint) -> Result<Probe, FlowError> {
        Ok(Probe::from(&integrate(&self.top, p, &self.opts)?))
    }

    fn lift(&self, p: &ChartPoint) -> ChartPoint {
        let mut q = *p;
        q[SS] = self.seed[0];
        q[ST] = self.seed[1];
        q
    }

    /// A minimum stays put while its parameters follow the curve, so its
    /// transport is the unique trajectory at angle `λ`.
    fn lift_vertex(&self, p: &ChartPoint) -> ChartPoint {
        self.lift(p)
    }
}

/// `φ_λ` from the step families of `f₁` seeded at angle `λ`.
pub fn phi_lambda(
    square: Arc<ScalarField>,
    lambda: f64,
    source_land: &Landscape,
    source: &MorseComplexData,
    target: &MorseComplexData,
    opts: &SweepOptions,
) -> Result<StepMap, FunctorialityError> {
    let flow = SquareFlow::new(square, target, lambda, &opts.flow)?;
    match build_step_map(&flow, source_land, source, target, opts) {
        Ok((sm, _)) => Ok(sm),
        Err(
            ContinuationError::WallUnresolved { .. }
            | ContinuationError::TransportLingered { .. }
            | ContinuationError::EndpointMismatch { .. },
        ) => Err(FunctorialityError::NonGenericLambda { lambda }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    BirthDeath,
    BreakIndex2Target,
    BreakIndex0Source,
}

/// The data of one `φ_λ`, without the complexes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSample {
    pub lambda: f64,
    pub images: Vec<StepImage>,
    pub transport: Vec<VertexImage>,
    pub base_transport: VertexImage,
}

impl LambdaSample {
    pub fn of(lambda: f64, sm: &StepMap) -> LambdaSample {
        LambdaSample {
            lambda,
            images: sm.images.clone(),
            transport: sm.transport.clone(),
            base_transport: sm.base_transport.clone(),
        }
    }

    fn same(&self, other: &LambdaSample) -> bool {
        self.images == other.images && self.transport == other.transport && self.base_transport == other.base_transport
    }

    fn total_len(&self) -> usize {
        self.images.iter().map(|i| i.word.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaWall {
    pub lambda: f64,
    pub kind: WallKind,
    /// Source steps whose images change.
    pub steps: Vec<usize>,
    /// `σ_λ` from the base after the wall to the base before it; empty
    /// unless the base transport moves.
    pub conjugator: Word,
    pub before: LambdaSample,
    pub after: LambdaSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub schema: String,
    pub source: MorseComplexData,
    pub target: MorseComplexData,
    pub samples: Vec<LambdaSample>,
    pub walls: Vec<LambdaWall>,
}

fn same_maps(a: &StepMap, b: &StepMap) -> bool {
    a.images == b.images && a.transport == b.transport && a.base_transport == b.base_transport
}

/// Whether `longer` is `shorter` with one adjacent cancelling pair inserted.
fn inserts_pair(longer: &[Letter], shorter: &[Letter]) -> bool {
    longer.len() == shorter.len() + 2
        && (0..longer.len() - 1).any(|i| {
            longer[i + 1] == longer[i].inv() && longer[..i] == shorter[..i] && longer[i + 2..] == shorter[i..]
        })
}

/// Strips the longest common prefix and suffix of two words.
fn middles<'a>(u: &'a [Letter], v: &'a [Letter]) -> (&'a [Letter], &'a [Letter]) {
    let p = u.iter().zip(v).take_while(|(a, b)| a == b).count();
    let (u, v) = (&u[p..], &v[p..]);
    let q = u.iter().rev().zip(v.iter().rev()).take_while(|(a, b)| a == b).count();
    (&u[..u.len() - q], &v[..v.len() - q])
}

/// Candidate conjugating letters from `from` to `to`, the empty word first.
fn vertex_paths(target: &MorseComplexData, from: usize, to: usize) -> Vec<Word> {
    let mut out = if from == to { vec![Vec::new()] } else { Vec::new() };
    for s in &target.steps {
        for l in [Letter::pos(s.id), Letter::neg(s.id)] {
            if target.ends(l) == (from, to) {
                out.push(vec![l]);
            }
        }
    }
    out
}

/// Classifies the change between two step maps on either side of one wall.
/// Returns the kind, the changed steps and `σ_λ`.
pub fn classify_wall(before: &StepMap, after: &StepMap) -> Option<(WallKind, Vec<usize>, Word)> {
    let changed: Vec<usize> = before
        .images
        .iter()
        .filter(|i| after.image(i.step) != i.word.as_slice())
        .map(|i| i.step)
        .collect();
    let same_transport = before.transport == after.transport;
    if same_transport && changed.len() == 1 {
        let (u, v) = (before.image(changed[0]), after.image(changed[0]));
        if inserts_pair(u, v) || inserts_pair(v, u) {
            return Some((WallKind::BirthDeath, changed, Vec::new()));
        }
    }
    if same_transport && !changed.is_empty() {
        let disks: Vec<Word> = after.target.disk_boundaries.iter().map(|d| cyclic_reduce(&d.word)).collect();
        let splice = changed.iter().all(|&s| {
            let (a, b) = middles(before.image(s), after.image(s));
            let mut r = inverse(a);
            r.extend_from_slice(b);
            let r = cyclic_reduce(&r);
            !r.is_empty() && disks.iter().any(|d| cyclic_eq_up_to_inverse(&r, d))
        });
        if splice {
            return Some((WallKind::BreakIndex2Target, changed, Vec::new()));
        }
    }
    // common outer conjugation: after(s) = d(start)·before(s)·d(end)⁻¹
    let mins: Vec<usize> = before.transport.iter().map(|t| t.from).collect();
    let options: Vec<Vec<Word>> = mins
        .iter()
        .map(|&y| match (after.transport_of(y), before.transport_of(y)) {
            (Some(a), Some(b)) => vertex_paths(&after.target, a, b),
            _ => Vec::new(),
        })
        .collect();
    let total: usize = options.iter().map(Vec::len).product();
    if total == 0 || total > 1 << 16 {
        return None;
    }
    let slot = |y: usize| mins.iter().position(|&m| m == y);
    if before.source.steps.iter().any(|s| slot(s.start).is_none() || slot(s.end).is_none()) {
        return None;
    }
    let mut choice = vec![0usize; mins.len()];
    loop {
        let d = |y: usize| {
            let k = slot(y).unwrap();
            &options[k][choice[k]]
        };
        let nontrivial = choice.iter().zip(&options).any(|(c, o)| !o[*c].is_empty());
        let fits = nontrivial
            && before.source.steps.iter().all(|s| {
                let mut w = d(s.start).clone();
                w.extend_from_slice(before.image(s.id));
                w.extend(inverse(d(s.end)));
                free_reduce(&w) == free_reduce(after.image(s.id))
            });
        if fits {
            let sigma = d(before.source.base).clone();
            return Some((WallKind::BreakIndex0Source, changed, sigma));
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return None;
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

fn describe(before: &StepMap, after: &StepMap) -> String {
    let mut parts = Vec::new();
    for i in &before.images {
        let v = after.image(i.step);
        if v != i.word.as_slice() {
            parts.push(format!("s{}: {} -> {}", i.step, word::show(&i.word), word::show(v)));
        }
    }
    if before.base_transport != after.base_transport {
        parts.push(format!("base {} -> {}", before.base_transport.to, after.base_transport.to));
    }
    parts.join("; ")
}

fn wall_between(lambda: f64, before: &StepMap, after: &StepMap, lb: f64, la: f64) -> Result<LambdaWall, FunctorialityError> {
    let (kind, steps, conjugator) = classify_wall(before, after)
        .ok_or_else(|| FunctorialityError::UnclassifiedWall { lambda, diff: describe(before, after) })?;
    Ok(LambdaWall {
        lambda,
        kind,
        steps,
        conjugator,
        before: LambdaSample::of(lb, before),
        after: LambdaSample::of(la, after),
    })
}

/// Sample angles `(π/2)(j + ½)/n`.
pub fn lambda_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| FRAC_PI_2 * (j as f64 + 0.5) / n as f64).collect()
}

/// Evaluates near `lambda` inside `(lo, hi)`, stepping aside from
/// non-generic angles.
fn eval_near<F>(eval: &F, lambda: f64, lo: f64, hi: f64) -> Result<(f64, StepMap), FunctorialityError>
where
    F: Fn(f64) -> Result<StepMap, FunctorialityError>,
{
    let d = (hi - lo) / 16.0;
    let mut last = FunctorialityError::NonGenericLambda { lambda };
    for k in 0..7 {
        let m = ((k + 1) / 2) as f64;
        let l = lambda + if k % 2 == 1 { m * d } else { -m * d };
        if l <= lo || l >= hi {
            continue;
        }
        match eval(l) {
            Ok(sm) => return Ok((l, sm)),
            Err(e @ FunctorialityError::NonGenericLambda { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

fn bisect<F>(
    eval: &F,
    a: (f64, &StepMap),
    b: (f64, &StepMap),
    tol: f64,
    out: &mut Vec<LambdaWall>,
) -> Result<(), FunctorialityError>
where
    F: Fn(f64) -> Result<StepMap, FunctorialityError>,
{
    if same_maps(a.1, b.1) {
        return Ok(());
    }
    let mid = 0.5 * (a.0 + b.0);
    if b.0 - a.0 > tol {
        match eval_near(eval, mid, a.0, b.0) {
            Ok((l, m)) => {
                bisect(eval, a, (l, &m), tol, out)?;
                return bisect(eval, (l, &m), b, tol, out);
            }
            Err(FunctorialityError::NonGenericLambda { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    out.push(wall_between(mid, a.1, b.1, a.0, b.0)?);
    Ok(())
}

/// Samples `eval` on the `n`-point grid, bisects every change down to `tol`
/// and classifies the walls. `eval` may be numeric or combinatorial.
pub fn sweep_with<F>(
    eval: &F,
    source: &MorseComplexData,
    target: &MorseComplexData,
    n: usize,
    tol: f64,
) -> Result<LambdaSweep, FunctorialityError>
where
    F: Fn(f64) -> Result<StepMap, FunctorialityError> + Sync,
{
    use rayon::prelude::*;
    if n < MIN_GRID {
        return Err(FunctorialityError::GridTooSmall(n));
    }
    let half = FRAC_PI_2 / n as f64 / 2.0;
    let maps: Vec<(f64, StepMap)> = lambda_grid(n)
        .par_iter()
        .map(|&l| eval_near(eval, l, l - half, l + half))
        .collect::<Result<_, _>>()?;
    let walls: Vec<Vec<LambdaWall>> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            bisect(eval, (maps[i].0, &maps[i].1), (maps[i + 1].0, &maps[i + 1].1), tol, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_, FunctorialityError>>()?;
    Ok(LambdaSweep {
        schema: SCHEMA.into(),
        source: source.clone(),
        target: target.clone(),
        samples: maps.iter().map(|(l, m)| LambdaSample::of(*l, m)).collect(),
        walls: walls.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaOptions {
    pub grid: usize,
    pub tol: f64,
    pub sweep: SweepOptions,
}

impl Default for LambdaOptions {
    fn default() -> Self {
        LambdaOptions { grid: MIN_GRID, tol: 1e-7, sweep: SweepOptions::default() }
    }
}

/// The numeric λ-sweep of a square field.
pub fn sweep_lambda(
    square: Arc<ScalarField>,
    source_land: &Landscape,
    source: &MorseComplexData,
    target: &MorseComplexData,
    opts: &LambdaOptions,
) -> Result<LambdaSweep, FunctorialityError> {
    let eval = |l: f64| phi_lambda(square.clone(), l, source_land, source, target, &opts.sweep);
    sweep_with(&eval, source, target, opts.grid, opts.tol)
}

impl LambdaSweep {
    /// Assembles a sweep from step maps already sampled at increasing
    /// angles, classifying each change as one wall at the midpoint.
    pub fn from_maps(lambdas: &[f64], maps: &[StepMap]) -> Result<LambdaSweep, FunctorialityError> {
        if lambdas.len() != maps.len() || maps.is_empty() {
            return Err(FunctorialityError::Invalid("one step map per angle is needed".into()));
        }
        if lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FunctorialityError::Invalid("angles must increase".into()));
        }
        let (source, target) = (&maps[0].source, &maps[0].target);
        if maps.iter().any(|m| m.source.steps != source.steps || m.target.steps != target.steps) {
            return Err(FunctorialityError::Incompatible("maps between different complexes".into()));
        }
        let mut walls = Vec::new();
        for i in 0..maps.len() - 1 {
            if !same_maps(&maps[i], &maps[i + 1]) {
                let mid = 0.5 * (lambdas[i] + lambdas[i + 1]);
                walls.push(wall_between(mid, &maps[i], &maps[i + 1], lambdas[i], lambdas[i + 1])?);
            }
        }
        Ok(LambdaSweep {
            schema: SCHEMA.into(),
            source: source.clone(),
            target: target.clone(),
            samples: lambdas.iter().zip(maps).map(|(l, m)| LambdaSample::of(*l, m)).collect(),
            walls,
        })
    }

    pub fn map_of(&self, s: &LambdaSample) -> StepMap {
        StepMap {
            schema: crate::continuation::SCHEMA.into(),
            images: s.images.clone(),
            transport: s.transport.clone(),
            base_transport: s.base_transport.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }

    pub fn first(&self) -> StepMap {
        self.map_of(&self.samples[0])
    }

    pub fn last(&self) -> StepMap {
        self.map_of(&self.samples[self.samples.len() - 1])
    }

    /// `ψ = σ_k ⋯ σ₁`, from the base of the last sample to that of the first.
    pub fn psi(&self) -> Word {
        let mut w = Vec::new();
        for wall in self.walls.iter().rev() {
            w.extend_from_slice(&wall.conjugator);
        }
        free_reduce(&w)
    }

    /// Piecewise constancy, the `±2` rule for birth–death walls and the
    /// endpoints of `ψ`.
    pub fn check_invariants(&self) -> Result<(), FunctorialityError> {
        let bad = |m: String| Err(FunctorialityError::Invalid(m));
        if self.samples.is_empty() {
            return bad("no samples".into());
        }
        for pair in self.samples.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.lambda >= b.lambda {
                return bad("samples out of order".into());
            }
            let inside: Vec<&LambdaWall> = self.walls.iter().filter(|w| w.lambda > a.lambda && w.lambda < b.lambda).collect();
            let mut cur = a;
            for w in &inside {
                if !w.before.same(cur) || w.before.same(&w.after) {
                    return bad(format!("wall at λ = {} does not continue the previous map", w.lambda));
                }
                cur = &w.after;
            }
            if !cur.same(b) {
                return bad(format!("map changes between λ = {} and {} without a wall", a.lambda, b.lambda));
            }
        }
        for w in &self.walls {
            let d = w.after.total_len() as i64 - w.before.total_len() as i64;
            if w.kind == WallKind::BirthDeath && d.abs() != 2 {
                return bad(format!("birth-death wall at λ = {} changes length by {d}", w.lambda));
            }
        }
        let psi = self.psi();
        let (from, to) = (self.samples[self.samples.len() - 1].base_transport.to, self.samples[0].base_transport.to);
        let ends = match (psi.first(), psi.last()) {
            (Some(f), Some(l)) => {
                self.target.check_consecutive(&psi, false)?;
                (self.target.ends(*f).0, self.target.ends(*l).1)
            }
            _ => (from, from),
        };
        if ends != (from, to) {
            return bad(format!("ψ runs {} → {}, expected {from} → {to}", ends.0, ends.1));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn from_json(src: &str) -> Result<LambdaSweep, FunctorialityError> {
        let s: LambdaSweep = serde_json::from_str(src).map_err(|e| FunctorialityError::Invalid(e.to_string()))?;
        if s.schema != SCHEMA {
            return Err(FunctorialityError::Invalid(format!("schema {:?}", s.schema)));
        }
        s.source.validate()?;
        s.target.validate()?;
        for sample in &s.samples {
            s.map_of(sample).validate()?;
        }
        s.check_invariants()?;
        Ok(s)
    }

    /// Image-word length against `λ`, with walls as vertical markers.
    pub fn strip_chart_svg(&self) -> String {
        let (w, h, pad) = (640.0, 240.0, 32.0);
        let max_len = self.samples.iter().map(LambdaSample::total_len).max().unwrap_or(1).max(1) as f64;
        let x = |l: f64| pad + (w - 2.0 * pad) * l / FRAC_PI_2;
        let y = |n: usize| h - pad - (h - 2.0 * pad) * n as f64 / max_len;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        out += &format!(
            "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
            h - pad,
            w - pad
        );
        for wall in &self.walls {
            let colour = match wall.kind {
                WallKind::BirthDeath => "#2a7",
                WallKind::BreakIndex2Target => "#27c",
                WallKind::BreakIndex0Source => "#c33",
            };
            out += &format!(
                "<line x1=\"{0:.2}\" y1=\"{pad}\" x2=\"{0:.2}\" y2=\"{1}\" stroke=\"{colour}\" stroke-dasharray=\"4 3\"><title>{2:?} at {3:.6}</title></line>\n",
                x(wall.lambda),
                h - pad,
                wall.kind,
                wall.lambda
            );
        }
        let pts: Vec<String> = self.samples.iter().map(|s| format!("{:.2},{:.2}", x(s.lambda), y(s.total_len()))).collect();
        out += &format!("<polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>\n", pts.join(" "));
        out += &format!("<text x=\"{pad}\" y=\"{}\" font-size=\"12\">λ ∈ (0, π/2), total image length ≤ {max_len}</text>\n", pad - 10.0);
        out += "</svg>\n";
        out
    }
}

/// `φ₂₃ ∘ φ₁₂` as a step map.
pub fn compose(first: &StepMap, second: &StepMap) -> Result<StepMap, FunctorialityError> {
    if first.target.steps != second.source.steps {
        return Err(FunctorialityError::Incompatible("the first map does not land where the second starts".into()));
    }
    let t = |v: usize| second.transport_of(v).ok_or_else(|| FunctorialityError::Incompatible(format!("vertex {v} has no transport")));
    Ok(StepMap {
        schema: crate::continuation::SCHEMA.into(),
        images: first.images.iter().map(|i| StepImage { step: i.step, word: second.apply(&i.word) }).collect(),
        transport: first
            .transport
            .iter()
            .map(|v| Ok(VertexImage { from: v.from, to: t(v.to)? }))
            .collect::<Result<_, FunctorialityError>>()?,
        base_transport: VertexImage { from: first.base_transport.from, to: t(first.base_transport.to)? },
        source: first.source.clone(),
        target: second.target.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DiagramVerdict {
    Commutes { psi: Word },
    Fails { generator: usize, lhs: Word, rhs: Word },
}

/// `ψ ∘ φ₁₃ = φ₂₃ ∘ φ₁₂` on every source generator, with `ψ` composed from
/// the walls of the sweep.
pub fn verify_diagram(
    sweep: &LambdaSweep,
    phi12: &StepMap,
    phi23: &StepMap,
    phi13: &StepMap,
    budget: Budget,
) -> Result<DiagramVerdict, FunctorialityError> {
    verify_diagram_with(&sweep.psi(), phi12, phi23, phi13, budget)
}

pub fn verify_diagram_with(
    psi: &[Letter],
    phi12: &StepMap,
    phi23: &StepMap,
    phi13: &StepMap,
    budget: Budget,
) -> Result<DiagramVerdict, FunctorialityError> {
    let around = compose(phi12, phi23)?;
    if phi13.source.steps != around.source.steps || phi13.target.steps != around.target.steps {
        return Err(FunctorialityError::Incompatible("φ₁₃ does not share the corners of φ₂₃ ∘ φ₁₂".into()));
    }
    let ps = presentation(&phi12.source)?;
    let pt = presentation(&phi13.target)?;
    for &g in &ps.generators {
        let l = generator_loop(&ps, &phi12.source, g);
        let mut lhs = psi.to_vec();
        lhs.extend(phi13.apply(&l));
        lhs.extend(inverse(psi));
        let rhs = around.apply(&l);
        let mut q = lhs.clone();
        q.extend(inverse(&rhs));
        phi13
            .target
            .check_consecutive(&q, true)
            .map_err(|_| FunctorialityError::Incompatible(format!("ψ does not connect the base points (generator {g})")))?;
        let r = pt.rewrite(&q);
        if r.is_empty() {
            continue;
        }
        match is_trivial(&r, &pt, budget) {
            TrivialityVerdict::Trivial { .. } => {}
            TrivialityVerdict::Nontrivial { .. } => {
                return Ok(DiagramVerdict::Fails { generator: g, lhs: free_reduce(&lhs), rhs: free_reduce(&rhs) })
            }
            TrivialityVerdict::Unknown { .. } => return Err(FunctorialityError::InconclusiveBudget { generator: g }),
        }
    }
    Ok(DiagramVerdict::Commutes { psi: psi.to_vec() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum IsoVerdict {
    /// The composite is conjugation by `conjugator`, a word in generators.
    Inner { conjugator: Word, abelianized: Vec<Vec<i64>> },
    NotInner { abelianized: Vec<Vec<i64>> },
}

/// Calls `f` on every freely reduced word over `gens` and their inverses of
/// length at most `max_len`, in shortlex order, until `f` returns `false`.
fn each_word(gens: &[usize], max_len: usize, f: &mut dyn FnMut(&[Letter]) -> bool) {
    fn go(letters: &[Letter], w: &mut Word, len: usize, f: &mut dyn FnMut(&[Letter]) -> bool) -> bool {
        if w.len() == len {
            return f(w);
        }
        for &l in letters {
            if w.last() == Some(&l.inv()) {
                continue;
            }
            w.push(l);
            let more = go(letters, w, len, f);
            w.pop();
            if !more {
                return false;
            }
        }
        true
    }
    let letters: Vec<Letter> = gens.iter().flat_map(|&g| [Letter::pos(g), Letter::neg(g)]).collect();
    let mut w = Vec::with_capacity(max_len);
    for len in 0..=max_len {
        if !go(&letters, &mut w, len, f) {
            return;
        }
    }
}

/// Finds `c` of length at most `max_len` with `c·a·c⁻¹ = b` for every pair,
/// all words in the generators of `p`. Free equality is tried for every
/// candidate before any word problem is attempted.
pub fn search_conjugator(
    p: &Presentation,
    pairs: &[(Word, Word)],
    max_len: usize,
    budget: Budget,
) -> Result<Option<Word>, FunctorialityError> {
    let quotient = |c: &[Letter], a: &[Letter], b: &[Letter]| {
        let mut q = c.to_vec();
        q.extend_from_slice(a);
        q.extend(inverse(c));
        q.extend(inverse(b));
        free_reduce(&q)
    };
    let mut found: Option<Word> = None;
    each_word(&p.generators, max_len, &mut |c| {
        if pairs.iter().all(|(a, b)| quotient(c, a, b).is_empty()) {
            found = Some(c.to_vec());
        }
        found.is_none()
    });
    if found.is_some() || p.relators.is_empty() {
        return Ok(found);
    }
    let mut spent = 0usize;
    let mut undecided: Option<usize> = None;
    each_word(&p.generators, max_len, &mut |c| {
        for (k, (a, b)) in pairs.iter().enumerate() {
            let q = quotient(c, a, b);
            if q.is_empty() {
                continue;
            }
            match is_trivial(&q, p, budget) {
                TrivialityVerdict::Trivial { .. } => {}
                TrivialityVerdict::Nontrivial { .. } => return true,
                TrivialityVerdict::Unknown { explored } => {
                    spent += explored;
                    undecided.get_or_insert(k);
                    return spent <= 16 * budget.max_states;
                }
            }
        }
        found = Some(c.to_vec());
        false
    });
    match (found, undecided) {
        (Some(c), _) => Ok(Some(c)),
        (None, Some(k)) => Err(FunctorialityError::InconclusiveBudget { generator: p.generators[k] }),
        (None, None) => Ok(None),
    }
}

fn rows_of(p: &Presentation, words: &[Word]) -> Vec<Vec<i64>> {
    let n = p.generators.iter().max().map_or(0, |m| m + 1);
    words
        .iter()
        .map(|w| {
            let sums = exponent_sums(w, n);
            p.generators.iter().map(|&g| sums[g]).collect()
        })
        .collect()
}

/// Whether `φ₂₁ ∘ φ₁₂` is an inner automorphism of `π₁(f₁)`.
pub fn verify_iso(phi12: &StepMap, phi21: &StepMap, budget: Budget) -> Result<IsoVerdict, FunctorialityError> {
    let comp = compose(phi12, phi21)?;
    if comp.target.steps != comp.source.steps {
        return Err(FunctorialityError::Incompatible("the composite does not return to the source complex".into()));
    }
    let ps = presentation(&comp.source)?;
    let images: Vec<Word> =
        ps.generators.iter().map(|&g| ps.rewrite(&comp.apply(&generator_loop(&ps, &comp.source, g)))).collect();
    let abelianized = rows_of(&ps, &images);
    let ab = ps.abelianization();
    let unit = abelianized.iter().enumerate().all(|(i, row)| {
        let mut d = row.clone();
        d[i] -= 1;
        ab.image(&d).iter().all(|x| *x == 0)
    });
    if !unit {
        return Ok(IsoVerdict::NotInner { abelianized });
    }
    let pairs: Vec<(Word, Word)> =
        images.into_iter().zip(&ps.generators).map(|(a, &g)| (a, vec![Letter::pos(g)])).collect();
    Ok(match search_conjugator(&ps, &pairs, MAX_CONJUGATOR, budget)? {
        Some(conjugator) => IsoVerdict::Inner { conjugator, abelianized },
        None => IsoVerdict::NotInner { abelianized },
    })
}

/// Whether two maps between the same complexes agree up to an inner
/// automorphism of the target; returns the conjugator in target generators.
pub fn conjugate_equal(a: &StepMap, b: &StepMap, budget: Budget) -> Result<Option<Word>, FunctorialityError> {
    if a.source.steps != b.source.steps || a.target.steps != b.target.steps {
        return Err(FunctorialityError::Incompatible("maps between different complexes".into()));
    }
    let ps = presentation(&a.source)?;
    let pt = presentation(&a.target)?;
    let pairs: Vec<(Word, Word)> = ps
        .generators
        .iter()
        .map(|&g| {
            let l = generator_loop(&ps, &a.source, g);
            (pt.rewrite(&a.apply(&l)), pt.rewrite(&b.apply(&l)))
        })
        .collect();
    search_conjugator(&pt, &pairs, MAX_CONJUGATOR, budget)
}

/// Whether two maps with the same base transport induce the same morphism.
pub fn agree_on_loops(a: &StepMap, b: &StepMap, budget: Budget) -> Result<bool, FunctorialityError> {
    if a.base_transport != b.base_transport {
        return Ok(false);
    }
    let ps = presentation(&a.source)?;
    let pt = presentation(&a.target)?;
    for &g in &ps.generators {
        let l = generator_loop(&ps, &a.source, g);
        let mut q = a.apply(&l);
        q.extend(inverse(&b.apply(&l)));
        let r = pt.rewrite(&q);
        if r.is_empty() {
            continue;
        }
        match is_trivial(&r, &pt, budget) {
            TrivialityVerdict::Trivial { .. } => {}
            TrivialityVerdict::Nontrivial { .. } => return Ok(false),
            TrivialityVerdict::Unknown { .. } => return Err(FunctorialityError::InconclusiveBudget { generator: g }),
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::continuation_map;
    use crate::expr::parse;
    use crate::geometry::{build_interpolation, build_square, InterpolationSpec, Manifold, SquareSpec};
    use crate::mscomplex::{DiskBoundary, ExtractOptions, Provenance, Step};
    use crate::word::w;

    const COS: &str = "cos(2*pi*x)+cos(2*pi*y)";
    const SHIFTED: &str = "cos(2*pi*(x-0.3))+cos(2*pi*(y-0.2))";

    fn square(m: Manifold, f1: &str, f2: &str, f3: &str) -> (SquareSpec, Arc<ScalarField>) {
        let spec = SquareSpec::new(m, parse(f1).unwrap(), parse(f2).unwrap(), parse(f3).unwrap());
        let sq = Arc::new(build_square(&spec).unwrap());
        (spec, sq)
    }

    fn complex(m: Manifold, f: &str) -> (Landscape, MorseComplexData) {
        let l = Landscape::analyze(ScalarField::parse(m, f).unwrap(), 8).unwrap();
        let d = MorseComplexData::extract(&l, &ExtractOptions::default(), Provenance::Handwritten).unwrap();
        (l, d)
    }

    fn corner_counts(cps: &[CriticalPoint]) -> Vec<(usize, usize, usize)> {
        let mut v: Vec<(usize, usize, usize)> = cps
            .iter()
            .map(|c| {
                let n = c.coords.len();
                (c.coords[n - 2].round() as usize, c.coords[n - 1].round() as usize, c.index)
            })
            .collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn square_critical_points_shift_by_corner() {
        let (_, sq) = square(Manifold::Torus, COS, COS, COS);
        let cps = square_critical_points(&sq, 8).unwrap();
        assert_eq!(cps.len(), 16);
        let mut expected = Vec::new();
        for (s, t) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            // one index per parameter still at its maximum
            let shift = (s == 0) as usize + (t == 0) as usize;
            for i in [0, 1, 1, 2] {
                expected.push((s, t, i + shift));
            }
        }
        expected.sort_unstable();
        assert_eq!(corner_counts(&cps), expected);

        let (_, sq) = square(Manifold::Sphere, "z", "z", "z");
        let cps = square_critical_points(&sq, 8).unwrap();
        assert_eq!(cps.len(), 8);
        assert_eq!(cps.iter().filter(|c| c.index == 0).count(), 1);
        assert_eq!(cps.iter().filter(|c| c.index == 4).count(), 1);
    }

    #[test]
    fn undersized_square_constant_is_rejected() {
        let mut spec = SquareSpec::new(Manifold::Torus, parse(COS).unwrap(), parse(COS).unwrap(), parse(SHIFTED).unwrap());
        spec.eps = 0.4;
        spec.c = Some(0.05);
        assert!(matches!(build_square(&spec), Err(GeometryError::InteriorCriticalPoint { .. })));
    }

    #[test]
    fn lambda_seed_follows_the_angle() {
        let (_, sq) = square(Manifold::Torus, COS, COS, COS);
        // standard profile: s/(1−s) grows like e^{3Cτ} in each parameter
        for lambda in [0.05, 0.4, FRAC_PI_2 - 0.05] {
            let [s, t] = lambda_seed(&sq, lambda);
            assert!((s.max(t) - S_SEED).abs() < 1e-3);
            let odds = (t / (1.0 - t)) / (s / (1.0 - s));
            assert!((odds.atan() - lambda).abs() < 1e-6, "{lambda}: {}", odds.atan());
        }
    }

    #[test]
    fn constant_square_has_no_walls() {
        let (_, sq) = square(Manifold::Torus, COS, COS, COS);
        let (l, d) = complex(Manifold::Torus, COS);
        let sweep = sweep_lambda(sq, &l, &d, &d, &LambdaOptions::default()).unwrap();
        assert!(sweep.walls.is_empty());
        assert_eq!(sweep.samples.len(), MIN_GRID);
        for s in &sweep.samples {
            assert_eq!(s.images, vec![StepImage { step: 0, word: w("0+") }, StepImage { step: 1, word: w("1+") }]);
        }
        assert!(sweep.psi().is_empty());
        let round = LambdaSweep::from_json(&sweep.to_json()).unwrap();
        assert_eq!(round, sweep);
    }

    fn interp(f1: &str, f2: &str) -> Arc<ScalarField> {
        let spec = InterpolationSpec::new(Manifold::Torus, parse(f1).unwrap(), parse(f2).unwrap());
        Arc::new(build_interpolation(&spec).unwrap())
    }

    #[test]
    fn translated_corner_commutes() {
        let (_, sq) = square(Manifold::Torus, COS, COS, SHIFTED);
        let (l, d1) = complex(Manifold::Torus, COS);
        let (_, d3) = complex(Manifold::Torus, SHIFTED);
        let opts = LambdaOptions::default();
        let sweep = sweep_lambda(sq, &l, &d1, &d3, &opts).unwrap();
        sweep.check_invariants().unwrap();
        let phi12 = continuation_map(&l, &d1, &d1, interp(COS, COS), &opts.sweep).unwrap().0;
        let phi23 = continuation_map(&l, &d1, &d3, interp(COS, SHIFTED), &opts.sweep).unwrap().0;
        let phi13 = phi23.clone();
        let verdict = verify_diagram(&sweep, &phi12, &phi23, &phi13, Budget::default()).unwrap();
        assert!(matches!(verdict, DiagramVerdict::Commutes { .. }), "{verdict:?}");
        // the ends of the sweep are the two ways around the square
        assert!(agree_on_loops(&sweep.first(), &phi13, Budget::default()).unwrap());
        assert!(agree_on_loops(&sweep.last(), &compose(&phi12, &phi23).unwrap(), Budget::default()).unwrap());
        let svg = sweep.strip_chart_svg();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }

    /// A handwritten complex with two minima `0, 1`, steps `0: 0→1`,
    /// `1: 0→1`, `2: 1→0`, `3: 0→0` and one disk `0+ 1-`.
    fn fixture() -> MorseComplexData {
        let cp = |id, index| CriticalPoint { id, coords: vec![id as f64], index, value: id as f64 };
        let st = |id, through, start, end| Step { id, through, start, end, start_lift: None, end_lift: None };
        MorseComplexData::handwritten(
            vec![cp(0, 0), cp(1, 0), cp(2, 1), cp(3, 1), cp(4, 1), cp(5, 1), cp(6, 2)],
            vec![st(0, 2, 0, 1), st(1, 3, 0, 1), st(2, 4, 1, 0), st(3, 5, 0, 0)],
            vec![DiskBoundary { of: 6, word: w("0+ 1-") }],
            0,
        )
        .unwrap()
    }

    fn map(d: &MorseComplexData, images: [&str; 4], t0: usize, t1: usize) -> StepMap {
        StepMap {
            schema: crate::continuation::SCHEMA.into(),
            images: images.iter().enumerate().map(|(i, s)| StepImage { step: i, word: w(s) }).collect(),
            transport: vec![VertexImage { from: 0, to: t0 }, VertexImage { from: 1, to: t1 }],
            base_transport: VertexImage { from: 0, to: t0 },
            source: d.clone(),
            target: d.clone(),
        }
    }

    #[test]
    fn classifies_the_three_wall_kinds() {
        let d = fixture();
        let id = map(&d, ["0+", "1+", "2+", "3+"], 0, 1);
        id.validate().unwrap();
        let bd = map(&d, ["0+", "1+", "2+ 3+ 3-", "3+"], 0, 1);
        let splice = map(&d, ["1+", "1+", "2+", "3+"], 0, 1);
        // base moves from 0 to 1 across step 2 (1→0): σ = 2+ runs from ∗₊ = 1 to ∗₋ = 0
        let conj = map(&d, ["2+ 0+ 2+", "2+ 1+ 2+", "2-", "2+ 3+ 2-"], 1, 0);
        conj.validate().unwrap();
        assert_eq!(classify_wall(&id, &bd).unwrap().0, WallKind::BirthDeath);
        assert_eq!(classify_wall(&bd, &id).unwrap().0, WallKind::BirthDeath);
        assert_eq!(classify_wall(&id, &splice).unwrap().0, WallKind::BreakIndex2Target);
        let (kind, _, sigma) = classify_wall(&id, &conj).unwrap();
        assert_eq!((kind, sigma), (WallKind::BreakIndex0Source, w("2+")));
        // two events at once are reported, not guessed
        let both = map(&d, ["1+", "1+", "2+ 3+ 3-", "3+"], 0, 1);
        assert!(classify_wall(&id, &both).is_none());
        let sweep = LambdaSweep::from_maps(&[0.1, 0.5, 0.9], &[id.clone(), splice.clone(), both.clone()]).unwrap();
        assert_eq!(sweep.walls.iter().map(|w| w.kind).collect::<Vec<_>>(), vec![WallKind::BreakIndex2Target, WallKind::BirthDeath]);
        assert!(matches!(
            LambdaSweep::from_maps(&[0.1, 0.9], &[id, both]),
            Err(FunctorialityError::UnclassifiedWall { .. })
        ));
    }

    #[test]
    fn bisection_separates_coincident_looking_walls() {
        let d = fixture();
        let id = map(&d, ["0+", "1+", "2+", "3+"], 0, 1);
        let splice = map(&d, ["1+", "1+", "2+", "3+"], 0, 1);
        let both = map(&d, ["1+", "1+", "2+ 3+ 3-", "3+"], 0, 1);
        let conj = map(&d, ["2+ 1+ 2+", "2+ 1+ 2+", "3+ 3- 2-", "2+ 3+ 2-"], 1, 0);
        let eval = |l: f64| {
            Ok(if l < 0.3 {
                id.clone()
            } else if l < 0.3001 {
                splice.clone()
            } else if l < 1.2 {
                both.clone()
            } else {
                conj.clone()
            })
        };
        let sweep = sweep_with(&eval, &d, &d, MIN_GRID, 1e-7).unwrap();
        let kinds: Vec<WallKind> = sweep.walls.iter().map(|w| w.kind).collect();
        assert_eq!(kinds, vec![WallKind::BreakIndex2Target, WallKind::BirthDeath, WallKind::BreakIndex0Source]);
        assert!((sweep.walls[0].lambda - 0.3).abs() < 1e-6);
        assert!((sweep.walls[1].lambda - 0.3001).abs() < 1e-6);
        sweep.check_invariants().unwrap();
        assert_eq!(sweep.psi(), w("2+"));
        let round = LambdaSweep::from_json(&sweep.to_json()).unwrap();
        assert_eq!(round.walls.len(), 3);
        assert!(matches!(sweep_with(&eval, &d, &d, 8, 1e-7), Err(FunctorialityError::GridTooSmall(8))));
    }

    #[test]
    fn diagram_verdicts_on_fixtures() {
        let d = fixture();
        let id = map(&d, ["0+", "1+", "2+", "3+"], 0, 1);
        let b = Budget::default();
        assert_eq!(verify_diagram_with(&[], &id, &id, &id, b).unwrap(), DiagramVerdict::Commutes { psi: vec![] });
        // φ₁₃ = σ·id·σ⁻¹ with σ = 2+ lands at base 1; ψ = σ⁻¹ brings it back to 0
        let conj = map(&d, ["2+ 0+ 2+", "2+ 1+ 2+", "2-", "2+ 3+ 2-"], 1, 0);
        conj.validate().unwrap();
        let v = verify_diagram_with(&w("2-"), &id, &id, &conj, b).unwrap();
        assert!(matches!(v, DiagramVerdict::Commutes { .. }), "{v:?}");
        // relator splice: equal only modulo the disk
        let splice = map(&d, ["1+", "1+", "2+", "3+"], 0, 1);
        assert!(matches!(verify_diagram_with(&[], &id, &id, &splice, b).unwrap(), DiagramVerdict::Commutes { .. }));
        // negative control: step 3 loops twice under the corrupted φ₁₂
        let corrupt = map(&d, ["0+", "1+", "2+", "3+ 3+"], 0, 1);
        match verify_diagram_with(&[], &corrupt, &id, &id, b).unwrap() {
            DiagramVerdict::Fails { generator, .. } => assert_eq!(generator, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(verify_diagram_with(&[], &id, &id, &conj, b), Err(FunctorialityError::Incompatible(_))));
    }

    #[test]
    fn iso_verdicts_on_fixtures() {
        let d = fixture();
        let b = Budget::default();
        let id = map(&d, ["0+", "1+", "2+", "3+"], 0, 1);
        let i3 = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert_eq!(verify_iso(&id, &id, b).unwrap(), IsoVerdict::Inner { conjugator: vec![], abelianized: i3.clone() });
        // conjugation by s2 moves the base to 1; the way back is the identity
        let inner = map(&d, ["2+ 0+ 2+", "2+ 1+ 2+", "2-", "2+ 3+ 2-"], 1, 0);
        match verify_iso(&inner, &id, b).unwrap() {
            IsoVerdict::Inner { conjugator, abelianized } => {
                assert_eq!(conjugator, w("2-"));
                assert_eq!(abelianized, i3);
            }
            other => panic!("{other:?}"),
        }
        // negative control: s3 ↦ s3² is not unimodular
        let square = map(&d, ["0+", "1+", "2+", "3+ 3+"], 0, 1);
        assert!(matches!(verify_iso(&square, &id, b).unwrap(), IsoVerdict::NotInner { .. }));
    }

    #[test]
    fn torus_translations_compose_to_the_identity_on_homology() {
        let (l1, d1) = complex(Manifold::Torus, COS);
        let (l2, d2) = complex(Manifold::Torus, SHIFTED);
        let opts = SweepOptions::default();
        let there = continuation_map(&l1, &d1, &d2, interp(COS, SHIFTED), &opts).unwrap().0;
        let back = continuation_map(&l2, &d2, &d1, interp(SHIFTED, COS), &opts).unwrap().0;
        match verify_iso(&there, &back, Budget::default()).unwrap() {
            IsoVerdict::Inner { conjugator, abelianized } => {
                assert!(conjugator.len() <= MAX_CONJUGATOR);
                assert_eq!(abelianized, vec![vec![1, 0], vec![0, 1]]);
            }
            other => panic!("{other:?}"),
        }
        // isotopic maps: the identity and a small translation
        let small = "cos(2*pi*(x-0.05))+cos(2*pi*(y-0.05))";
        let (_, ds) = complex(Manifold::Torus, small);
        let a = continuation_map(&l1, &d1, &ds, interp(COS, small), &opts).unwrap().0;
        let b = continuation_map(&l1, &d1, &ds, interp(COS, small), &opts).unwrap().0;
        assert!(conjugate_equal(&a, &b, Budget::default()).unwrap().is_some());
    }
}
