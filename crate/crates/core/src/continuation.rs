//! Continuation and grafted step-maps between Morse complexes, computed by
//! sweeping the positive half of the unstable disk of each `(x,0)`.
//!
//! For `s < ε` the interpolation field is exactly `f₁ + C·h`, so that half
//! disk meets the level `s = s_seed` in `W^u_{f₁}(x) × {s_seed}`. The sweep
//! parameterizes this curve by `φ ∈ [−1, 1]`: `φ = ∓1` are the start and end
//! minima, `φ = 0` is `x` itself, `|φ| ≤ ½` covers the exponentially thin
//! neighbourhood of `x` and `|φ| > ½` follows the separatrices in time.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Program};
use crate::flow::{
    integrate, rk4_step, sweep_family, CriticalPoint, Direction, FlowError, FlowOptions, Label, Landscape,
    OutcomeKind, Probe, Wall, R0,
};
use crate::geometry::{ChartPoint, Manifold, ScalarField, SS, SX, SY};
use crate::linalg::norm;
use crate::mscomplex::{ComplexError, MorseComplexData};
use crate::pi1::{is_trivial, presentation, Budget, Pi1Error, Presentation, TrivialityVerdict};
use crate::word::{self, exponent_sums, inverse, Letter, Word};

pub const SCHEMA: &str = "stepmap/v1";
/// Level of the seeding cross-section, half the blend margin.
pub const S_SEED: f64 = 0.05;
/// Decades of `|d|/r₀` covered by `|φ| ≤ ½`.
pub const PHI_DECADES: f64 = 10.0;
const SEP_H: f64 = 0.002;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ContinuationError {
    #[error("transport of {vertex} escaped to {direction:?}")]
    EscapedUnexpectedly { vertex: usize, direction: Direction },
    #[error("transport of {vertex} stalled at critical point {cp}")]
    TransportLingered { vertex: usize, cp: usize },
    #[error("image of step {step} runs from {found:?}, expected vertex {expected}")]
    EndpointMismatch { step: usize, expected: usize, found: Label },
    #[error("unresolved wall in the sweep of step {step} between {lo} and {hi}")]
    WallUnresolved { step: usize, lo: f64, hi: f64 },
    #[error("grafted family is not transverse near step {step}; retry with another jitter seed")]
    GraftNontransverse { step: usize },
    #[error("relation of disk {disk} maps to a nontrivial loop (certificate {certificate:?})")]
    TheoremViolation { disk: usize, certificate: Vec<i64> },
    #[error("separatrix of {cp} does not settle")]
    SeparatrixStalled { cp: usize },
    #[error("graft map is not well defined on the torus (defect {defect:e})")]
    MapNotPeriodic { defect: f64 },
    #[error("graft map needs {expected} component expressions, got {got}")]
    MapArity { expected: usize, got: usize },
    #[error("invalid step map: {0}")]
    Invalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Pi1(#[from] Pi1Error),
}

/// The unstable curve of an index-1 point, with both separatrices sampled at
/// a fixed step until the gradient vanishes.
#[derive(Clone, Debug)]
pub struct Separatrix {
    field: Arc<ScalarField>,
    x: ChartPoint,
    u: ChartPoint,
    branches: [Vec<ChartPoint>; 2],
}

impl Separatrix {
    pub fn new(land: &Landscape, x: usize) -> Result<Separatrix, ContinuationError> {
        let field = land.field.clone();
        let mut branches: [Vec<ChartPoint>; 2] = [Vec::new(), Vec::new()];
        for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
            let mut p = land.seed(x, sign, R0);
            let mut states = vec![p];
            while norm(&field.grad(&p)) > 1e-9 {
                if states.len() as f64 * SEP_H > 500.0 {
                    return Err(ContinuationError::SeparatrixStalled { cp: x });
                }
                p = rk4_step(&field, &p, SEP_H);
                states.push(p);
            }
            branches[k] = states;
        }
        Ok(Separatrix { field, x: land.point(x), u: land.frame(x)[0], branches })
    }

    pub fn point(&self, phi: f64) -> ChartPoint {
        let a = phi.abs().min(1.0);
        let m = self.field.manifold();
        if a <= 0.5 {
            if a == 0.0 {
                return self.x;
            }
            let d = phi.signum() * R0 * 10f64.powf(-PHI_DECADES * (1.0 - 2.0 * a));
            let v: ChartPoint = std::array::from_fn(|i| d * self.u[i]);
            return m.retract(&self.x, &v);
        }
        let b = &self.branches[(phi > 0.0) as usize];
        let tau = (b.len() - 1) as f64 * SEP_H * (2.0 * a - 1.0);
        let k = ((tau / SEP_H).floor() as usize).min(b.len() - 1);
        let rem = tau - k as f64 * SEP_H;
        if rem > 0.0 {
            rk4_step(&self.field, &b[k], rem)
        } else {
            b[k]
        }
    }
}

/// Sweep parameters: both ends plus `n` half-offset interior samples.
pub fn phi_grid(n: usize) -> Vec<f64> {
    let mut v = vec![-1.0];
    v.extend((0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64));
    v.push(1.0);
    v
}

/// Critical points of the top layer (every parameter at 1) of a product
/// field, with ids equal to the target complex ids.
pub fn top_layer(field: Arc<ScalarField>, target: &[CriticalPoint]) -> Result<Landscape, FlowError> {
    let dim = field.manifold().slots().len();
    let cps = target
        .iter()
        .map(|c| {
            let mut coords = c.coords.clone();
            coords.resize(dim, 1.0);
            let p = field.manifold().from_coords(&coords);
            CriticalPoint { id: c.id, coords, index: c.index, value: field.value(&p) }
        })
        .collect();
    Landscape::new(field, cps)
}

/// A flow from the seeding level to the top layer, reporting labels and
/// passes in target ids.
pub trait Dynamics: Sync {
    fn run(&self, p: &ChartPoint) -> Result<Probe, FlowError>;

    /// Level `s` of the cross-section on which step families are seeded.
    fn seed_level(&self) -> f64 {
        S_SEED
    }

    /// Places a point of `W^u_{f₁}(x)` on the seeding cross-section.
    fn lift(&self, p: &ChartPoint) -> ChartPoint {
        at_level(p, self.seed_level())
    }

    /// Start of the transport trajectory of a source minimum.
    fn lift_vertex(&self, p: &ChartPoint) -> ChartPoint {
        at_level(p, R0)
    }
}

/// The interpolation flow on `M × ℝ`.
pub struct InterpolationFlow {
    pub top: Landscape,
    pub opts: FlowOptions,
}

impl InterpolationFlow {
    /// Passes are read in the top region `s ≥ 1 − ε`, where the field is
    /// exactly `f₂ + C·h`.
    pub fn new(field: Arc<ScalarField>, target: &MorseComplexData, opts: &FlowOptions) -> Result<Self, FlowError> {
        let eps = field.blend().map_or(0.0, |b| b.eps);
        let opts = FlowOptions { pass_level: Some(1.0 - eps), ..opts.clone() };
        Ok(InterpolationFlow { top: top_layer(field, &target.critical_points)?, opts })
    }
}

impl Dynamics for InterpolationFlow {
    fn run(&self, p: &ChartPoint) -> Result<Probe, FlowError> {
        Ok(Probe::from(&integrate(&self.top, p, &self.opts)?))
    }
}

/// A map `H` between base manifolds, given by one expression per target
/// chart coordinate in the source variables, followed by a fixed jitter
/// translation.
#[derive(Clone, Debug)]
pub struct GraftMap {
    source: Manifold,
    target: Manifold,
    programs: Vec<Program>,
    shift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraftSpec {
    pub map: Vec<String>,
    #[serde(default = "half")]
    pub slab: f64,
    #[serde(default)]
    pub jitter_seed: u64,
    #[serde(default = "jitter_default")]
    pub jitter: f64,
}

fn half() -> f64 {
    0.5
}

fn jitter_default() -> f64 {
    1e-3
}

impl GraftSpec {
    pub fn new(map: &[&str], jitter_seed: u64) -> GraftSpec {
        GraftSpec { map: map.iter().map(|s| s.to_string()).collect(), slab: 0.5, jitter_seed, jitter: 1e-3 }
    }
}

impl GraftMap {
    pub fn new(source: &Manifold, target: &Manifold, spec: &GraftSpec) -> Result<GraftMap, ContinuationError> {
        let exprs: Vec<Expr> = spec
            .map
            .iter()
            .map(|s| crate::expr::parse(s))
            .collect::<Result<_, _>>()
            .map_err(|e| ContinuationError::Invalid(format!("graft map: {e}")))?;
        let slots = target.slots();
        if exprs.len() != slots.len() {
            return Err(ContinuationError::MapArity { expected: slots.len(), got: exprs.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.jitter_seed);
        let shift = slots
            .iter()
            .map(|_| if spec.jitter > 0.0 { rng.random_range(-spec.jitter..spec.jitter) } else { 0.0 })
            .collect();
        let g = GraftMap {
            source: source.clone(),
            target: target.clone(),
            programs: exprs.iter().map(Program::compile).collect(),
            shift,
        };
        if source.is_torus() && target.is_torus() {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut defect: f64 = 0.0;
            for _ in 0..16 {
                let p = [rng.random::<f64>(), rng.random::<f64>(), 0.0, 0.0, 0.0];
                let hp = g.raw(&p);
                for axis in [SX, SY] {
                    let mut q = p;
                    q[axis] += 1.0;
                    let hq = g.raw(&q);
                    for k in [SX, SY] {
                        let d = hq[k] - hp[k];
                        defect = defect.max((d - d.round()).abs());
                    }
                }
            }
            if defect > 1e-9 {
                return Err(ContinuationError::MapNotPeriodic { defect });
            }
        }
        Ok(g)
    }

    fn raw(&self, p: &ChartPoint) -> ChartPoint {
        let mut out = [0.0; 5];
        for (slot, prog) in self.target.slots().into_iter().zip(&self.programs) {
            out[slot] = prog.run(p);
        }
        out
    }

    /// `(x, s) ↦ (H(x) + δ, s)` on chart points.
    pub fn apply(&self, p: &ChartPoint) -> ChartPoint {
        let mut q = self.raw(p);
        for (slot, d) in self.target.slots().into_iter().zip(&self.shift) {
            q[slot] += d;
        }
        q[SS] = p[SS];
        self.target.reproject(&mut q);
        q
    }

    pub fn source(&self) -> &Manifold {
        &self.source
    }
}

/// `X × ℝ` up to the slab, through `H`, then `Y × ℝ` to the top layer.
pub struct GraftFlow {
    pub lower: Landscape,
    pub top: Landscape,
    pub map: GraftMap,
    pub opts: FlowOptions,
    pub slab: f64,
}

impl Dynamics for GraftFlow {
    fn run(&self, p: &ChartPoint) -> Result<Probe, FlowError> {
        let (exit, below) = if p[SS] < self.slab {
            let lo = FlowOptions { slab: Some(self.slab), ..self.opts.clone() };
            let first = integrate(&self.lower, p, &lo)?;
            match first.kind {
                OutcomeKind::CrossedSlab { exit, .. } => (self.lower.manifold().from_coords(&exit), first.max_energy_increase),
                _ => return Ok(Probe::from(&first)),
            }
        } else {
            (*p, 0.0)
        };
        let second = integrate(&self.top, &self.map.apply(&exit), &self.opts)?;
        let mut probe = Probe::from(&second);
        probe.max_energy_increase = probe.max_energy_increase.max(below);
        Ok(probe)
    }

    /// `F₁` is a product below the slab, so the exit points of a step family
    /// fill exactly `W^u_{f₁}(x) × {slab}`; seeding there avoids the
    /// exponential stretching of the lower leg.
    fn seed_level(&self) -> f64 {
        self.slab
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepImage {
    pub step: usize,
    pub word: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexImage {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMap {
    pub schema: String,
    pub images: Vec<StepImage>,
    pub transport: Vec<VertexImage>,
    pub base_transport: VertexImage,
    pub source: MorseComplexData,
    pub target: MorseComplexData,
}

impl StepMap {
    /// The map induced by a constant interpolation: every step to itself.
    pub fn identity(d: &MorseComplexData) -> StepMap {
        let transport: Vec<VertexImage> =
            d.critical_points.iter().filter(|c| c.index == 0).map(|c| VertexImage { from: c.id, to: c.id }).collect();
        StepMap {
            schema: SCHEMA.into(),
            images: d.steps.iter().map(|s| StepImage { step: s.id, word: vec![Letter::pos(s.id)] }).collect(),
            transport,
            base_transport: VertexImage { from: d.base, to: d.base },
            source: d.clone(),
            target: d.clone(),
        }
    }

    pub fn image(&self, step: usize) -> &[Letter] {
        &self.images.iter().find(|i| i.step == step).expect("every step has an image").word
    }

    pub fn transport_of(&self, v: usize) -> Option<usize> {
        self.transport.iter().find(|t| t.from == v).map(|t| t.to)
    }

    /// Concatenation of letter images, without reduction.
    pub fn apply(&self, w: &[Letter]) -> Word {
        let mut out = Vec::new();
        for l in w {
            let img = self.image(l.step);
            if l.sign > 0 {
                out.extend_from_slice(img);
            } else {
                out.extend(inverse(img));
            }
        }
        out
    }

    /// Endpoint coherence and totality of the transport.
    pub fn validate(&self) -> Result<(), ContinuationError> {
        if self.schema != SCHEMA {
            return Err(ContinuationError::Invalid(format!("schema {:?}", self.schema)));
        }
        for c in self.source.critical_points.iter().filter(|c| c.index == 0) {
            let to = self.transport_of(c.id).ok_or_else(|| ContinuationError::Invalid(format!("vertex {} has no transport", c.id)))?;
            if self.target.cp(to).map(|t| t.index) != Some(0) {
                return Err(ContinuationError::Invalid(format!("vertex {} transports to non-minimum {}", c.id, to)));
            }
        }
        if self.transport_of(self.base_transport.from) != Some(self.base_transport.to) || self.base_transport.from != self.source.base {
            return Err(ContinuationError::Invalid("base transport disagrees with the transport table".into()));
        }
        for s in &self.source.steps {
            let img = self.images.iter().find(|i| i.step == s.id).ok_or_else(|| ContinuationError::Invalid(format!("step {} has no image", s.id)))?;
            let (a, b) = (self.transport_of(s.start).unwrap(), self.transport_of(s.end).unwrap());
            self.target.check_consecutive(&img.word, false).map_err(|_| ContinuationError::Invalid(format!("image of step {} is not consecutive", s.id)))?;
            let (from, to) = match (img.word.first(), img.word.last()) {
                (Some(f), Some(l)) => (self.target.ends(*f).0, self.target.ends(*l).1),
                _ => (a, a),
            };
            if from != a || to != b {
                return Err(ContinuationError::EndpointMismatch { step: s.id, expected: if from != a { a } else { b }, found: Label::Min { cp: if from != a { from } else { to }, lift: [0, 0] } });
            }
        }
        Ok(())
    }

    /// The image of a source loop as a word in the target generators.
    pub fn loop_image(&self, target: &Presentation, w: &[Letter]) -> Word {
        target.rewrite(&self.apply(w))
    }

    /// Integer matrix of the induced map on exponent sums: row `i` is the
    /// image of the `i`-th source generator in target generator coordinates.
    pub fn abelianized(&self) -> Result<(Vec<Vec<i64>>, Presentation, Presentation), ContinuationError> {
        let ps = presentation(&self.source)?;
        let pt = presentation(&self.target)?;
        let n = self.target.steps.len();
        let rows = ps
            .generators
            .iter()
            .map(|&g| {
                let img = self.loop_image(&pt, &generator_loop(&ps, &self.source, g));
                let sums = exponent_sums(&img, n);
                pt.generators.iter().map(|&t| sums[t]).collect()
            })
            .collect();
        Ok((rows, ps, pt))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("step map serializes")
    }

    pub fn from_json(src: &str) -> Result<StepMap, ContinuationError> {
        let sm: StepMap = serde_json::from_str(src).map_err(|e| ContinuationError::Invalid(e.to_string()))?;
        sm.source.validate()?;
        sm.target.validate()?;
        sm.validate()?;
        Ok(sm)
    }
}

/// The based loop `T(start) · g · T(end)⁻¹` of a generator.
pub fn generator_loop(p: &Presentation, data: &MorseComplexData, g: usize) -> Word {
    let s = &data.steps[g];
    let mut w = p.tree_paths[&s.start].clone();
    w.push(Letter::pos(g));
    w.extend(inverse(&p.tree_paths[&s.end]));
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSweep {
    pub step: usize,
    pub walls: Vec<Wall>,
    pub sample_labels: Vec<Label>,
    pub max_energy_increase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub samples: usize,
    pub wall_tol: f64,
    pub flow: FlowOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { samples: 512, wall_tol: 1e-10, flow: FlowOptions::default() }
    }
}

/// Lifts a base point to the seeding level.
pub(crate) fn at_level(p: &ChartPoint, s: f64) -> ChartPoint {
    let mut q = *p;
    q[SS] = s;
    q
}

/// Follows the non-escaping trajectory from `(y, 0)`.
pub fn transport_base<D: Dynamics>(dyn_: &D, source: &Landscape, y: usize) -> Result<usize, ContinuationError> {
    transport_from(dyn_, &dyn_.lift_vertex(&source.point(y)), y)
}

fn transport_from<D: Dynamics>(dyn_: &D, p: &ChartPoint, y: usize) -> Result<usize, ContinuationError> {
    match dyn_.run(p)?.label {
        Label::Min { cp, .. } => Ok(cp),
        Label::Escaped(direction) => Err(ContinuationError::EscapedUnexpectedly { vertex: y, direction }),
        Label::Lingered { cp } => Err(ContinuationError::TransportLingered { vertex: y, cp }),
        Label::Slab => Err(ContinuationError::Invalid("trajectory stopped at the slab".into())),
    }
}

/// Sweeps the half disk of the step through `x` and returns its image word:
/// the walls are read from the end of the step back to its start, which is
/// the evaluation word, and the result is inverted once.
pub fn sweep_step<D: Dynamics>(
    dyn_: &D,
    sep: &Separatrix,
    step: usize,
    target: &MorseComplexData,
    opts: &SweepOptions,
) -> Result<(Word, Label, Label, StepSweep), ContinuationError> {
    let probe = |phi: f64| dyn_.run(&dyn_.lift(&sep.point(phi)));
    let params = phi_grid(opts.samples);
    let (probes, walls) = sweep_family(&probe, &params, opts.wall_tol).map_err(|e| match e {
        FlowError::NoLinger { lo, hi } => ContinuationError::WallUnresolved { step, lo, hi },
        other => other.into(),
    })?;
    let mut ev: Word = Vec::with_capacity(walls.len());
    for wall in walls.iter().rev() {
        let t = target
            .steps
            .iter()
            .find(|s| s.through == wall.cp)
            .ok_or(ContinuationError::WallUnresolved { step, lo: wall.param, hi: wall.param })?;
        ev.push(Letter { step: t.id, sign: -wall.sign });
    }
    let word = inverse(&ev);
    let sweep = StepSweep {
        step,
        walls,
        sample_labels: probes.iter().map(|p| p.label).collect(),
        max_energy_increase: probes.iter().fold(0.0, |a, p| a.max(p.max_energy_increase)),
    };
    Ok((word, probes[0].label, probes[probes.len() - 1].label, sweep))
}

/// Sweeps every source step and transports every source minimum.
pub fn build_step_map<D: Dynamics>(
    dyn_: &D,
    source_land: &Landscape,
    source: &MorseComplexData,
    target: &MorseComplexData,
    opts: &SweepOptions,
) -> Result<(StepMap, Vec<StepSweep>), ContinuationError> {
    use rayon::prelude::*;
    let mins: Vec<usize> = source.critical_points.iter().filter(|c| c.index == 0).map(|c| c.id).collect();
    let transport: Vec<VertexImage> = mins
        .par_iter()
        .map(|&y| Ok(VertexImage { from: y, to: transport_base(dyn_, source_land, y)? }))
        .collect::<Result<_, ContinuationError>>()?;
    let t = |v: usize| transport.iter().find(|t| t.from == v).map(|t| t.to).unwrap();
    let results: Vec<(StepImage, StepSweep)> = source
        .steps
        .par_iter()
        .map(|s| {
            let sep = Separatrix::new(source_land, s.through)?;
            let (word, first, last, sweep) = sweep_step(dyn_, &sep, s.id, target, opts)?;
            for (lab, v) in [(first, s.start), (last, s.end)] {
                if !matches!(lab, Label::Min { cp, .. } if cp == t(v)) {
                    return Err(ContinuationError::EndpointMismatch { step: s.id, expected: t(v), found: lab });
                }
            }
            Ok((StepImage { step: s.id, word }, sweep))
        })
        .collect::<Result<_, ContinuationError>>()?;
    let (images, sweeps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let sm = StepMap {
        schema: SCHEMA.into(),
        images,
        base_transport: VertexImage { from: source.base, to: t(source.base) },
        transport,
        source: source.clone(),
        target: target.clone(),
    };
    sm.validate()?;
    Ok((sm, sweeps))
}

/// `φ̃_F` for an interpolation field `F` built over `f₁` and `f₂`.
pub fn continuation_map(
    source_land: &Landscape,
    source: &MorseComplexData,
    target: &MorseComplexData,
    interpolation: Arc<ScalarField>,
    opts: &SweepOptions,
) -> Result<(StepMap, Vec<StepSweep>), ContinuationError> {
    let flow = InterpolationFlow::new(interpolation, target, &opts.flow)?;
    build_step_map(&flow, source_land, source, target, opts)
}

/// `φ̃^gr_H` for grafted data `F₁ = f₁ + C·h`, `F₂ = f₂ + C·h`.
pub fn grafted_map(
    source_land: &Landscape,
    source: &MorseComplexData,
    target: &MorseComplexData,
    lower: Arc<ScalarField>,
    upper: Arc<ScalarField>,
    graft: &GraftSpec,
    opts: &SweepOptions,
) -> Result<(StepMap, Vec<StepSweep>), ContinuationError> {
    let flow = graft_flow(lower, upper, target, graft, opts)?;
    build_step_map(&flow, source_land, source, target, opts).map_err(|e| match e {
        ContinuationError::WallUnresolved { step, .. } => ContinuationError::GraftNontransverse { step },
        ContinuationError::TransportLingered { vertex, .. } => ContinuationError::GraftNontransverse { step: vertex },
        other => other,
    })
}

pub fn graft_flow(
    lower: Arc<ScalarField>,
    upper: Arc<ScalarField>,
    target: &MorseComplexData,
    graft: &GraftSpec,
    opts: &SweepOptions,
) -> Result<GraftFlow, ContinuationError> {
    let map = GraftMap::new(lower.manifold().base(), upper.manifold().base(), graft)?;
    Ok(GraftFlow {
        lower: Landscape::new(lower, Vec::new())?,
        top: top_layer(upper, &target.critical_points)?,
        map,
        opts: FlowOptions { pass_level: Some(graft.slab), ..opts.flow.clone() },
        slab: graft.slab,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskCheck {
    pub disk: usize,
    pub image: Word,
    pub verdict: TrivialityVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientReport {
    pub disks: Vec<DiskCheck>,
    pub inconclusive: usize,
}

/// Every source relation must map to a trivial target loop.
pub fn verify_theorem_quotient(sm: &StepMap, budget: Budget) -> Result<QuotientReport, ContinuationError> {
    sm.validate()?;
    let pt = presentation(&sm.target)?;
    let mut disks = Vec::new();
    for d in &sm.source.disk_boundaries {
        let image = sm.loop_image(&pt, &d.word);
        let verdict = is_trivial(&image, &pt, budget);
        if let TrivialityVerdict::Nontrivial { certificate } = &verdict {
            return Err(ContinuationError::TheoremViolation { disk: d.of, certificate: certificate.clone() });
        }
        disks.push(DiskCheck { disk: d.of, image, verdict });
    }
    let inconclusive = disks.iter().filter(|d| matches!(d.verdict, TrivialityVerdict::Unknown { .. })).count();
    Ok(QuotientReport { disks, inconclusive })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    Rigid,
    Family,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub source: usize,
    pub target: usize,
    /// Indices of `(x, 0)` in `F₁` and `(y, 1)` in `F₂`.
    pub source_index: usize,
    pub target_index: usize,
    pub kind: ConnectionKind,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub connections: Vec<Connection>,
    pub anomalies: Vec<String>,
}

/// Grafted connections seen by the sweeps, checked against the expected
/// dimension `ind(x,0) − ind(y,1) − 1`.
pub fn dimension_check(
    source_land: &Landscape,
    source: &MorseComplexData,
    target: &MorseComplexData,
    lower: Arc<ScalarField>,
    upper: Arc<ScalarField>,
    graft: &GraftSpec,
    opts: &SweepOptions,
) -> Result<DimensionReport, ContinuationError> {
    let flow = graft_flow(lower, upper, target, graft, opts)?;
    let (sm, sweeps) = build_step_map(&flow, source_land, source, target, opts)?;
    let tindex = |id: usize| target.cp(id).map_or(usize::MAX, |c| c.index);
    let mut tally: BTreeMap<(usize, usize, ConnectionKind), usize> = BTreeMap::new();
    let mut anomalies = Vec::new();
    for t in &sm.transport {
        *tally.entry((t.from, t.to, ConnectionKind::Rigid)).or_default() += 1;
    }
    for (s, sw) in source.steps.iter().zip(&sweeps) {
        for w in &sw.walls {
            *tally.entry((s.through, w.cp, ConnectionKind::Rigid)).or_default() += 1;
        }
        for lab in &sw.sample_labels {
            match lab {
                Label::Min { cp, .. } => {
                    tally.entry((s.through, *cp, ConnectionKind::Family)).or_insert(1);
                }
                other => anomalies.push(format!("step {}: sample landed as {:?}", s.id, other)),
            }
        }
    }
    let mut connections = Vec::new();
    for ((src, tgt, kind), count) in tally {
        let si = source.cp(src).map_or(0, |c| c.index) + 1;
        let ti = tindex(tgt);
        let expected = match kind {
            ConnectionKind::Rigid => 1,
            ConnectionKind::Family => 2,
        };
        if si.checked_sub(ti) != Some(expected) {
            anomalies.push(format!("{kind:?} connection {src} → {tgt} at index difference {}", si as i64 - ti as i64));
        }
        connections.push(Connection { source: src, target: tgt, source_index: si, target_index: ti, kind, count });
    }
    Ok(DimensionReport { connections, anomalies })
}

/// Determinant and trace of a square integer matrix of size ≤ 3.
pub fn det_trace(m: &[Vec<i64>]) -> (i64, i64) {
    let tr = (0..m.len()).map(|i| m[i][i]).sum();
    let det = match m.len() {
        0 => 1,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unimplemented!("matrices above 3×3 do not occur"),
    };
    (det, tr)
}

/// Reduced image words, for display.
pub fn reduced_images(sm: &StepMap) -> Vec<(usize, Word)> {
    sm.images.iter().map(|i| (i.step, word::free_reduce(&i.word))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::{build_interpolation, product_field, standard_profile, InterpolationSpec};
    use crate::mscomplex::{ExtractOptions, Provenance};
    use crate::word::w;

    const COS: &str = "cos(2*pi*x)+cos(2*pi*y)";

    fn complex(m: Manifold, f: &str) -> (Landscape, MorseComplexData) {
        let l = Landscape::analyze(ScalarField::parse(m, f).unwrap(), 8).unwrap();
        let d = MorseComplexData::extract(&l, &ExtractOptions::default(), Provenance::Handwritten).unwrap();
        (l, d)
    }

    fn interp(f1: &str, f2: &str) -> Arc<ScalarField> {
        let spec = InterpolationSpec::new(Manifold::Torus, parse(f1).unwrap(), parse(f2).unwrap());
        Arc::new(build_interpolation(&spec).unwrap())
    }

    #[test]
    fn identity_interpolation_is_the_identity() {
        let (l, d) = complex(Manifold::Torus, COS);
        let (sm, _) = continuation_map(&l, &d, &d, interp(COS, COS), &SweepOptions::default()).unwrap();
        assert_eq!(sm.images, vec![StepImage { step: 0, word: w("0+") }, StepImage { step: 1, word: w("1+") }]);
        assert_eq!(sm.base_transport, VertexImage { from: 0, to: 0 });
        let rep = verify_theorem_quotient(&sm, Budget::default()).unwrap();
        assert!(rep.disks.iter().all(|d| d.verdict.is_trivial()));
    }

    #[test]
    fn translated_interpolation_is_the_identity_on_homology() {
        let f2 = "cos(2*pi*(x-0.3))+cos(2*pi*(y-0.2))";
        let (l, d1) = complex(Manifold::Torus, COS);
        let (_, d2) = complex(Manifold::Torus, f2);
        let (sm, sweeps) = continuation_map(&l, &d1, &d2, interp(COS, f2), &SweepOptions::default()).unwrap();
        assert_eq!(sm.base_transport.to, 0);
        let (m, _, _) = sm.abelianized().unwrap();
        assert_eq!(m, vec![vec![1, 0], vec![0, 1]]);
        assert!(sweeps.iter().all(|s| s.max_energy_increase <= 1e-9));
        let rep = verify_theorem_quotient(&sm, Budget::default()).unwrap();
        assert_eq!(rep.inconclusive, 0);
    }

    #[test]
    fn extra_cancelling_pair_keeps_the_map_unimodular() {
        let f2 = "cos(2*pi*x)+cos(2*pi*y)-1.5*exp(8*(cos(2*pi*(x-0.25))+cos(2*pi*(y-0.5))-2))";
        let (l, d1) = complex(Manifold::Torus, COS);
        let (_, d2) = complex(Manifold::Torus, f2);
        assert_eq!(d2.steps.len(), 3);
        let (sm, _) = continuation_map(&l, &d1, &d2, interp(COS, f2), &SweepOptions::default()).unwrap();
        let (m, _, pt) = sm.abelianized().unwrap();
        assert_eq!(pt.generators.len(), 2);
        assert_eq!(det_trace(&m).0.abs(), 1);
        // the image of the horizontal step now detours through the new minimum
        assert!(sm.images.iter().any(|i| word::free_reduce(&i.word).len() >= 2), "{:?}", sm.images);
        let rep = verify_theorem_quotient(&sm, Budget::default()).unwrap();
        assert_eq!(rep.inconclusive, 0);
    }

    #[test]
    fn negative_seed_escapes() {
        let (l, d) = complex(Manifold::Torus, COS);
        let flow = InterpolationFlow::new(interp(COS, COS), &d, &FlowOptions::default()).unwrap();
        let p = at_level(&l.point(0), -R0);
        assert_eq!(flow.run(&p).unwrap().label, Label::Escaped(Direction::NegInf));
        assert_eq!(transport_base(&flow, &l, 0).unwrap(), 0);
    }

    #[test]
    fn incoherent_handwritten_maps_are_rejected() {
        let (l, d) = complex(Manifold::Torus, COS);
        let (mut sm, _) = continuation_map(&l, &d, &d, interp(COS, COS), &SweepOptions::default()).unwrap();
        sm.images[0].word = w("0+ 0+ 7+");
        assert!(verify_theorem_quotient(&sm, Budget::default()).is_err());
        assert!(StepMap::from_json(&sm.to_json()).is_err());
    }

    fn graft(map: &[&str]) -> (StepMap, DimensionReport) {
        let (l, d) = complex(Manifold::Torus, COS);
        let h = standard_profile();
        let f = parse(COS).unwrap();
        let lower = Arc::new(product_field(&Manifold::Torus, &f, &h, 1.0).unwrap());
        let spec = GraftSpec::new(map, 11);
        let opts = SweepOptions::default();
        let (sm, _) = grafted_map(&l, &d, &d, lower.clone(), lower.clone(), &spec, &opts).unwrap();
        let rep = dimension_check(&l, &d, &d, lower.clone(), lower, &spec, &opts).unwrap();
        (sm, rep)
    }

    #[test]
    fn grafted_shear() {
        let (sm, rep) = graft(&["x+y", "y"]);
        let (m, _, _) = sm.abelianized().unwrap();
        assert_eq!(sm.images[0].word, w("0+"));
        assert_eq!(sm.images[1].word, w("0+ 1+"));
        assert_eq!(det_trace(&m), (1, 2));
        assert_ne!(m, vec![vec![1, 0], vec![0, 1]]);
        assert!(rep.anomalies.is_empty(), "{:?}", rep.anomalies);
        assert!(verify_theorem_quotient(&sm, Budget::default()).unwrap().disks[0].verdict.is_trivial());
    }

    #[test]
    fn grafted_identity_and_constant() {
        let (sm, _) = graft(&["x", "y"]);
        let (m, _, _) = sm.abelianized().unwrap();
        assert_eq!(m, vec![vec![1, 0], vec![0, 1]]);
        let (sm, _) = graft(&["0.3", "0.6"]);
        assert!(reduced_images(&sm).iter().all(|(_, w)| w.is_empty()));
    }

    #[test]
    fn non_integer_torus_maps_are_rejected() {
        let spec = GraftSpec::new(&["0.5*x", "y"], 0);
        assert!(matches!(
            GraftMap::new(&Manifold::Torus, &Manifold::Torus, &spec),
            Err(ContinuationError::MapNotPeriodic { .. })
        ));
    }
}
