//! Relative Morse fundamental group of interpolation-type functions
//! `F = F̃ + C·h` on `M×ℝ`.
//!
//! The enlarged complex has one vertex per minimum of `F` plus formal
//! endpoints `(m, ±∞)` on each side where `h → −∞`. Steps are the index-1
//! points of `F` and the steps of `f₀` / `f_{k+1}` "at infinity". Paths from
//! the base end at the base or at a formal point; two such paths are
//! equivalent under cancellation (1), disk replacement (2) and dropping a
//! trailing infinity step (3). The result is a pointed set, not a group.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::{continuation_map, ContinuationError, StepMap, SweepOptions};
use crate::expr::{self, Env, Var};
use crate::flow::{CriticalPoint, FlowError, Landscape};
use crate::geometry::{build_interpolation, GeometryError, InterpolationSpec, Manifold, ScalarField};
use crate::mscomplex::{self, ComplexError, DiskBoundary, ExtractOptions, MorseComplexData, Provenance, Step};
use crate::pi1::{is_trivial, presentation, Abelianization, Budget, Pi1Error, Presentation, Rewrite, TrivialityVerdict};
use crate::word::{self, exponent_sums, inverse, Letter, Word};

pub const SCHEMA: &str = "relpi1/v1";
/// Desk-scale cap on enumerated word length.
pub const MAX_LEN: usize = 12;
/// Longest infinity tail tried when matching two paths to the same side.
const MAX_TAIL: usize = 4;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RelError {
    #[error("invalid profile: {0}")]
    ProfileInvalid(String),
    #[error("word is not consecutive at position {position}")]
    NotConsecutive { position: usize },
    #[error("bad path: {0}")]
    BadPath(String),
    #[error("bad base point: {0}")]
    BadBase(String),
    #[error("max-len {0} exceeds {MAX_LEN}")]
    MaxLenTooLarge(usize),
    #[error("class enumeration exceeded its budget after {explored} states")]
    BudgetExceeded { explored: usize },
    #[error("invariance check inconclusive within budget")]
    InconclusiveBudget,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("json: {0}")]
    Json(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
    #[error(transparent)]
    Pi1(#[from] Pi1Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    NegInf,
    PosInf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nature {
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    PlusInf,
    MinusInf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub p: f64,
    pub nature: Nature,
}

/// Critical points of `h` and its limits at `∓∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileShape {
    pub critical: Vec<ProfilePoint>,
    pub limits: [Limit; 2],
}

impl ProfileShape {
    /// Shape with `p_i = i − 1` and the limits forced by the natures.
    pub fn of(natures: &[Nature]) -> ProfileShape {
        let critical: Vec<ProfilePoint> =
            natures.iter().enumerate().map(|(i, &nature)| ProfilePoint { p: i as f64, nature }).collect();
        let lim = |n: Option<&Nature>| if n == Some(&Nature::Max) { Limit::MinusInf } else { Limit::PlusInf };
        ProfileShape { limits: [lim(natures.first()), lim(natures.last())], critical }
    }

    pub fn k(&self) -> usize {
        self.critical.len()
    }

    pub fn natures(&self) -> Vec<Nature> {
        self.critical.iter().map(|c| c.nature).collect()
    }

    /// Nature of slab `j` (`1..=k`).
    fn nature(&self, j: usize) -> Nature {
        self.critical[j - 1].nature
    }

    /// Whether formal endpoints exist on `side`, i.e. `h → −∞` there.
    pub fn has_side(&self, side: Side) -> bool {
        self.limits[side as usize] == Limit::MinusInf
    }

    pub fn validate(&self) -> Result<(), RelError> {
        let bad = |m: String| Err(RelError::ProfileInvalid(m));
        if self.critical.is_empty() {
            return bad("h needs at least one critical point".into());
        }
        for (i, pair) in self.critical.windows(2).enumerate() {
            if pair[0].p >= pair[1].p {
                return bad(format!("critical points {} and {} are not increasing", i + 1, i + 2));
            }
            if pair[0].nature == pair[1].nature {
                return bad(format!("critical points {} and {} are both {:?}", i + 1, i + 2, pair[0].nature));
            }
        }
        let forced = ProfileShape::of(&self.natures()).limits;
        if forced != self.limits {
            return bad(format!("limits {:?} contradict the natures, which force {:?}", self.limits, forced));
        }
        Ok(())
    }
}

/// Continuation data of a max slab `i`: `f_i → f_{i−1}` (`down`) and
/// `f_i → f_{i+1}` (`up`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub down: StepMap,
    pub up: StepMap,
}

/// Combinatorial profile: the shape of `h`, the slab complexes
/// `f₀,…,f_{k+1}` and the connecting maps of the max slabs, keyed by slab.
/// A max slab without an entry must agree with both neighbours and is
/// connected by the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationProfile {
    pub schema: String,
    pub shape: ProfileShape,
    pub slabs: Vec<MorseComplexData>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub connections: BTreeMap<usize, Connection>,
    pub c: f64,
}

impl InterpolationProfile {
    pub fn handwritten(natures: &[Nature], slabs: Vec<MorseComplexData>) -> InterpolationProfile {
        InterpolationProfile { schema: SCHEMA.into(), shape: ProfileShape::of(natures), slabs, connections: BTreeMap::new(), c: 1.0 }
    }

    pub fn validate(&self) -> Result<(), RelError> {
        if self.schema != SCHEMA {
            return Err(RelError::ProfileInvalid(format!("schema {:?}", self.schema)));
        }
        self.shape.validate()?;
        let k = self.shape.k();
        if self.slabs.len() != k + 2 {
            return Err(RelError::ProfileInvalid(format!("{} slab functions for k = {k}, expected {}", self.slabs.len(), k + 2)));
        }
        for (i, s) in self.slabs.iter().enumerate() {
            s.validate().map_err(|e| RelError::ProfileInvalid(format!("slab {i}: {e}")))?;
        }
        for (&i, c) in &self.connections {
            if i == 0 || i > k || self.shape.nature(i) != Nature::Max {
                return Err(RelError::ProfileInvalid(format!("connection at slab {i}, which is not a max slab")));
            }
            for (m, from, to) in [(&c.down, i, i - 1), (&c.up, i, i + 1)] {
                m.validate().map_err(|e| RelError::ProfileInvalid(format!("connection {from}→{to}: {e}")))?;
                if m.source.steps != self.slabs[from].steps || m.target.steps != self.slabs[to].steps {
                    return Err(RelError::ProfileInvalid(format!("connection {from}→{to} does not join the slab complexes")));
                }
            }
        }
        Ok(())
    }

    fn connection(&self, i: usize) -> Result<Connection, RelError> {
        if let Some(c) = self.connections.get(&i) {
            return Ok(c.clone());
        }
        let same = |a: &MorseComplexData, b: &MorseComplexData| {
            a.steps == b.steps && a.disk_boundaries == b.disk_boundaries && ids(a) == ids(b)
        };
        let f = &self.slabs[i];
        if !same(f, &self.slabs[i - 1]) || !same(f, &self.slabs[i + 1]) {
            return Err(RelError::ProfileInvalid(format!("max slab {i} differs from a neighbour but has no connection")));
        }
        Ok(Connection { down: StepMap::identity(f), up: StepMap::identity(f) })
    }
}

fn ids(d: &MorseComplexData) -> Vec<(usize, usize)> {
    d.critical_points.iter().map(|c| (c.id, c.index)).collect()
}

/// Numeric profile: `h` and the slab functions as expressions on `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericProfile {
    pub manifold: Manifold,
    pub h: String,
    pub critical: Vec<ProfilePoint>,
    pub limits: [Limit; 2],
    pub slabs: Vec<String>,
    pub c: f64,
}

impl NumericProfile {
    /// Checks that `h′` vanishes exactly at the listed points with the listed
    /// natures, by sampling `h′` on `[p₁ − 5, p_k + 5]`.
    pub fn check_h(&self) -> Result<(), RelError> {
        let shape = ProfileShape { critical: self.critical.clone(), limits: self.limits };
        shape.validate()?;
        let h = expr::parse(&self.h).map_err(|e| RelError::ProfileInvalid(format!("h: {e}")))?;
        let dh = h.diff(Var::S);
        let ddh = dh.diff(Var::S);
        let at = |e: &expr::Expr, s: f64| e.eval(&Env::new().with(Var::S, s)).map_err(|e| RelError::ProfileInvalid(format!("h: {e}")));
        for (i, c) in self.critical.iter().enumerate() {
            let (d1, d2) = (at(&dh, c.p)?, at(&ddh, c.p)?);
            if d1.abs() > 1e-8 {
                return Err(RelError::ProfileInvalid(format!("h′(p{}) = {d1:e}, not a critical point", i + 1)));
            }
            let ok = match c.nature {
                Nature::Max => d2 < 0.0,
                Nature::Min => d2 > 0.0,
            };
            if !ok {
                return Err(RelError::ProfileInvalid(format!("h″(p{}) = {d2} does not match {:?}", i + 1, c.nature)));
            }
        }
        let lo = self.critical[0].p - 5.0;
        let hi = self.critical[self.critical.len() - 1].p + 5.0;
        let n = ((hi - lo) / 1e-3) as usize;
        let mut prev: Option<f64> = None;
        for j in 0..=n {
            let s = lo + (hi - lo) * j as f64 / n as f64;
            if self.critical.iter().any(|c| (s - c.p).abs() < 1e-2) {
                prev = None;
                continue;
            }
            let d = at(&dh, s)?;
            if d.abs() < 1e-12 || prev.is_some_and(|q| q * d < 0.0) {
                return Err(RelError::ProfileInvalid(format!("h has an unlisted critical point near s = {s:.3}")));
            }
            prev = Some(d);
        }
        Ok(())
    }

    /// Extracts every slab complex and computes the connecting maps of the
    /// max slabs by continuation. Equal neighbouring slabs are joined by the
    /// identity without integrating.
    pub fn resolve(&self, extract: &ExtractOptions, sweep: &SweepOptions) -> Result<InterpolationProfile, RelError> {
        self.check_h()?;
        let shape = ProfileShape { critical: self.critical.clone(), limits: self.limits };
        let k = shape.k();
        if self.slabs.len() != k + 2 {
            return Err(RelError::ProfileInvalid(format!("{} slab functions for k = {k}, expected {}", self.slabs.len(), k + 2)));
        }
        let mut lands = Vec::new();
        let mut slabs = Vec::new();
        for f in &self.slabs {
            let land = Landscape::analyze(ScalarField::parse(self.manifold.clone(), f)?, 8)?;
            slabs.push(MorseComplexData::extract(&land, extract, Provenance::Handwritten)?);
            lands.push(land);
        }
        let mut connections = BTreeMap::new();
        for i in (1..=k).filter(|&i| shape.nature(i) == Nature::Max) {
            if self.slabs[i] == self.slabs[i - 1] && self.slabs[i] == self.slabs[i + 1] {
                continue;
            }
            let map = |to: usize| -> Result<StepMap, RelError> {
                if self.slabs[i] == self.slabs[to] {
                    return Ok(StepMap::identity(&slabs[i]));
                }
                let spec = InterpolationSpec::new(
                    self.manifold.clone(),
                    expr::parse(&self.slabs[i]).map_err(GeometryError::from)?,
                    expr::parse(&self.slabs[to]).map_err(GeometryError::from)?,
                );
                let field = Arc::new(build_interpolation(&spec)?);
                Ok(continuation_map(&lands[i], &slabs[i], &slabs[to], field, sweep)?.0)
            };
            connections.insert(i, Connection { down: map(i - 1)?, up: map(i + 1)? });
        }
        Ok(InterpolationProfile { schema: SCHEMA.into(), shape, slabs, connections, c: self.c })
    }
}

/// An endpoint of a relative path: a minimum of `F` (by its id in the
/// enlarged complex) or a formal point `(m, ±∞)` with `m` a minimum of `f₀`
/// or `f_{k+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelEndpoint {
    Point { id: usize },
    Formal { min: usize, side: Side },
}

/// A critical point of `F`, or of `f₀` / `f_{k+1}` at infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelPoint {
    pub id: usize,
    pub slab: usize,
    pub f_cp: usize,
    pub f_index: usize,
    /// Index in `F`; for points at infinity, the index in `f₀` / `f_{k+1}`.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepKind {
    /// A step of `f_j` on the min slab `j`.
    Level { slab: usize, f_step: usize },
    /// The step through `(m, p_i)` on a max slab.
    Sigma { slab: usize, f_min: usize },
    /// A step of `f₀` / `f_{k+1}`; on the `−∞` side it runs against the
    /// orientation of the underlying `f₀` step.
    Infinity { side: Side, f_step: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelStep {
    pub step: usize,
    pub label: String,
    #[serde(flatten)]
    pub kind: StepKind,
}

/// The enlarged complex. `data` is an ordinary complex whose vertices are
/// the minima of `F` and the formal points, so the presentation and word
/// machinery of `pi1` applies unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelComplex {
    pub schema: String,
    pub shape: ProfileShape,
    pub points: Vec<RelPoint>,
    pub steps: Vec<RelStep>,
    pub data: MorseComplexData,
}

#[derive(Default)]
struct Builder {
    points: Vec<RelPoint>,
    cps: Vec<CriticalPoint>,
    steps: Vec<Step>,
    infos: Vec<RelStep>,
    disks: Vec<DiskBoundary>,
}

impl Builder {
    fn point(&mut self, slab: usize, f: &CriticalPoint, index: usize, side: Option<Side>, level: Option<f64>) -> usize {
        let id = self.cps.len();
        let mut coords = f.coords.clone();
        coords.extend(level);
        self.cps.push(CriticalPoint { id, coords, index, value: f.value });
        self.points.push(RelPoint { id, slab, f_cp: f.id, f_index: f.index, index, side });
        id
    }

    fn step(&mut self, through: usize, start: usize, end: usize, label: String, kind: StepKind) -> usize {
        let id = self.steps.len();
        self.steps.push(Step { id, through, start, end, start_lift: None, end_lift: None });
        self.infos.push(RelStep { step: id, label, kind });
        id
    }
}

fn side_of(slab: usize, k: usize) -> Option<Side> {
    match slab {
        0 => Some(Side::NegInf),
        s if s == k + 1 => Some(Side::PosInf),
        _ => None,
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::NegInf => "-inf",
        Side::PosInf => "+inf",
    }
}

/// Index bookkeeping: a max slab contributes `Crit_{q−1}(f_i)` to
/// `Crit_q(F)`, a min slab `Crit_q(f_i)`; minima of `F` and formal points
/// are the vertices, index-1 points the steps, index-2 points the disks.
pub fn build_relative_complex(profile: &InterpolationProfile) -> Result<RelComplex, RelError> {
    profile.validate()?;
    let shape = &profile.shape;
    let k = shape.k();
    let vertex_slabs: Vec<usize> = (0..=k + 1)
        .filter(|&j| match side_of(j, k) {
            Some(side) => shape.has_side(side),
            None => shape.nature(j) == Nature::Min,
        })
        .collect();
    let max_slabs: Vec<usize> = (1..=k).filter(|&i| shape.nature(i) == Nature::Max).collect();
    let conns: BTreeMap<usize, Connection> =
        max_slabs.iter().map(|&i| profile.connection(i).map(|c| (i, c))).collect::<Result<_, _>>()?;
    let level = |j: usize| side_of(j, k).is_none().then(|| shape.critical[j - 1].p);

    let mut b = Builder::default();
    // vertices
    let mut vertex: HashMap<(usize, usize), usize> = HashMap::new();
    for &j in &vertex_slabs {
        for c in profile.slabs[j].critical_points.iter().filter(|c| c.index == 0) {
            let id = b.point(j, c, 0, side_of(j, k), level(j));
            vertex.insert((j, c.id), id);
        }
    }
    let v = |j: usize, m: usize| -> Result<usize, RelError> {
        vertex.get(&(j, m)).copied().ok_or_else(|| RelError::ProfileInvalid(format!("slab {j} has no minimum {m}")))
    };
    // steps; `letter[(j, f_step)]` is the enlarged letter of a forward f_j step
    let mut letter: HashMap<(usize, usize), Letter> = HashMap::new();
    for &j in &vertex_slabs {
        let f = &profile.slabs[j];
        for s in &f.steps {
            let cp = f.cp(s.through).expect("validated");
            let side = side_of(j, k);
            let through = b.point(j, cp, 1, side, level(j));
            let (a, e) = (v(j, s.start)?, v(j, s.end)?);
            let id = match side {
                None => b.step(through, a, e, format!("s{}@p{j}", s.id), StepKind::Level { slab: j, f_step: s.id }),
                Some(side) => {
                    let (a, e) = if side == Side::NegInf { (e, a) } else { (a, e) };
                    b.step(through, a, e, format!("s{}@{}", s.id, side_name(side)), StepKind::Infinity { side, f_step: s.id })
                }
            };
            let sign = if side == Some(Side::NegInf) { -1 } else { 1 };
            letter.insert((j, s.id), Letter { step: id, sign });
        }
    }
    let mut sigma: HashMap<(usize, usize), usize> = HashMap::new();
    for &i in &max_slabs {
        let f = &profile.slabs[i];
        let c = &conns[&i];
        for m in f.critical_points.iter().filter(|c| c.index == 0) {
            let lo = c.down.transport_of(m.id).ok_or_else(|| RelError::ProfileInvalid(format!("slab {i}: minimum {} not transported down", m.id)))?;
            let hi = c.up.transport_of(m.id).ok_or_else(|| RelError::ProfileInvalid(format!("slab {i}: minimum {} not transported up", m.id)))?;
            let through = b.point(i, m, 1, None, level(i));
            let id = b.step(through, v(i - 1, lo)?, v(i + 1, hi)?, format!("σ{}@p{i}", m.id), StepKind::Sigma { slab: i, f_min: m.id });
            sigma.insert((i, m.id), id);
        }
    }
    let lift = |j: usize, w: &[Letter]| -> Word {
        w.iter()
            .map(|l| {
                let base = letter[&(j, l.step)];
                Letter { step: base.step, sign: base.sign * l.sign }
            })
            .collect()
    };
    // disks
    for &j in &vertex_slabs {
        let f = &profile.slabs[j];
        for d in &f.disk_boundaries {
            let cp = f.cp(d.of).expect("validated");
            let of = b.point(j, cp, 2, side_of(j, k), level(j));
            b.disks.push(DiskBoundary { of, word: lift(j, &d.word) });
        }
    }
    for &i in &max_slabs {
        let f = &profile.slabs[i];
        let c = &conns[&i];
        for s in &f.steps {
            let cp = f.cp(s.through).expect("validated");
            let of = b.point(i, cp, 2, None, level(i));
            // up(z) · σ_end⁻¹ · down(z)⁻¹ · σ_start
            let mut word = lift(i + 1, c.up.image(s.id));
            word.push(Letter::neg(sigma[&(i, s.end)]));
            word.extend(inverse(&lift(i - 1, c.down.image(s.id))));
            word.push(Letter::pos(sigma[&(i, s.start)]));
            b.disks.push(DiskBoundary { of, word: word::min_rotation(&word::cyclic_reduce(&word)) });
        }
        for z in f.critical_points.iter().filter(|c| c.index == 2) {
            b.point(i, z, 3, None, level(i));
        }
    }
    for &j in vertex_slabs.iter().filter(|&&j| side_of(j, k).is_none()) {
        for z in profile.slabs[j].critical_points.iter().filter(|c| c.index >= 3) {
            b.point(j, z, z.index, None, level(j));
        }
    }
    let base = b.cps.iter().find(|c| c.index == 0).map(|c| c.id).ok_or_else(|| RelError::ProfileInvalid("F has no minima".into()))?;
    let data = MorseComplexData {
        schema: mscomplex::SCHEMA.into(),
        manifold: None,
        critical_points: b.cps,
        steps: b.steps,
        disk_boundaries: b.disks,
        base,
        provenance: Provenance::Handwritten,
        warnings: Vec::new(),
    };
    let rc = RelComplex { schema: SCHEMA.into(), shape: shape.clone(), points: b.points, steps: b.infos, data };
    rc.validate()?;
    Ok(rc)
}

/// How a path ends: at the (non-formal) base, or on a side at infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminus {
    Base,
    NegInf,
    PosInf,
}

impl From<Side> for Terminus {
    fn from(s: Side) -> Terminus {
        match s {
            Side::NegInf => Terminus::NegInf,
            Side::PosInf => Terminus::PosInf,
        }
    }
}

impl RelComplex {
    pub fn validate(&self) -> Result<(), RelError> {
        if self.schema != SCHEMA {
            return Err(RelError::Json(format!("schema {:?}", self.schema)));
        }
        self.data.validate()?;
        if self.steps.len() != self.data.steps.len() || self.steps.iter().enumerate().any(|(i, s)| s.step != i) {
            return Err(RelError::Json("step annotations do not match the steps".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("relative complex serializes")
    }

    pub fn from_json(src: &str) -> Result<RelComplex, RelError> {
        let rc: RelComplex = serde_json::from_str(src).map_err(|e| RelError::Json(e.to_string()))?;
        rc.validate()?;
        Ok(rc)
    }

    pub fn point(&self, id: usize) -> Option<&RelPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn endpoint(&self, vertex: usize) -> Option<RelEndpoint> {
        let p = self.point(vertex).filter(|p| p.index == 0)?;
        Some(match p.side {
            Some(side) => RelEndpoint::Formal { min: p.f_cp, side },
            None => RelEndpoint::Point { id: p.id },
        })
    }

    pub fn vertex(&self, e: RelEndpoint) -> Option<usize> {
        let p = match e {
            RelEndpoint::Point { id } => self.point(id).filter(|p| p.side.is_none()),
            RelEndpoint::Formal { min, side } => self.points.iter().find(|p| p.side == Some(side) && p.f_cp == min),
        }?;
        (p.index == 0).then_some(p.id)
    }

    /// The vertex `(m, p_j)` for a minimum `m` of `f_j` on a min slab, or the
    /// formal point when `j` is `0` or `k+1`.
    pub fn vertex_at(&self, slab: usize, f_min: usize) -> Option<usize> {
        self.points.iter().find(|p| p.slab == slab && p.f_cp == f_min && p.index == 0).map(|p| p.id)
    }

    pub fn step_labeled(&self, label: &str) -> Option<usize> {
        self.steps.iter().find(|s| s.label == label).map(|s| s.step)
    }

    pub fn infinity_side(&self, step: usize) -> Option<Side> {
        match self.steps.get(step)?.kind {
            StepKind::Infinity { side, .. } => Some(side),
            _ => None,
        }
    }

    fn vertex_side(&self, v: usize) -> Option<Side> {
        self.point(v).and_then(|p| p.side)
    }

    pub fn with_base(&self, base: RelEndpoint) -> Result<RelComplex, RelError> {
        let v = self.vertex(base).ok_or_else(|| RelError::BadBase(format!("{base:?} is not a vertex")))?;
        let mut out = self.clone();
        out.data.base = v;
        Ok(out)
    }

    pub fn base(&self) -> RelEndpoint {
        self.endpoint(self.data.base).expect("base is a vertex")
    }

    /// Where a path from the base ends; `None` if it ends at a minimum of
    /// `F` other than the base.
    pub fn terminus(&self, w: &[Letter]) -> Option<Terminus> {
        let end = w.last().map_or(self.data.base, |l| self.data.ends(*l).1);
        match self.vertex_side(end) {
            Some(side) => Some(side.into()),
            None => (end == self.data.base).then_some(Terminus::Base),
        }
    }

    pub fn show(&self, w: &[Letter]) -> String {
        if w.is_empty() {
            return "1".into();
        }
        w.iter()
            .map(|l| if l.sign > 0 { self.steps[l.step].label.clone() } else { format!("{}⁻¹", self.steps[l.step].label) })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn check_path(&self, w: &[Letter]) -> Result<(), RelError> {
        self.data.check_consecutive(w, false).map_err(|e| match e {
            ComplexError::NotConsecutive { position } => RelError::NotConsecutive { position },
            e => e.into(),
        })?;
        if let Some(l) = w.first() {
            if self.data.ends(*l).0 != self.data.base {
                return Err(RelError::BadPath("does not start at the base point".into()));
            }
        }
        Ok(())
    }
}

/// One application of a rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RelMove {
    /// Rule (1): the pair at `pos`, `pos + 1` cancels.
    Cancel { pos: usize },
    /// Rule (3): the trailing infinity step is dropped.
    DropTrailing { letter: Letter },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelWord {
    pub word: Word,
    pub trace: Vec<RelMove>,
}

/// Rule (1) to a fixpoint, then rule (3) while the word ends in an infinity
/// step. Rule (2) is not length-reducing and is left to the equivalence
/// search.
pub fn rel_normalize(w: &[Letter], complex: &RelComplex) -> Result<RelWord, RelError> {
    complex.data.check_consecutive(w, false).map_err(|e| match e {
        ComplexError::NotConsecutive { position } => RelError::NotConsecutive { position },
        e => e.into(),
    })?;
    let mut word: Word = w.to_vec();
    let mut trace = Vec::new();
    while let Some(pos) = (1..word.len()).find(|&i| word[i] == word[i - 1].inv()) {
        word.drain(pos - 1..=pos);
        trace.push(RelMove::Cancel { pos: pos - 1 });
    }
    while let Some(&l) = word.last() {
        if complex.infinity_side(l.step).is_none() {
            break;
        }
        word.pop();
        trace.push(RelMove::DropTrailing { letter: l });
    }
    Ok(RelWord { word, trace })
}

/// Why two paths are inequivalent: their termini differ, or their images in
/// the abelianized quotient (infinity steps of the terminal side killed)
/// differ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelCertificate {
    pub termini: [Terminus; 2],
    pub images: [Vec<i64>; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RelVerdict {
    /// `n₁ · tail ~ n₂` by the relator moves in `trace` (applied to the loop
    /// `n₁ · tail · n₂⁻¹` in generators), where `nᵢ` are the normalized
    /// words; rule (3) then removes `tail`.
    Equivalent { normal: [Word; 2], tail: Word, trace: Vec<Rewrite> },
    Distinct { certificate: RelCertificate },
    Unknown { explored: usize },
}

impl RelVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, RelVerdict::Equivalent { .. })
    }
}

/// Presentation at the base and the abelianized quotients used as keys.
struct Keys {
    p: Presentation,
    nsteps: usize,
    loops: Abelianization,
    sides: [Abelianization; 2],
}

impl Keys {
    fn new(rc: &RelComplex) -> Result<Keys, RelError> {
        let p = presentation(&rc.data)?;
        let nsteps = rc.data.steps.len();
        let rows = |extra: Option<Side>| -> Vec<Vec<i64>> {
            let mut rows: Vec<Vec<i64>> = p.relators.iter().map(|r| Self::coords(&p, nsteps, r)).collect();
            if let Some(side) = extra {
                for s in rc.steps.iter().filter(|s| matches!(s.kind, StepKind::Infinity { side: t, .. } if t == side)) {
                    rows.push(Self::coords(&p, nsteps, &[Letter::pos(s.step)]));
                }
            }
            rows
        };
        let n = p.generators.len();
        Ok(Keys {
            loops: Abelianization::of(rows(None), n),
            sides: [Abelianization::of(rows(Some(Side::NegInf)), n), Abelianization::of(rows(Some(Side::PosInf)), n)],
            p,
            nsteps,
        })
    }

    fn coords(p: &Presentation, nsteps: usize, w: &[Letter]) -> Vec<i64> {
        let sums = exponent_sums(&p.rewrite(w), nsteps);
        p.generators.iter().map(|&g| sums[g]).collect()
    }

    /// The path closed up by the tree path back from its end.
    fn closed(&self, rc: &RelComplex, w: &[Letter]) -> Word {
        let end = w.last().map_or(rc.data.base, |l| rc.data.ends(*l).1);
        let mut out = w.to_vec();
        out.extend(inverse(&self.p.tree_paths[&end]));
        out
    }

    fn strict(&self, rc: &RelComplex, w: &[Letter]) -> Vec<i64> {
        self.loops.image(&Self::coords(&self.p, self.nsteps, &self.closed(rc, w)))
    }

    fn of(&self, rc: &RelComplex, w: &[Letter], t: Terminus) -> Vec<i64> {
        let ab = match t {
            Terminus::Base => &self.loops,
            Terminus::NegInf => &self.sides[0],
            Terminus::PosInf => &self.sides[1],
        };
        ab.image(&Self::coords(&self.p, self.nsteps, &self.closed(rc, w)))
    }
}

/// Reduced infinity words on `side` from `from` to `to`, shortest first.
fn tails(rc: &RelComplex, side: Side, from: usize, to: usize, max_len: usize) -> Vec<Word> {
    let letters: Vec<Letter> = rc
        .steps
        .iter()
        .filter(|s| matches!(s.kind, StepKind::Infinity { side: t, .. } if t == side))
        .flat_map(|s| [Letter::pos(s.step), Letter::neg(s.step)])
        .collect();
    let mut out = Vec::new();
    let mut level: Vec<(Word, usize)> = vec![(Vec::new(), from)];
    for _ in 0..=max_len {
        let mut next = Vec::new();
        for (w, at) in level {
            if at == to {
                out.push(w.clone());
            }
            for &l in &letters {
                let (a, b) = rc.data.ends(l);
                if a == at && w.last() != Some(&l.inv()) {
                    let mut x = w.clone();
                    x.push(l);
                    next.push((x, b));
                }
            }
        }
        level = next;
    }
    out
}

/// Bounded equivalence search. Loops at a non-formal base are compared with
/// `pi1::is_trivial`; paths to a side are compared modulo infinity tails of
/// length at most 4.
pub fn rel_equivalent(w1: &[Letter], w2: &[Letter], complex: &RelComplex, budget: Budget) -> Result<RelVerdict, RelError> {
    let keys = Keys::new(complex)?;
    rel_equivalent_with(&keys, w1, w2, complex, budget)
}

fn rel_equivalent_with(keys: &Keys, w1: &[Letter], w2: &[Letter], rc: &RelComplex, budget: Budget) -> Result<RelVerdict, RelError> {
    rc.check_path(w1)?;
    rc.check_path(w2)?;
    let n1 = rel_normalize(w1, rc)?.word;
    let n2 = rel_normalize(w2, rc)?.word;
    let term = |w: &[Letter]| rc.terminus(w).ok_or_else(|| RelError::BadPath(format!("{} ends at a minimum other than the base", rc.show(w))));
    let (t1, t2) = (term(&n1)?, term(&n2)?);
    let (k1, k2) = (keys.of(rc, &n1, t1), keys.of(rc, &n2, t2));
    if t1 != t2 || k1 != k2 {
        return Ok(RelVerdict::Distinct { certificate: RelCertificate { termini: [t1, t2], images: [k1, k2] } });
    }
    let end = |w: &[Letter]| w.last().map_or(rc.data.base, |l| rc.data.ends(*l).1);
    let candidates = match t1 {
        Terminus::Base => vec![Vec::new()],
        Terminus::NegInf => tails(rc, Side::NegInf, end(&n1), end(&n2), MAX_TAIL),
        Terminus::PosInf => tails(rc, Side::PosInf, end(&n1), end(&n2), MAX_TAIL),
    };
    let per = Budget { max_len: budget.max_len, max_states: (budget.max_states / candidates.len().max(1)).max(1000) };
    let mut explored = 0;
    for tail in candidates {
        let mut l = n1.clone();
        l.extend_from_slice(&tail);
        l.extend(inverse(&n2));
        let g = keys.p.rewrite(&l);
        match is_trivial(&g, &keys.p, per) {
            TrivialityVerdict::Trivial { trace } => return Ok(RelVerdict::Equivalent { normal: [n1, n2], tail, trace }),
            TrivialityVerdict::Unknown { explored: e } => explored += e,
            TrivialityVerdict::Nontrivial { .. } => {}
        }
        if explored >= budget.max_states {
            break;
        }
    }
    Ok(RelVerdict::Unknown { explored })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelClass {
    pub representative: Word,
    pub label: String,
    pub terminus: Terminus,
    /// Image in the abelianized quotient for this terminus.
    pub certificate: Vec<i64>,
    pub normal: RelWord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelClasses {
    pub schema: String,
    pub base: RelEndpoint,
    pub max_len: usize,
    /// Whether the fundamental group at the base was shown abelian, which
    /// makes the abelianized keys complete.
    pub abelian: bool,
    pub classes: Vec<RelClass>,
}

impl RelClasses {
    pub fn count(&self, t: Terminus) -> usize {
        self.classes.iter().filter(|c| c.terminus == t).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classes serialize")
    }
}

/// Commutators of all generator pairs are trivial.
fn is_abelian(p: &Presentation, budget: Budget) -> bool {
    let g = &p.generators;
    (0..g.len()).all(|i| {
        (i + 1..g.len()).all(|j| {
            let (a, b) = (Letter::pos(g[i]), Letter::pos(g[j]));
            is_trivial(&[a, b, a.inv(), b.inv()], p, budget).is_trivial()
        })
    })
}

/// Classes of paths of length at most `max_len`, `[1]` first.
///
/// Strict classes (rules (1)(2), endpoints fixed) are grown level by level:
/// every path of length `L + 1` is a class representative of length `≤ L`
/// followed by one step. Classes ending at formal points are then merged by
/// rule (3). When the group at the base is abelian the abelianized keys
/// decide both stages; otherwise same-key candidates are compared by search
/// and an undecided comparison is `BudgetExceeded`.
pub fn rel_classes(complex: &RelComplex, base: RelEndpoint, max_len: usize, budget: Budget) -> Result<RelClasses, RelError> {
    if max_len > MAX_LEN {
        return Err(RelError::MaxLenTooLarge(max_len));
    }
    let rc = complex.with_base(base)?;
    let keys = Keys::new(&rc)?;
    let abelian = is_abelian(&keys.p, budget);
    let letters: Vec<Letter> = (0..rc.data.steps.len()).flat_map(|s| [Letter::pos(s), Letter::neg(s)]).collect();
    let end = |w: &[Letter]| w.last().map_or(rc.data.base, |l| rc.data.ends(*l).1);

    let mut reps: Vec<Word> = vec![Vec::new()];
    let mut buckets: HashMap<(usize, Vec<i64>), Vec<usize>> = HashMap::new();
    buckets.insert((rc.data.base, keys.strict(&rc, &[])), vec![0]);
    let mut frontier = vec![0usize];
    let mut explored = 0;
    for _ in 1..=max_len {
        let mut next = Vec::new();
        for &idx in &frontier {
            let rep = reps[idx].clone();
            let at = end(&rep);
            for &l in &letters {
                if rc.data.ends(l).0 != at || rep.last() == Some(&l.inv()) {
                    continue;
                }
                let mut cand = rep.clone();
                cand.push(l);
                let key = (end(&cand), keys.strict(&rc, &cand));
                let known = match buckets.get(&key) {
                    None => false,
                    Some(_) if abelian => true,
                    Some(members) => {
                        let mut found = false;
                        for &m in members {
                            let mut lp = cand.clone();
                            lp.extend(inverse(&reps[m]));
                            match is_trivial(&keys.p.rewrite(&lp), &keys.p, budget) {
                                TrivialityVerdict::Trivial { .. } => {
                                    found = true;
                                    break;
                                }
                                TrivialityVerdict::Unknown { explored: e } => {
                                    explored += e;
                                    return Err(RelError::BudgetExceeded { explored });
                                }
                                TrivialityVerdict::Nontrivial { .. } => {}
                            }
                        }
                        found
                    }
                };
                if !known {
                    buckets.entry(key).or_default().push(reps.len());
                    next.push(reps.len());
                    reps.push(cand);
                }
            }
        }
        frontier = next;
    }

    let mut classes: Vec<RelClass> = Vec::new();
    let mut seen: HashMap<(Terminus, Vec<i64>), Vec<usize>> = HashMap::new();
    for rep in reps {
        let Some(t) = rc.terminus(&rep) else { continue };
        let key = keys.of(&rc, &rep, t);
        let merged = match seen.get(&(t, key.clone())) {
            None => false,
            Some(_) if abelian => true,
            Some(members) => {
                let mut found = false;
                for &m in members {
                    match rel_equivalent_with(&keys, &rep, &classes[m].representative, &rc, budget)? {
                        RelVerdict::Equivalent { .. } => {
                            found = true;
                            break;
                        }
                        RelVerdict::Unknown { explored: e } => return Err(RelError::BudgetExceeded { explored: explored + e }),
                        RelVerdict::Distinct { .. } => {}
                    }
                }
                found
            }
        };
        if !merged {
            seen.entry((t, key.clone())).or_default().push(classes.len());
            classes.push(RelClass { label: rc.show(&rep), normal: rel_normalize(&rep, &rc)?, representative: rep, terminus: t, certificate: key });
        }
    }
    Ok(RelClasses { schema: SCHEMA.into(), base, max_len, abelian, classes })
}

/// Where to put the base point when comparing profiles: a formal point on a
/// side, or a minimum on the `j`-th min slab. The first such vertex is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSide {
    Formal { side: Side },
    Slab { slab: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceVerdict {
    pub invariant: bool,
    /// Class counts per terminus, one map per profile.
    pub counts: Vec<BTreeMap<Terminus, usize>>,
}

pub fn base_for(rc: &RelComplex, side: BaseSide) -> Result<RelEndpoint, RelError> {
    let p = rc.points.iter().find(|p| {
        p.index == 0
            && match side {
                BaseSide::Formal { side } => p.side == Some(side),
                BaseSide::Slab { slab } => p.side.is_none() && p.slab == slab,
            }
    });
    p.and_then(|p| rc.endpoint(p.id)).ok_or_else(|| RelError::BadBase(format!("no vertex for {side:?}")))
}

/// Compares class counts per terminus across complexes built from profiles
/// with the same shape of `h`. The distinguished point is always first, so
/// equal counts give a bijection preserving it.
pub fn cor_invariance_check(complexes: &[RelComplex], side: BaseSide, max_len: usize, budget: Budget) -> Result<InvarianceVerdict, RelError> {
    if complexes.len() < 2 {
        return Err(RelError::Precondition("at least two profiles are needed".into()));
    }
    let natures = complexes[0].shape.natures();
    if complexes.iter().any(|c| c.shape.natures() != natures || c.shape.limits != complexes[0].shape.limits) {
        return Err(RelError::Precondition("profiles have different natures of h".into()));
    }
    let mut counts = Vec::new();
    for rc in complexes {
        let base = base_for(rc, side)?;
        let cl = rel_classes(rc, base, max_len, budget).map_err(|e| match e {
            RelError::BudgetExceeded { .. } => RelError::InconclusiveBudget,
            e => e,
        })?;
        let mut m = BTreeMap::new();
        for c in &cl.classes {
            *m.entry(c.terminus).or_insert(0) += 1;
        }
        counts.push(m);
    }
    Ok(InvarianceVerdict { invariant: counts.windows(2).all(|w| w[0] == w[1]), counts })
}
