//! Critical points, anti-gradient trajectories with event detection, and
//! bisection of separatrix crossings in one-parameter families.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartPoint, GeometryError, Manifold, ScalarField, SS, ST};
use crate::linalg::{dot, norm, sym_eigen};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FlowError {
    #[error("degenerate critical point at {coords:?} (eigenvalue {eigenvalue:e})")]
    DegenerateCritical { coords: Vec<f64>, eigenvalue: f64 },
    #[error("trajectory did not settle before t = {t_max}")]
    TimedOut { t_max: f64 },
    #[error("no mediating critical point between parameters {lo} and {hi}")]
    NoLinger { lo: f64, hi: f64 },
    #[error("critical point search needs at least 8 seeds per axis")]
    TooFewSeeds,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub id: usize,
    pub coords: Vec<f64>,
    pub index: usize,
    pub value: f64,
}

impl CriticalPoint {
    pub fn point(&self, m: &Manifold) -> ChartPoint {
        m.from_coords(&self.coords)
    }
}

fn quantize(x: f64) -> i64 {
    (x * 1e9).round() as i64
}

/// Newton from an `n×n` seed grid, deduplicated within `1e−6`, with ids in
/// `(value, coordinates)` order.
pub fn find_critical_points(field: &ScalarField, seeds_per_axis: usize) -> Result<Vec<CriticalPoint>, FlowError> {
    if seeds_per_axis < 8 {
        return Err(FlowError::TooFewSeeds);
    }
    find_critical_points_from(field, &field.manifold().base_grid(seeds_per_axis))
}

/// Same as [`find_critical_points`] from explicit seeds.
pub fn find_critical_points_from(field: &ScalarField, seeds: &[ChartPoint]) -> Result<Vec<CriticalPoint>, FlowError> {
    use rayon::prelude::*;
    let m = field.manifold();
    let found: Vec<Option<ChartPoint>> = seeds
        .par_iter()
        .map(|s| {
            let p = field.newton(s, 1e-11, 80)?;
            let mut q = p;
            for _ in 0..3 {
                match field.newton_step(&q) {
                    Some((r, _)) if norm(&field.grad(&r)) <= norm(&field.grad(&q)) => q = r,
                    _ => break,
                }
            }
            Some(m.normalize(&q))
        })
        .collect();
    let mut uniq: Vec<ChartPoint> = Vec::new();
    for p in found.into_iter().flatten() {
        if !uniq.iter().any(|q| m.distance(&p, q) < 1e-6) {
            uniq.push(p);
        }
    }
    let mut out = Vec::with_capacity(uniq.len());
    for p in uniq {
        let h = field.hessian(&p)?;
        let (vals, _) = sym_eigen(&h);
        if let Some(&ev) = vals.iter().find(|v| v.abs() < 1e-6) {
            return Err(FlowError::DegenerateCritical { coords: m.to_coords(&p), eigenvalue: ev });
        }
        out.push(CriticalPoint {
            id: 0,
            coords: m.to_coords(&p),
            index: vals.iter().filter(|v| **v < 0.0).count(),
            value: field.value(&p),
        });
    }
    out.sort_by(|a, b| {
        quantize(a.value).cmp(&quantize(b.value)).then_with(|| {
            let ka: Vec<i64> = a.coords.iter().map(|x| quantize(*x)).collect();
            let kb: Vec<i64> = b.coords.iter().map(|x| quantize(*x)).collect();
            ka.cmp(&kb)
        })
    });
    for (i, cp) in out.iter_mut().enumerate() {
        cp.id = i;
    }
    Ok(out)
}

/// Unit eigenvectors of the negative Hessian eigenvalues, most negative
/// first, each with its first nonzero component positive.
pub fn unstable_frame(field: &ScalarField, p: &ChartPoint) -> Result<Vec<ChartPoint>, FlowError> {
    let (frame, g, h) = field.frame_jet(p);
    if norm(&g) > 1e-6 {
        return Err(GeometryError::NotNearCritical { grad: norm(&g) }.into());
    }
    let (vals, vecs) = sym_eigen(&h);
    let mut out = Vec::new();
    for (v, e) in vals.iter().zip(vecs) {
        if *v >= 0.0 {
            continue;
        }
        let mut amb = [0.0; 5];
        for (k, fv) in frame.iter().enumerate() {
            for i in 0..5 {
                amb[i] += e[k] * fv[i];
            }
        }
        if let Some(first) = amb.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                for x in amb.iter_mut() {
                    *x = -*x;
                }
            }
        }
        out.push(amb);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NegInf,
    PosInf,
}

/// Where a trajectory ended, coarse enough to compare across a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// Converged to an index-0 point; `lift` is the deck translation of the
    /// landing image relative to the stored coordinates.
    Min { cp: usize, lift: [i64; 2] },
    Escaped(Direction),
    Lingered { cp: usize },
    Slab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    ConvergedTo { cp: usize, lift: [i64; 2] },
    CrossedSlab { s: f64, exit: Vec<f64> },
    Escaped(Direction),
    Lingered { cp: usize },
}

/// Closest approach to an index-1 point, with the unstable branch taken
/// afterwards (`+1` along the frame vector, `−1` against it).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pass {
    pub cp: usize,
    pub dist: f64,
    pub exit: Option<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub kind: OutcomeKind,
    pub path: Vec<Vec<f64>>,
    pub time: f64,
    /// Final point in unwrapped chart coordinates.
    pub end: Vec<f64>,
    pub max_energy_increase: f64,
    pub passes: Vec<Pass>,
    /// Points at which the linger policy pushed the trajectory off a saddle.
    pub perturbed: Vec<usize>,
}

impl TrajectoryOutcome {
    pub fn label(&self) -> Label {
        match &self.kind {
            OutcomeKind::ConvergedTo { cp, lift } => Label::Min { cp: *cp, lift: *lift },
            OutcomeKind::CrossedSlab { .. } => Label::Slab,
            OutcomeKind::Escaped(d) => Label::Escaped(*d),
            OutcomeKind::Lingered { cp } => Label::Lingered { cp: *cp },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOptions {
    pub eps_cp: f64,
    pub grad_tol: f64,
    pub t_linger: f64,
    pub s_max: f64,
    pub t_max: f64,
    /// Local error bound per accepted step, relative to the coordinate scale.
    pub step_tol: f64,
    pub h_max: f64,
    pub slab: Option<f64>,
    pub record_path: bool,
    /// Push distance along the unstable direction after lingering.
    pub perturb_on_linger: Option<f64>,
    /// On product manifolds: measure saddle passes in the closed factor only,
    /// and only once every parameter coordinate is at least this level.
    pub pass_level: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            eps_cp: 1e-5,
            grad_tol: 1e-7,
            t_linger: 25.0,
            s_max: 5.0,
            t_max: 2000.0,
            step_tol: 1e-9,
            h_max: 0.05,
            slab: None,
            record_path: false,
            perturb_on_linger: None,
            pass_level: None,
        }
    }
}

/// Seeding radius along eigenvectors.
pub const R0: f64 = 1e-4;

/// A field together with its critical points and their unstable frames.
#[derive(Clone, Debug)]
pub struct Landscape {
    pub field: Arc<ScalarField>,
    pub cps: Vec<CriticalPoint>,
    pts: Vec<ChartPoint>,
    frames: Vec<Vec<ChartPoint>>,
}

impl Landscape {
    pub fn new(field: Arc<ScalarField>, cps: Vec<CriticalPoint>) -> Result<Landscape, FlowError> {
        let m = field.manifold().clone();
        let pts: Vec<ChartPoint> = cps.iter().map(|c| c.point(&m)).collect();
        let frames = pts
            .iter()
            .zip(&cps)
            .map(|(p, c)| if c.index == 0 { Ok(Vec::new()) } else { unstable_frame(&field, p) })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Landscape { field, cps, pts, frames })
    }

    pub fn analyze(field: ScalarField, seeds_per_axis: usize) -> Result<Landscape, FlowError> {
        let cps = find_critical_points(&field, seeds_per_axis)?;
        Landscape::new(Arc::new(field), cps)
    }

    pub fn manifold(&self) -> &Manifold {
        self.field.manifold()
    }

    pub fn point(&self, id: usize) -> ChartPoint {
        self.pts[id]
    }

    pub fn frame(&self, id: usize) -> &[ChartPoint] {
        &self.frames[id]
    }

    /// `cp ± r·u₀` for an index-1 point.
    pub fn seed(&self, id: usize, sign: f64, r: f64) -> ChartPoint {
        let u = self.frames[id][0];
        let mut v = [0.0; 5];
        for i in 0..5 {
            v[i] = sign * r * u[i];
        }
        self.manifold().retract(&self.pts[id], &v)
    }
}

fn rk4(field: &ScalarField, m: &Manifold, p: &ChartPoint, h: f64, k1: &ChartPoint) -> ChartPoint {
    let add = |a: &ChartPoint, b: &ChartPoint, c: f64| {
        let mut r = *a;
        for i in 0..5 {
            r[i] -= c * b[i];
        }
        r
    };
    let k2 = field.grad(&add(p, k1, h / 2.0));
    let k3 = field.grad(&add(p, &k2, h / 2.0));
    let k4 = field.grad(&add(p, &k3, h));
    let mut out = *p;
    for i in 0..5 {
        out[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    m.reproject(&mut out);
    out
}

/// One classical RK4 step of size `h` along `−∇F`.
pub fn rk4_step(field: &ScalarField, p: &ChartPoint, h: f64) -> ChartPoint {
    rk4(field, field.manifold(), p, h, &field.grad(p))
}

struct PassTrack {
    dist: f64,
    exit: Option<i8>,
}

/// Integrates `γ′ = −∇F` from `p0` until the first event.
pub fn integrate(land: &Landscape, p0: &ChartPoint, opts: &FlowOptions) -> Result<TrajectoryOutcome, FlowError> {
    let field = &*land.field;
    let m = field.manifold().clone();
    let scale_of = |p: &ChartPoint| 1.0 + p.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut p = *p0;
    m.reproject(&mut p);
    let mut t = 0.0;
    let mut h: f64 = 1e-3;
    let mut value = field.value(&p);
    let mut max_inc: f64 = 0.0;
    let mut path = Vec::new();
    let mut linger_time = 0.0;
    let mut linger_cp: Option<usize> = None;
    let mut perturbed = Vec::new();
    let mut tracks: Vec<Option<PassTrack>> = land
        .cps
        .iter()
        .map(|c| (c.index == 1).then_some(PassTrack { dist: f64::INFINITY, exit: None }))
        .collect();
    if opts.record_path {
        path.push(m.to_coords(&p));
    }
    let mut g = field.grad(&p);
    loop {
        // events at the current state
        let gn = norm(&g);
        let mut near: Option<usize> = None;
        let track = match opts.pass_level {
            Some(level) => p[SS] >= level && (!m.has_t() || p[ST] >= level),
            None => true,
        };
        for (i, cp) in land.cps.iter().enumerate() {
            let d = m.displacement(&land.pts[i], &p);
            let dist = norm(&d);
            if let (Some(tr), true) = (tracks[i].as_mut(), track) {
                let mut db = d;
                if opts.pass_level.is_some() {
                    db[SS] = 0.0;
                    db[ST] = 0.0;
                }
                let bdist = norm(&db);
                if bdist < tr.dist {
                    tr.dist = bdist;
                    tr.exit = None;
                } else if tr.exit.is_none() && bdist >= (10.0 * tr.dist).min(0.01) && bdist > 0.0 {
                    let along = dot(&db, &land.frames[i][0]);
                    tr.exit = Some(if along >= 0.0 { 1 } else { -1 });
                }
            }
            if dist < opts.eps_cp && gn < opts.grad_tol {
                near = Some(i);
                if cp.index == 0 {
                    return Ok(finish(
                        land,
                        OutcomeKind::ConvergedTo { cp: cp.id, lift: m.lift_of(&land.pts[i], &p) },
                        path,
                        t,
                        &p,
                        max_inc,
                        tracks,
                        perturbed,
                    ));
                }
            }
        }
        match near {
            Some(i) if linger_cp == Some(i) => {}
            Some(i) => {
                linger_cp = Some(i);
                linger_time = 0.0;
            }
            None => {
                linger_cp = None;
                linger_time = 0.0;
            }
        }
        if let Some(i) = linger_cp {
            if linger_time > opts.t_linger {
                match opts.perturb_on_linger {
                    Some(r) if !land.frames[i].is_empty() && !perturbed.contains(&land.cps[i].id) => {
                        perturbed.push(land.cps[i].id);
                        let u = land.frames[i][0];
                        let mut v = [0.0; 5];
                        for k in 0..5 {
                            v[k] = r * u[k];
                        }
                        p = m.retract(&p, &v);
                        g = field.grad(&p);
                        value = field.value(&p);
                        linger_cp = None;
                        linger_time = 0.0;
                        continue;
                    }
                    _ => {
                        let cp = land.cps[i].id;
                        return Ok(finish(land, OutcomeKind::Lingered { cp }, path, t, &p, max_inc, tracks, perturbed));
                    }
                }
            }
        }
        if m.has_s() && p[SS].abs() > opts.s_max {
            let d = if p[SS] > 0.0 { Direction::PosInf } else { Direction::NegInf };
            return Ok(finish(land, OutcomeKind::Escaped(d), path, t, &p, max_inc, tracks, perturbed));
        }
        if t > opts.t_max {
            return Err(FlowError::TimedOut { t_max: opts.t_max });
        }
        // one adaptive step by step doubling
        let (next, used) = loop {
            let full = rk4(field, &m, &p, h, &g);
            let half = rk4(field, &m, &p, h / 2.0, &g);
            let gh = field.grad(&half);
            let two = rk4(field, &m, &half, h / 2.0, &gh);
            let err = (0..5).fold(0.0f64, |a, i| a.max((two[i] - full[i]).abs())) / 15.0;
            let tol = opts.step_tol * scale_of(&p);
            if err <= tol || h < 1e-12 {
                let mut q = two;
                for i in 0..5 {
                    q[i] += (two[i] - full[i]) / 15.0;
                }
                m.reproject(&mut q);
                let used = h;
                let factor = if err == 0.0 { 2.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0) };
                h = (h * factor).min(opts.h_max);
                break (q, used);
            }
            h *= (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.5);
        };
        if let Some(slab) = opts.slab {
            if m.has_s() && p[SS] < slab && next[SS] >= slab {
                let exit = locate_slab(field, &m, &p, &g, used, slab);
                let v = field.value(&exit);
                max_inc = max_inc.max(v - value);
                if opts.record_path {
                    path.push(m.to_coords(&exit));
                }
                return Ok(finish(
                    land,
                    OutcomeKind::CrossedSlab { s: slab, exit: m.to_coords(&exit) },
                    path,
                    t,
                    &exit,
                    max_inc,
                    tracks,
                    perturbed,
                ));
            }
        }
        let v = field.value(&next);
        max_inc = max_inc.max(v - value);
        value = v;
        p = next;
        t += used;
        if linger_cp.is_some() {
            linger_time += used;
        }
        g = field.grad(&p);
        if opts.record_path {
            path.push(m.to_coords(&p));
            if path.len() > 4000 {
                path = path.into_iter().step_by(2).collect();
            }
        }
    }
}

/// Secant search for the RK4 sub-step that lands on `s = slab`.
fn locate_slab(field: &ScalarField, m: &Manifold, p: &ChartPoint, g: &ChartPoint, h: f64, slab: f64) -> ChartPoint {
    let mut a = 0.0;
    let mut fa = p[SS] - slab;
    let mut b = h;
    let mut q = rk4(field, m, p, h, g);
    let mut fb = q[SS] - slab;
    for _ in 0..60 {
        if fb.abs() < 1e-14 || (b - a).abs() < 1e-16 {
            break;
        }
        let c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let c = c.clamp(0.0, h);
        let qc = rk4(field, m, p, c, g);
        let fc = qc[SS] - slab;
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        q = qc;
    }
    q[SS] = slab;
    q
}

#[allow(clippy::too_many_arguments)]
fn finish(
    land: &Landscape,
    kind: OutcomeKind,
    path: Vec<Vec<f64>>,
    time: f64,
    p: &ChartPoint,
    max_inc: f64,
    tracks: Vec<Option<PassTrack>>,
    perturbed: Vec<usize>,
) -> TrajectoryOutcome {
    let passes = tracks
        .into_iter()
        .enumerate()
        .filter_map(|(i, tr)| tr.map(|tr| Pass { cp: land.cps[i].id, dist: tr.dist, exit: tr.exit }))
        .collect();
    TrajectoryOutcome {
        kind,
        path,
        time,
        end: land.manifold().to_coords(p),
        max_energy_increase: max_inc.max(0.0),
        passes,
        perturbed,
    }
}

/// Result of one trajectory (possibly a composite of several integrations)
/// in a family sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub label: Label,
    pub passes: Vec<Pass>,
    pub max_energy_increase: f64,
}

impl From<&TrajectoryOutcome> for Probe {
    fn from(o: &TrajectoryOutcome) -> Probe {
        Probe { label: o.label(), passes: o.passes.clone(), max_energy_increase: o.max_energy_increase }
    }
}

/// A wall in a one-parameter family: the label changes from `from` to `to`
/// as the parameter increases through `param`, mediated by the index-1 point
/// `cp`; `sign` is `+1` when the family sweeps across the step from its
/// `−u` branch to its `+u` branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub param: f64,
    pub cp: usize,
    pub sign: i8,
    pub from: Label,
    pub to: Label,
}

pub const MAX_DEPTH: usize = 60;
pub const MEDIATOR_RADIUS: f64 = 1e-3;

fn mediator(lo: &Probe, hi: &Probe) -> Option<(usize, i8)> {
    let mut best: Option<(f64, usize, i8)> = None;
    for a in &lo.passes {
        let Some(b) = hi.passes.iter().find(|b| b.cp == a.cp) else { continue };
        let d = a.dist.max(b.dist);
        if d >= MEDIATOR_RADIUS {
            continue;
        }
        let (Some(ea), Some(eb)) = (a.exit, b.exit) else { continue };
        if ea == eb {
            continue;
        }
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, a.cp, eb));
        }
    }
    best.map(|(_, cp, s)| (cp, s))
}

/// Bisects one wall between `lo` and `hi` (different labels) down to
/// `|hi − lo| ≤ tol` and identifies the mediating index-1 point.
///
/// Walls are found recursively: when the midpoint carries a third label
/// both halves are searched, so an interval holding several walls returns all
/// of them in parameter order.
pub fn bisect_transition<F>(probe: &F, lo: f64, hi: f64, tol: f64) -> Result<Vec<Wall>, FlowError>
where
    F: Fn(f64) -> Result<Probe, FlowError> + Sync,
{
    let a = probe(lo)?;
    let b = probe(hi)?;
    let mut out = Vec::new();
    walls_between(probe, lo, hi, &a, &b, tol, 0, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn walls_between<F>(
    probe: &F,
    lo: f64,
    hi: f64,
    a: &Probe,
    b: &Probe,
    tol: f64,
    depth: usize,
    out: &mut Vec<Wall>,
) -> Result<(), FlowError>
where
    F: Fn(f64) -> Result<Probe, FlowError> + Sync,
{
    if a.label == b.label {
        return Ok(());
    }
    if hi - lo <= tol || depth >= MAX_DEPTH || lo + 0.5 * (hi - lo) == lo || lo + 0.5 * (hi - lo) == hi {
        let (cp, sign) = mediator(a, b).ok_or(FlowError::NoLinger { lo, hi })?;
        out.push(Wall { param: 0.5 * (lo + hi), cp, sign, from: a.label, to: b.label });
        return Ok(());
    }
    let mid = lo + 0.5 * (hi - lo);
    let c = probe(mid)?;
    if let Label::Lingered { cp } = c.label {
        if let Some(w) = nudge(probe, mid, lo, hi, a, b, cp)? {
            out.push(w);
            return Ok(());
        }
    }
    if c.label == a.label {
        walls_between(probe, mid, hi, &c, b, tol, depth + 1, out)
    } else if c.label == b.label {
        walls_between(probe, lo, mid, a, &c, tol, depth + 1, out)
    } else {
        walls_between(probe, lo, mid, a, &c, tol, depth + 1, out)?;
        walls_between(probe, mid, hi, &c, b, tol, depth + 1, out)
    }
}

/// The midpoint sits exactly on a stable manifold; step off it on both
/// sides to read the exit branches.
#[allow(clippy::too_many_arguments)]
fn nudge<F>(probe: &F, mid: f64, lo: f64, hi: f64, a: &Probe, b: &Probe, cp: usize) -> Result<Option<Wall>, FlowError>
where
    F: Fn(f64) -> Result<Probe, FlowError> + Sync,
{
    let mut delta = (mid.abs().max(1.0)) * 1e-13;
    while delta < 0.25 * (hi - lo) {
        let l = probe(mid - delta)?;
        let r = probe(mid + delta)?;
        if l.label == a.label && r.label == b.label {
            let el = l.passes.iter().find(|p| p.cp == cp).and_then(|p| p.exit);
            let er = r.passes.iter().find(|p| p.cp == cp).and_then(|p| p.exit);
            if let (Some(el), Some(er)) = (el, er) {
                if el != er {
                    return Ok(Some(Wall { param: mid, cp, sign: er, from: a.label, to: b.label }));
                }
            }
            return Ok(None);
        }
        if !matches!(l.label, Label::Lingered { .. }) && !matches!(r.label, Label::Lingered { .. }) {
            return Ok(None);
        }
        delta *= 10.0;
    }
    Ok(None)
}

/// Samples the family at `params`, then resolves every label change between
/// neighbouring samples. Probes run in parallel; results are merged in
/// parameter order.
pub fn sweep_family<F>(probe: &F, params: &[f64], tol: f64) -> Result<(Vec<Probe>, Vec<Wall>), FlowError>
where
    F: Fn(f64) -> Result<Probe, FlowError> + Sync,
{
    use rayon::prelude::*;
    let probes: Vec<Probe> = params.par_iter().map(|&x| probe(x)).collect::<Result<_, _>>()?;
    let pairs: Vec<usize> = (0..params.len().saturating_sub(1))
        .filter(|&i| probes[i].label != probes[i + 1].label)
        .collect();
    let walls: Vec<Vec<Wall>> = pairs
        .par_iter()
        .map(|&i| {
            let mut w = Vec::new();
            walls_between(probe, params[i], params[i + 1], &probes[i], &probes[i + 1], tol, 0, &mut w)?;
            Ok(w)
        })
        .collect::<Result<_, FlowError>>()?;
    Ok((probes, walls.into_iter().flatten().collect()))
}

/// A Smale-condition heuristic: an unstable trajectory of an index-1 point
/// that lingers at, or passes within `radius` of, another index-1 point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotSmaleWarning {
    pub saddle: usize,
    pub branch: i8,
    pub near: usize,
    pub dist: f64,
}

pub fn smale_check(land: &Landscape, opts: &FlowOptions, radius: f64) -> Result<Vec<NotSmaleWarning>, FlowError> {
    let mut out = Vec::new();
    for cp in land.cps.iter().filter(|c| c.index == 1) {
        for branch in [-1i8, 1] {
            let o = integrate(land, &land.seed(cp.id, branch as f64, R0), opts)?;
            if let OutcomeKind::Lingered { cp: other } = o.kind {
                out.push(NotSmaleWarning { saddle: cp.id, branch, near: other, dist: 0.0 });
                continue;
            }
            for p in &o.passes {
                if p.cp != cp.id && p.dist < radius {
                    out.push(NotSmaleWarning { saddle: cp.id, branch, near: p.cp, dist: p.dist });
                }
            }
        }
    }
    Ok(out)
}

pub fn compare_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> Landscape {
        let f = ScalarField::parse(Manifold::Torus, "cos(2*pi*x)+cos(2*pi*y)").unwrap();
        Landscape::analyze(f, 8).unwrap()
    }

    #[test]
    fn torus_critical_points() {
        let land = torus();
        let got: Vec<(Vec<f64>, usize)> = land.cps.iter().map(|c| (c.coords.clone(), c.index)).collect();
        assert_eq!(
            got,
            vec![
                (vec![0.5, 0.5], 0),
                (vec![0.0, 0.5], 1),
                (vec![0.5, 0.0], 1),
                (vec![0.0, 0.0], 2),
            ]
        );
    }

    #[test]
    fn sphere_critical_points() {
        let f = ScalarField::parse(Manifold::Sphere, "z").unwrap();
        let cps = find_critical_points(&f, 8).unwrap();
        assert_eq!(cps.len(), 2);
        assert_eq!((cps[0].index, cps[1].index), (0, 2));
        assert!((cps[0].coords[2] + 1.0).abs() < 1e-12 && (cps[1].coords[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn morse_bott_is_degenerate() {
        let f = ScalarField::parse(Manifold::Torus, "cos(2*pi*x)").unwrap();
        assert!(matches!(find_critical_points(&f, 8), Err(FlowError::DegenerateCritical { .. })));
    }

    #[test]
    fn trajectories_reach_the_minimum() {
        let land = torus();
        let o = integrate(&land, &[0.25, 0.5, 0.0, 0.0, 0.0], &FlowOptions::default()).unwrap();
        assert_eq!(o.kind, OutcomeKind::ConvergedTo { cp: 0, lift: [0, 0] });
        let o = integrate(&land, &[0.5, 0.5, 0.0, 0.0, 0.0], &FlowOptions::default()).unwrap();
        assert_eq!(o.kind, OutcomeKind::ConvergedTo { cp: 0, lift: [0, 0] });
        assert_eq!(o.time, 0.0);
    }

    #[test]
    fn stable_manifold_lingers_then_perturbs() {
        let land = torus();
        let p = [0.5 + 1e-9, 0.0, 0.0, 0.0, 0.0];
        let o = integrate(&land, &p, &FlowOptions::default()).unwrap();
        assert_eq!(o.kind, OutcomeKind::Lingered { cp: 2 });
        let opts = FlowOptions { perturb_on_linger: Some(R0), ..FlowOptions::default() };
        let o = integrate(&land, &p, &opts).unwrap();
        assert!(matches!(o.kind, OutcomeKind::ConvergedTo { cp: 0, .. }));
        assert_eq!(o.perturbed, vec![2]);
    }

    #[test]
    fn unstable_frames() {
        let land = torus();
        assert_eq!(land.frame(2), &[[0.0, 1.0, 0.0, 0.0, 0.0]]);
        assert_eq!(land.frame(3), &[[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]]);
        assert!(land.frame(0).is_empty());
    }

    #[test]
    fn energy_never_increases() {
        let land = torus();
        for k in 0..20 {
            let p = [0.05 * k as f64 + 0.013, 0.37 * k as f64 % 1.0 + 0.021, 0.0, 0.0, 0.0];
            let o = integrate(&land, &p, &FlowOptions::default()).unwrap();
            assert!(o.max_energy_increase <= 1e-9);
        }
    }

    #[test]
    fn bisection_finds_the_mediating_saddle() {
        let land = torus();
        // a horizontal segment crossing x = 0, the stable manifold of (0,½)
        let probe = |x: f64| {
            let o = integrate(&land, &[x, 0.3, 0.0, 0.0, 0.0], &FlowOptions::default())?;
            Ok(Probe::from(&o))
        };
        let walls = bisect_transition(&probe, -0.2, 0.2, 1e-10).unwrap();
        assert_eq!(walls.len(), 1);
        assert_eq!(walls[0].cp, 1);
        assert!(walls[0].param.abs() < 1e-9);
        assert_eq!(walls[0].sign, 1);
        // two walls, x = 0 and x = 1
        let walls = bisect_transition(&probe, -0.2, 1.3, 1e-10).unwrap();
        assert_eq!(walls.iter().map(|w| w.cp).collect::<Vec<_>>(), vec![1, 1]);
    }

    #[test]
    fn smale_holds_on_the_torus() {
        assert!(smale_check(&torus(), &FlowOptions::default(), 1e-4).unwrap().is_empty());
    }
}
