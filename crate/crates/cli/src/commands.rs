//! One function per subcommand. Each returns the files to write and whether
//! every verdict was decided.

use std::fmt::{Debug, Display};
use std::path::PathBuf;
use std::sync::Arc;

use morse_pi1::continuation::{
    continuation_map, det_trace, dimension_check, grafted_map, verify_theorem_quotient, DimensionReport, GraftSpec,
    QuotientReport, StepMap, SweepOptions,
};
use morse_pi1::expr::parse;
use morse_pi1::flow::Landscape;
use morse_pi1::functoriality::{sweep_lambda, verify_diagram, DiagramVerdict, FunctorialityError, LambdaOptions, LambdaSweep};
use morse_pi1::geometry::{
    build_interpolation, build_square, product_field, standard_profile, InterpolationSpec, Manifold, ScalarField, SquareSpec,
};
use morse_pi1::mscomplex::{ExtractOptions, MorseComplexData, Provenance};
use morse_pi1::pi1::{presentation, Abelianization, Budget, Presentation, TrivialityVerdict};
use morse_pi1::relpi1::{base_for, build_relative_complex, rel_classes, InterpolationProfile, RelClasses, RelComplex, RelError};
use morse_pi1::word::{show, Word};
use serde::{Deserialize, Serialize};

use crate::plot;
use crate::scenario::{envelope, FieldSpec, Meta, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Verified,
    Inconclusive,
    NotSmale,
}

pub struct Output {
    pub files: Vec<(String, String)>,
    pub status: Status,
}

#[derive(Debug, Serialize)]
pub struct CmdError {
    pub kind: String,
    pub chain: Vec<String>,
    pub message: String,
}

impl CmdError {
    pub fn usage(message: impl Into<String>) -> CmdError {
        CmdError { kind: "Usage".into(), chain: Vec::new(), message: message.into() }
    }

    /// The innermost variant name of a nested error enum, read from its
    /// `Debug` form, e.g. `Flow(DegenerateCritical { .. })` gives
    /// `DegenerateCritical` with chain `[Flow]`.
    pub fn of<E: Debug + Display>(e: E) -> CmdError {
        let dbg = format!("{e:?}");
        let mut s = dbg.as_str();
        let mut chain = Vec::new();
        loop {
            let ident: String = s.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            let rest = &s[ident.len()..];
            let inner = rest.strip_prefix('(').filter(|r| r.starts_with(|c: char| c.is_ascii_uppercase()));
            match inner {
                Some(r) => {
                    chain.push(ident);
                    s = r;
                }
                None => return CmdError { kind: ident, chain, message: e.to_string() },
            }
        }
    }
}

pub type CmdResult = Result<Output, CmdError>;

pub struct Ctx {
    pub scenario: Scenario,
    pub meta: Meta,
    pub budget: Budget,
    pub plot: bool,
    pub strict_smale: bool,
    pub from_json: Option<PathBuf>,
}

impl Ctx {
    fn extract(&self) -> ExtractOptions {
        let o = &self.scenario.options;
        let d = ExtractOptions::default();
        ExtractOptions { samples: o.samples.unwrap_or(d.samples), wall_tol: o.wall_tol.unwrap_or(d.wall_tol), ..d }
    }

    fn sweep(&self) -> SweepOptions {
        let o = &self.scenario.options;
        let d = SweepOptions::default();
        SweepOptions { samples: o.samples.unwrap_or(d.samples), wall_tol: o.wall_tol.unwrap_or(d.wall_tol), ..d }
    }

    fn seeds(&self) -> usize {
        self.scenario.options.seeds_per_axis.unwrap_or(8)
    }

    fn complex(&self, m: &Manifold, f: &str) -> Result<(Landscape, MorseComplexData), CmdError> {
        let land = Landscape::analyze(ScalarField::parse(m.clone(), f).map_err(CmdError::of)?, self.seeds()).map_err(CmdError::of)?;
        let prov = Provenance::Numerical { scenario_hash: self.meta.hash.clone() };
        let d = MorseComplexData::extract(&land, &self.extract(), prov).map_err(CmdError::of)?;
        Ok((land, d))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self) -> Option<Result<T, CmdError>> {
        let path = self.from_json.as_ref()?;
        Some(
            std::fs::read_to_string(path)
                .map_err(|e| CmdError::usage(format!("reading {}: {e}", path.display())))
                .and_then(|s| serde_json::from_str(&s).map_err(|e| CmdError { kind: "Json".into(), chain: Vec::new(), message: e.to_string() })),
        )
    }

    fn write<T: Serialize>(&self, name: &str, payload: &T) -> (String, String) {
        (name.into(), envelope(payload, &self.meta))
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CmdError> {
        s.as_ref().ok_or_else(|| CmdError::usage(format!("scenario {:?} has no {name} section", self.scenario.name)))
    }
}

#[derive(Serialize)]
struct Pi1Report<'a> {
    schema: &'static str,
    presentation: &'a Presentation,
    abelianization: Abelianization,
    summary: String,
    warnings: usize,
}

fn group_name(ab: &Abelianization) -> String {
    let mut parts: Vec<String> = Vec::new();
    if ab.rank > 0 {
        parts.push(if ab.rank == 1 { "Z".into() } else { format!("Z^{}", ab.rank) });
    }
    parts.extend(ab.torsion.iter().map(|t| format!("Z/{t}")));
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}

pub fn analyze(ctx: &Ctx) -> CmdResult {
    let (land, d) = match ctx.read_json::<MorseComplexData>() {
        Some(d) => {
            let d = d?;
            d.validate().map_err(CmdError::of)?;
            (None, d)
        }
        None => {
            let FieldSpec { manifold, field } = ctx.section(&ctx.scenario.analyze, "analyze")?;
            let (l, d) = ctx.complex(manifold, field)?;
            (Some(l), d)
        }
    };
    let p = presentation(&d).map_err(CmdError::of)?;
    let ab = p.abelianization();
    let report = Pi1Report { schema: morse_pi1::pi1::SCHEMA, presentation: &p, summary: group_name(&ab), abelianization: ab, warnings: d.warnings.len() };
    let mut files = vec![ctx.write("complex.json", &d), ctx.write("pi1.json", &report)];
    if let (true, Some(l)) = (ctx.plot, &land) {
        files.push(("plot.svg".into(), plot::complex_svg(l, &d)));
    }
    let status = if ctx.strict_smale && !d.warnings.is_empty() { Status::NotSmale } else { Status::Verified };
    Ok(Output { files, status })
}

#[derive(Serialize, Default)]
struct Counts {
    trivial: usize,
    nontrivial: usize,
    unknown: usize,
}

impl Counts {
    fn of(q: &QuotientReport) -> Counts {
        let mut c = Counts::default();
        for d in &q.disks {
            match d.verdict {
                TrivialityVerdict::Trivial { .. } => c.trivial += 1,
                TrivialityVerdict::Nontrivial { .. } => c.nontrivial += 1,
                TrivialityVerdict::Unknown { .. } => c.unknown += 1,
            }
        }
        c
    }
}

#[derive(Serialize)]
struct MapReport<'a> {
    schema: &'static str,
    map: &'a StepMap,
    images: Vec<String>,
    abelianized: Vec<Vec<i64>>,
    det: i64,
    trace: i64,
    quotient: QuotientReport,
    verdicts: Counts,
    #[serde(skip_serializing_if = "Option::is_none")]
    dimension: Option<DimensionReport>,
}

fn map_report(sm: &StepMap, budget: Budget, dimension: Option<DimensionReport>) -> Result<(MapReport<'_>, Status), CmdError> {
    let quotient = verify_theorem_quotient(sm, budget).map_err(CmdError::of)?;
    let (m, _, _) = sm.abelianized().map_err(CmdError::of)?;
    let (det, trace) = det_trace(&m);
    let verdicts = Counts::of(&quotient);
    let anomalies = dimension.as_ref().map_or(0, |d| d.anomalies.len());
    let status = if verdicts.unknown > 0 || anomalies > 0 { Status::Inconclusive } else { Status::Verified };
    let images = sm.images.iter().map(|i| format!("{} -> {}", i.step, show(&i.word))).collect();
    Ok((
        MapReport { schema: morse_pi1::continuation::SCHEMA, map: sm, images, abelianized: m, det, trace, quotient, verdicts, dimension },
        status,
    ))
}

pub fn continuation(ctx: &Ctx) -> CmdResult {
    let (sm, sweeps) = match ctx.read_json::<StepMap>() {
        Some(sm) => (sm?, Vec::new()),
        None => {
            let c = ctx.section(&ctx.scenario.continuation, "continue")?;
            let (l1, d1) = ctx.complex(&c.manifold, &c.f1)?;
            let (_, d2) = ctx.complex(&c.manifold, &c.f2)?;
            let mut spec = InterpolationSpec::new(c.manifold.clone(), parse(&c.f1).map_err(CmdError::of)?, parse(&c.f2).map_err(CmdError::of)?);
            spec.eps = c.eps.unwrap_or(spec.eps);
            spec.c = c.c;
            let field = Arc::new(build_interpolation(&spec).map_err(CmdError::of)?);
            continuation_map(&l1, &d1, &d2, field, &ctx.sweep()).map_err(CmdError::of)?
        }
    };
    let (report, status) = map_report(&sm, ctx.budget, None)?;
    let mut files = vec![ctx.write("stepmap.json", &report)];
    if ctx.plot && !sweeps.is_empty() {
        files.push(("plot.svg".into(), plot::strip_svg(&sweeps)));
    }
    Ok(Output { files, status })
}

pub fn graft(ctx: &Ctx) -> CmdResult {
    let (sm, sweeps, dim) = match ctx.read_json::<StepMap>() {
        Some(sm) => (sm?, Vec::new(), None),
        None => {
            let g = ctx.section(&ctx.scenario.graft, "graft")?;
            let (ls, ds) = ctx.complex(&g.source.manifold, &g.source.field)?;
            let (_, dt) = ctx.complex(&g.target.manifold, &g.target.field)?;
            let h = standard_profile();
            let lower = Arc::new(product_field(&g.source.manifold, &parse(&g.source.field).map_err(CmdError::of)?, &h, 1.0).map_err(CmdError::of)?);
            let upper = Arc::new(product_field(&g.target.manifold, &parse(&g.target.field).map_err(CmdError::of)?, &h, 1.0).map_err(CmdError::of)?);
            let map: Vec<&str> = g.map.iter().map(String::as_str).collect();
            let mut spec = GraftSpec::new(&map, ctx.meta.seed);
            spec.jitter = g.jitter.unwrap_or(spec.jitter);
            let opts = ctx.sweep();
            let (sm, sweeps) = grafted_map(&ls, &ds, &dt, lower.clone(), upper.clone(), &spec, &opts).map_err(CmdError::of)?;
            let dim = dimension_check(&ls, &ds, &dt, lower, upper, &spec, &opts).map_err(CmdError::of)?;
            (sm, sweeps, Some(dim))
        }
    };
    let (report, status) = map_report(&sm, ctx.budget, dim)?;
    let mut files = vec![ctx.write("graft.json", &report)];
    if ctx.plot && !sweeps.is_empty() {
        files.push(("plot.svg".into(), plot::strip_svg(&sweeps)));
    }
    Ok(Output { files, status })
}

/// Combinatorial input of `square --from-json`.
#[derive(Deserialize)]
struct SquareInput {
    sweep: LambdaSweep,
    phi12: StepMap,
    phi23: StepMap,
    phi13: StepMap,
}

#[derive(Serialize)]
struct WallRow {
    lambda: f64,
    kind: String,
    steps: Vec<usize>,
    conjugator: String,
}

#[derive(Serialize)]
struct SquareReport<'a> {
    schema: &'static str,
    sweep: &'a LambdaSweep,
    walls: Vec<WallRow>,
    psi: String,
    verdict: Option<DiagramVerdict>,
    inconclusive: Option<String>,
}

pub fn square(ctx: &Ctx) -> CmdResult {
    let input = match ctx.read_json::<SquareInput>() {
        Some(i) => {
            let i = i?;
            i.sweep.check_invariants().map_err(CmdError::of)?;
            i
        }
        None => {
            let s = ctx.section(&ctx.scenario.square, "square")?;
            let (l1, d1) = ctx.complex(&s.manifold, &s.f1)?;
            let (l2, d2) = ctx.complex(&s.manifold, &s.f2)?;
            let (_, d3) = ctx.complex(&s.manifold, &s.f3)?;
            let e = |src: &str| parse(src).map_err(CmdError::of);
            let sq = Arc::new(build_square(&SquareSpec::new(s.manifold.clone(), e(&s.f1)?, e(&s.f2)?, e(&s.f3)?)).map_err(CmdError::of)?);
            let opts = LambdaOptions { grid: s.grid.unwrap_or(LambdaOptions::default().grid), sweep: ctx.sweep(), ..LambdaOptions::default() };
            let sweep = sweep_lambda(sq, &l1, &d1, &d3, &opts).map_err(CmdError::of)?;
            let interp = |a: &str, b: &str| -> Result<Arc<ScalarField>, CmdError> {
                let spec = InterpolationSpec::new(s.manifold.clone(), e(a)?, e(b)?);
                Ok(Arc::new(build_interpolation(&spec).map_err(CmdError::of)?))
            };
            let phi = |l: &Landscape, a: &MorseComplexData, b: &MorseComplexData, fa: &str, fb: &str| -> Result<StepMap, CmdError> {
                Ok(continuation_map(l, a, b, interp(fa, fb)?, &opts.sweep).map_err(CmdError::of)?.0)
            };
            SquareInput {
                phi12: phi(&l1, &d1, &d2, &s.f1, &s.f2)?,
                phi23: phi(&l2, &d2, &d3, &s.f2, &s.f3)?,
                phi13: phi(&l1, &d1, &d3, &s.f1, &s.f3)?,
                sweep,
            }
        }
    };
    let (verdict, inconclusive) = match verify_diagram(&input.sweep, &input.phi12, &input.phi23, &input.phi13, ctx.budget) {
        Ok(v) => (Some(v), None),
        Err(e @ FunctorialityError::InconclusiveBudget { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(CmdError::of(e)),
    };
    let walls = input
        .sweep
        .walls
        .iter()
        .map(|w| WallRow {
            lambda: w.lambda,
            kind: serde_json::to_value(w.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            steps: w.steps.clone(),
            conjugator: show(&w.conjugator),
        })
        .collect();
    let status = match &verdict {
        Some(DiagramVerdict::Commutes { .. }) => Status::Verified,
        Some(DiagramVerdict::Fails { .. }) => return Err(CmdError { kind: "DiagramFails".into(), chain: Vec::new(), message: format!("{verdict:?}") }),
        None => Status::Inconclusive,
    };
    let psi: Word = input.sweep.psi();
    let report = SquareReport { schema: morse_pi1::functoriality::SCHEMA, sweep: &input.sweep, walls, psi: show(&psi), verdict, inconclusive };
    let mut files = vec![ctx.write("sweep.json", &report)];
    if ctx.plot {
        files.push(("plot.svg".into(), input.sweep.strip_chart_svg()));
    }
    Ok(Output { files, status })
}

#[derive(Serialize)]
struct RelReport<'a> {
    schema: &'static str,
    complex: &'a RelComplex,
    classes: Option<RelClasses>,
    labels: Vec<String>,
    inconclusive: Option<String>,
}

pub fn relative(ctx: &Ctx) -> CmdResult {
    let r = ctx.section(&ctx.scenario.relative, "relative")?;
    let profile = match ctx.read_json::<InterpolationProfile>() {
        Some(p) => p?,
        None => r.profile.resolve(&ctx.extract(), &ctx.sweep()).map_err(CmdError::of)?,
    };
    let rc = build_relative_complex(&profile).map_err(CmdError::of)?;
    let base = base_for(&rc, r.base).map_err(CmdError::of)?;
    let (classes, inconclusive) = match rel_classes(&rc, base, r.max_len, ctx.budget) {
        Ok(c) => (Some(c), None),
        Err(e @ RelError::BudgetExceeded { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(CmdError::of(e)),
    };
    let status = if classes.is_some() { Status::Verified } else { Status::Inconclusive };
    let labels = classes.iter().flat_map(|c| c.classes.iter().map(|k| k.label.clone())).collect();
    let report = RelReport { schema: morse_pi1::relpi1::SCHEMA, complex: &rc, classes, labels, inconclusive };
    Ok(Output { files: vec![ctx.write("relpi1.json", &report)], status })
}
