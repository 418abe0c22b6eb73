//! The combinatorial Morse–Smale complex: steps through index-1 points and
//! boundary words of the unstable disks of index-2 points.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    integrate, smale_check, sweep_family, CriticalPoint, FlowError, FlowOptions, Landscape, NotSmaleWarning,
    OutcomeKind, Probe, R0,
};
use crate::geometry::Manifold;
use crate::word::{min_rotation, Letter, Word};

pub const SCHEMA: &str = "mscomplex/v1";

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ComplexError {
    #[error("unstable trajectory of critical point {cp} does not reach a minimum")]
    StepBroken { cp: usize },
    #[error("wall between θ = {lo} and θ = {hi} on the disk of {of} has no mediating saddle")]
    UnresolvedWall { of: usize, lo: f64, hi: f64 },
    #[error("word is not consecutive at position {position}")]
    NotConsecutive { position: usize },
    #[error("invalid complex: {0}")]
    Invalid(String),
    #[error("unsupported schema {0:?}")]
    Schema(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub id: usize,
    pub through: usize,
    pub start: usize,
    pub end: usize,
    /// Deck translations (torus only) of the landing minima relative to the
    /// stored coordinates of `through`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_lift: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_lift: Option<[i64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskBoundary {
    pub of: usize,
    pub word: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Numerical { scenario_hash: String },
    Handwritten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseComplexData {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<Manifold>,
    pub critical_points: Vec<CriticalPoint>,
    pub steps: Vec<Step>,
    pub disk_boundaries: Vec<DiskBoundary>,
    pub base: usize,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<NotSmaleWarning>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractOptions {
    pub samples: usize,
    pub wall_tol: f64,
    pub flow: FlowOptions,
    pub smale_radius: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { samples: 512, wall_tol: 1e-10, flow: FlowOptions::default(), smale_radius: 1e-4 }
    }
}

/// One step per index-1 point, ordered by that point's id. The start is the
/// endpoint of the `−u` separatrix, the end that of `+u`.
pub fn extract_steps(land: &Landscape, opts: &FlowOptions) -> Result<Vec<Step>, ComplexError> {
    use rayon::prelude::*;
    let torus = land.manifold().is_torus();
    let saddles: Vec<&CriticalPoint> = land.cps.iter().filter(|c| c.index == 1).collect();
    let ends: Vec<[(usize, [i64; 2]); 2]> = saddles
        .par_iter()
        .map(|cp| {
            let mut out = [(0, [0, 0]); 2];
            for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
                let o = integrate(land, &land.seed(cp.id, sign, R0), opts)?;
                match o.kind {
                    OutcomeKind::ConvergedTo { cp: m, lift } => out[k] = (m, lift),
                    _ => return Err(ComplexError::StepBroken { cp: cp.id }),
                }
            }
            Ok(out)
        })
        .collect::<Result<_, ComplexError>>()?;
    Ok(saddles
        .iter()
        .zip(ends)
        .enumerate()
        .map(|(id, (cp, [s, e]))| Step {
            id,
            through: cp.id,
            start: s.0,
            end: e.0,
            start_lift: torus.then_some(s.1),
            end_lift: torus.then_some(e.1),
        })
        .collect())
}

/// Sweeps the boundary circle of the unstable disk of `z` counterclockwise
/// in its `(u₁, u₂)` frame from `θ = 0`, one letter per wall.
pub fn extract_disk_boundary(
    land: &Landscape,
    z: usize,
    steps: &[Step],
    opts: &ExtractOptions,
) -> Result<DiskBoundary, ComplexError> {
    let frame = land.frame(z);
    if frame.len() != 2 {
        return Err(ComplexError::Invalid(format!("critical point {z} is not of index 2")));
    }
    let (u1, u2) = (frame[0], frame[1]);
    let zp = land.point(z);
    let m = land.manifold();
    let probe = |theta: f64| -> Result<Probe, FlowError> {
        let (s, c) = theta.sin_cos();
        let mut v = [0.0; 5];
        for i in 0..5 {
            v[i] = R0 * (c * u1[i] + s * u2[i]);
        }
        let o = integrate(land, &m.retract(&zp, &v), &opts.flow)?;
        Ok(Probe::from(&o))
    };
    let n = opts.samples;
    let params: Vec<f64> = (0..=n).map(|i| TAU * (i as f64 + 0.5) / n as f64).collect();
    let (_, walls) = sweep_family(&probe, &params, opts.wall_tol).map_err(|e| match e {
        FlowError::NoLinger { lo, hi } => ComplexError::UnresolvedWall { of: z, lo, hi },
        other => other.into(),
    })?;
    let mut letters: Vec<(f64, Letter)> = Vec::with_capacity(walls.len());
    for wall in walls {
        let step = steps
            .iter()
            .find(|s| s.through == wall.cp)
            .ok_or_else(|| ComplexError::Invalid(format!("wall mediated by {} which has no step", wall.cp)))?;
        letters.push((wall.param.rem_euclid(TAU), Letter { step: step.id, sign: wall.sign }));
    }
    letters.sort_by(|a, b| a.0.total_cmp(&b.0));
    let word: Word = letters.into_iter().map(|(_, l)| l).collect();
    Ok(DiskBoundary { of: z, word: min_rotation(&word) })
}

impl MorseComplexData {
    pub fn extract(land: &Landscape, opts: &ExtractOptions, provenance: Provenance) -> Result<Self, ComplexError> {
        let warnings = smale_check(land, &opts.flow, opts.smale_radius)?;
        let steps = extract_steps(land, &opts.flow)?;
        let disk_boundaries = land
            .cps
            .iter()
            .filter(|c| c.index == 2)
            .map(|c| extract_disk_boundary(land, c.id, &steps, opts))
            .collect::<Result<Vec<_>, _>>()?;
        let base = land
            .cps
            .iter()
            .find(|c| c.index == 0)
            .map(|c| c.id)
            .ok_or_else(|| ComplexError::Invalid("no minimum".into()))?;
        let data = MorseComplexData {
            schema: SCHEMA.into(),
            manifold: Some(land.manifold().clone()),
            critical_points: land.cps.clone(),
            steps,
            disk_boundaries,
            base,
            provenance,
            warnings,
        };
        data.validate()?;
        Ok(data)
    }

    /// A combinatorial complex given directly by its steps and disks.
    pub fn handwritten(
        critical_points: Vec<CriticalPoint>,
        steps: Vec<Step>,
        disk_boundaries: Vec<DiskBoundary>,
        base: usize,
    ) -> Result<Self, ComplexError> {
        let data = MorseComplexData {
            schema: SCHEMA.into(),
            manifold: None,
            critical_points,
            steps,
            disk_boundaries,
            base,
            provenance: Provenance::Handwritten,
            warnings: Vec::new(),
        };
        data.validate()?;
        Ok(data)
    }

    pub fn cp(&self, id: usize) -> Option<&CriticalPoint> {
        self.critical_points.iter().find(|c| c.id == id)
    }

    pub fn step(&self, id: usize) -> Option<&Step> {
        self.steps.get(id).filter(|s| s.id == id)
    }

    /// Source and target vertex of a signed step.
    pub fn ends(&self, l: Letter) -> (usize, usize) {
        let s = &self.steps[l.step];
        if l.sign > 0 {
            (s.start, s.end)
        } else {
            (s.end, s.start)
        }
    }

    /// Checks that consecutive letters share vertices; `closed` also checks
    /// the seam between the last and first letter.
    pub fn check_consecutive(&self, word: &[Letter], closed: bool) -> Result<(), ComplexError> {
        for (i, l) in word.iter().enumerate() {
            if l.step >= self.steps.len() || (l.sign != 1 && l.sign != -1) {
                return Err(ComplexError::NotConsecutive { position: i });
            }
        }
        for i in 1..word.len() {
            if self.ends(word[i - 1]).1 != self.ends(word[i]).0 {
                return Err(ComplexError::NotConsecutive { position: i });
            }
        }
        if closed && !word.is_empty() && self.ends(word[word.len() - 1]).1 != self.ends(word[0]).0 {
            return Err(ComplexError::NotConsecutive { position: 0 });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ComplexError> {
        if self.schema != SCHEMA {
            return Err(ComplexError::Schema(self.schema.clone()));
        }
        let index = |id: usize| self.cp(id).map(|c| c.index);
        if index(self.base) != Some(0) {
            return Err(ComplexError::Invalid(format!("base {} is not an index-0 point", self.base)));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.id != i {
                return Err(ComplexError::Invalid(format!("step ids must be 0..n, found {} at {}", s.id, i)));
            }
            if index(s.through) != Some(1) || index(s.start) != Some(0) || index(s.end) != Some(0) {
                return Err(ComplexError::Invalid(format!("step {} has wrong endpoint indices", s.id)));
            }
        }
        for c in &self.critical_points {
            let n = match c.index {
                1 => self.steps.iter().filter(|s| s.through == c.id).count(),
                2 => self.disk_boundaries.iter().filter(|d| d.of == c.id).count(),
                _ => 1,
            };
            if n != 1 {
                return Err(ComplexError::Invalid(format!("critical point {} appears {} times", c.id, n)));
            }
        }
        for d in &self.disk_boundaries {
            self.check_consecutive(&d.word, true)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("complex serializes")
    }

    pub fn from_json(src: &str) -> Result<Self, ComplexError> {
        let data: MorseComplexData = serde_json::from_str(src).map_err(|e| ComplexError::Json(e.to_string()))?;
        data.validate()?;
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScalarField;
    use crate::word::{cyclic_eq_up_to_inverse, cyclic_reduce, exponent_sums, w};

    fn land(m: Manifold, f: &str) -> Landscape {
        Landscape::analyze(ScalarField::parse(m, f).unwrap(), 8).unwrap()
    }

    #[test]
    fn torus_complex() {
        let l = land(Manifold::Torus, "cos(2*pi*x)+cos(2*pi*y)");
        let d = MorseComplexData::extract(&l, &ExtractOptions::default(), Provenance::Handwritten).unwrap();
        assert_eq!(
            d.steps,
            vec![
                Step { id: 0, through: 1, start: 0, end: 0, start_lift: Some([-1, 0]), end_lift: Some([0, 0]) },
                Step { id: 1, through: 2, start: 0, end: 0, start_lift: Some([0, -1]), end_lift: Some([0, 0]) },
            ]
        );
        assert_eq!(d.disk_boundaries, vec![DiskBoundary { of: 3, word: w("0- 1- 0+ 1+") }]);
        assert!(d.warnings.is_empty());
        let back = MorseComplexData::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn sphere_complex_has_an_empty_disk() {
        let l = land(Manifold::Sphere, "z");
        let d = MorseComplexData::extract(&l, &ExtractOptions::default(), Provenance::Handwritten).unwrap();
        assert!(d.steps.is_empty());
        assert_eq!(d.disk_boundaries, vec![DiskBoundary { of: 1, word: vec![] }]);
    }

    #[test]
    fn perturbed_torus_keeps_the_commutator() {
        let l = land(Manifold::Torus, "cos(2*pi*x)+cos(2*pi*y)+0.1*cos(2*pi*(x+y))");
        let d = MorseComplexData::extract(&l, &ExtractOptions::default(), Provenance::Handwritten).unwrap();
        assert_eq!(d.disk_boundaries.len(), 1);
        let word = cyclic_reduce(&d.disk_boundaries[0].word);
        assert_eq!(exponent_sums(&word, d.steps.len()), vec![0; d.steps.len()]);
        assert!(cyclic_eq_up_to_inverse(&word, &w("0+ 1+ 0- 1-")) || cyclic_eq_up_to_inverse(&word, &w("0+ 1- 0- 1+")));
    }

    #[test]
    fn doubling_the_resolution_is_stable() {
        let l = land(Manifold::Torus, "cos(2*pi*x)+cos(2*pi*y)+0.2*sin(2*pi*x)*cos(2*pi*y)");
        let a = MorseComplexData::extract(&l, &ExtractOptions::default(), Provenance::Handwritten).unwrap();
        let opts = ExtractOptions { samples: 1024, ..ExtractOptions::default() };
        let b = MorseComplexData::extract(&l, &opts, Provenance::Handwritten).unwrap();
        assert_eq!(a.disk_boundaries, b.disk_boundaries);
    }

    #[test]
    fn handwritten_validation() {
        let cp = |id, index| CriticalPoint { id, coords: vec![], index, value: id as f64 };
        let cps = vec![cp(0, 0), cp(1, 1), cp(2, 2)];
        let step = Step { id: 0, through: 1, start: 0, end: 0, start_lift: None, end_lift: None };
        let ok = MorseComplexData::handwritten(
            cps.clone(),
            vec![step.clone()],
            vec![DiskBoundary { of: 2, word: w("0+ 0-") }],
            0,
        );
        assert!(ok.is_ok());
        let bad = MorseComplexData::handwritten(cps, vec![step], vec![DiskBoundary { of: 2, word: w("1+") }], 0);
        assert_eq!(bad, Err(ComplexError::NotConsecutive { position: 0 }));
    }
}
