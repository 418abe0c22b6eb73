//! Presentations of the Morse fundamental group, abelianization by Smith
//! normal form, a bounded word-problem search with replayable witnesses, and
//! the disk-gluing calculus.

use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mscomplex::{ComplexError, MorseComplexData};
use crate::word::{self, exponent_sums, inverse, rotate, Letter, Named, Word};

pub const SCHEMA: &str = "pi1/v1";

#[derive(Clone, Debug, PartialEq, Error)]
pub enum Pi1Error {
    #[error("vertex {vertex} is not connected to the base point")]
    DisconnectedComplex { vertex: usize },
    #[error("word is not consecutive at position {position}")]
    NotConsecutive { position: usize },
    #[error("disks are not disk-like: {0}")]
    NotDiskLike(String),
    #[error("conjugator does not end on the glued boundary")]
    BadConjugator,
    #[error("unknown disk {0}")]
    UnknownDisk(usize),
}

impl From<ComplexError> for Pi1Error {
    fn from(e: ComplexError) -> Self {
        match e {
            ComplexError::NotConsecutive { position } => Pi1Error::NotConsecutive { position },
            other => Pi1Error::NotDiskLike(other.to_string()),
        }
    }
}

/// Free reduction of a consecutive word in `data`.
pub fn free_reduce(data: &MorseComplexData, w: &[Letter]) -> Result<Word, Pi1Error> {
    data.check_consecutive(w, false)?;
    Ok(word::free_reduce(w))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub schema: String,
    pub base: usize,
    /// Non-tree step ids; relators are written in these step ids.
    pub generators: Vec<usize>,
    pub relators: Vec<Word>,
    pub tree: Vec<usize>,
    /// Tree path from the base to each reachable vertex.
    pub tree_paths: BTreeMap<usize, Word>,
}

/// Spanning tree by breadth-first search from `base`, smallest step id first.
pub fn spanning_tree(vertices: &[usize], edges: &[(usize, usize, usize)], base: usize) -> (Vec<usize>, BTreeMap<usize, Word>) {
    let mut paths: BTreeMap<usize, Word> = BTreeMap::new();
    let mut tree = Vec::new();
    paths.insert(base, Vec::new());
    let mut queue = VecDeque::from([base]);
    while let Some(v) = queue.pop_front() {
        for &(id, s, e) in edges {
            for (from, to, sign) in [(s, e, 1i8), (e, s, -1)] {
                if from == v && !paths.contains_key(&to) && vertices.contains(&to) {
                    let mut p = paths[&v].clone();
                    p.push(Letter { step: id, sign });
                    paths.insert(to, p);
                    tree.push(id);
                    queue.push_back(to);
                }
            }
        }
    }
    tree.sort_unstable();
    (tree, paths)
}

pub fn presentation(data: &MorseComplexData) -> Result<Presentation, Pi1Error> {
    let vertices: Vec<usize> = data.critical_points.iter().filter(|c| c.index == 0).map(|c| c.id).collect();
    let edges: Vec<(usize, usize, usize)> = data.steps.iter().map(|s| (s.id, s.start, s.end)).collect();
    let (tree, tree_paths) = spanning_tree(&vertices, &edges, data.base);
    if let Some(&v) = vertices.iter().find(|v| !tree_paths.contains_key(v)) {
        return Err(Pi1Error::DisconnectedComplex { vertex: v });
    }
    let generators: Vec<usize> = data.steps.iter().map(|s| s.id).filter(|id| !tree.contains(id)).collect();
    let mut p = Presentation { schema: SCHEMA.into(), base: data.base, generators, relators: Vec::new(), tree, tree_paths };
    for d in &data.disk_boundaries {
        let r = p.rewrite(&d.word);
        if !r.is_empty() {
            p.relators.push(r);
        }
    }
    Ok(p)
}

impl Presentation {
    /// Image of a loop in the generators: tree letters are dropped, then the
    /// result is freely reduced.
    pub fn rewrite(&self, w: &[Letter]) -> Word {
        let kept: Word = w.iter().copied().filter(|l| self.generators.contains(&l.step)).collect();
        word::free_reduce(&kept)
    }

    pub fn gen_index(&self, step: usize) -> Option<usize> {
        self.generators.iter().position(|&g| g == step)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("presentation serializes")
    }

    pub fn abelianization(&self) -> Abelianization {
        let n = self.generators.len();
        let rows: Vec<Vec<i64>> = self
            .relators
            .iter()
            .map(|r| {
                let sums = exponent_sums(r, self.generators.iter().max().map_or(0, |m| m + 1));
                self.generators.iter().map(|&g| sums[g]).collect()
            })
            .collect();
        Abelianization::of(rows, n)
    }
}

impl fmt::Display for Presentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gens: Vec<String> = self.generators.iter().map(|g| format!("s{g}")).collect();
        let rels: Vec<String> = self.relators.iter().map(|r| word::show(r)).collect();
        write!(f, "⟨{} | {}⟩", gens.join(", "), rels.join(", "))
    }
}

/// `ℤⁿ / rowspace(R)` through a Smith decomposition `U·R·V = D`: the class of
/// a row vector `x` has coordinates `x·V`, the first `r` of them taken modulo
/// the diagonal entries and the rest free.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abelianization {
    pub rank: usize,
    pub torsion: Vec<i64>,
    /// Per coordinate of `x·V`: the modulus, or 0 for a free coordinate.
    pub moduli: Vec<i64>,
    pub v: Vec<Vec<i64>>,
}

impl Abelianization {
    pub fn of(rows: Vec<Vec<i64>>, n: usize) -> Abelianization {
        let (diag, v) = smith(rows, n);
        let mut moduli = vec![0i64; n];
        for (i, d) in diag.iter().enumerate() {
            moduli[i] = *d;
        }
        Abelianization {
            rank: moduli.iter().filter(|m| **m == 0).count(),
            torsion: moduli.iter().copied().filter(|m| *m > 1).collect(),
            moduli,
            v,
        }
    }

    /// Class of an exponent vector; coordinates with modulus 1 are zeroed.
    pub fn image(&self, x: &[i64]) -> Vec<i64> {
        let n = self.moduli.len();
        (0..n)
            .map(|j| {
                let c: i64 = (0..n).map(|i| x[i] * self.v[i][j]).sum();
                match self.moduli[j] {
                    0 => c,
                    m => c.rem_euclid(m),
                }
            })
            .collect()
    }
}

/// Smith normal form keeping the column transform. Returns the nonzero
/// diagonal entries (positive, each dividing the next) and `V`.
#[allow(clippy::needless_range_loop)]
pub fn smith(rows: Vec<Vec<i64>>, n: usize) -> (Vec<i64>, Vec<Vec<i64>>) {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let m = a.len();
    let mut v: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    let mut diag = Vec::new();
    let mut t = 0;
    while t < m.min(n) {
        let Some((pi, pj)) = min_entry(&a, t, m, n) else { break };
        a.swap(t, pi);
        swap_cols(&mut a, &mut v, t, pj);
        loop {
            let mut dirty = false;
            for i in t + 1..m {
                let q = a[i][t] / a[t][t];
                if q != 0 {
                    for j in t..n {
                        a[i][j] -= q * a[t][j];
                    }
                }
                dirty |= a[i][t] != 0;
            }
            for j in t + 1..n {
                let q = a[t][j] / a[t][t];
                if q != 0 {
                    for i in 0..m {
                        a[i][j] -= q * a[i][t];
                    }
                    for row in v.iter_mut() {
                        row[j] -= q * row[t];
                    }
                }
                dirty |= a[t][j] != 0;
            }
            if dirty {
                let (pi, pj) = min_entry(&a, t, m, n).expect("nonzero pivot");
                a.swap(t, pi);
                swap_cols(&mut a, &mut v, t, pj);
                continue;
            }
            let d = a[t][t];
            let bad = (t + 1..m).find(|&i| (t + 1..n).any(|j| a[i][j] % d != 0));
            match bad {
                Some(i) => {
                    for j in t..n {
                        a[t][j] += a[i][j];
                    }
                }
                None => break,
            }
        }
        if a[t][t] < 0 {
            for row in a.iter_mut() {
                row[t] = -row[t];
            }
            for row in v.iter_mut() {
                row[t] = -row[t];
            }
        }
        diag.push(a[t][t] as i64);
        t += 1;
    }
    (diag, v.into_iter().map(|r| r.into_iter().map(|x| x as i64).collect()).collect())
}

fn min_entry(a: &[Vec<i128>], t: usize, m: usize, n: usize) -> Option<(usize, usize)> {
    let mut best: Option<(i128, usize, usize)> = None;
    for (i, row) in a.iter().enumerate().take(m).skip(t) {
        for (j, &x) in row.iter().enumerate().take(n).skip(t) {
            let x = x.abs();
            if x != 0 && best.is_none_or(|(b, _, _)| x < b) {
                best = Some((x, i, j));
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

fn swap_cols(a: &mut [Vec<i128>], v: &mut [Vec<i128>], i: usize, j: usize) {
    for row in a.iter_mut() {
        row.swap(i, j);
    }
    for row in v.iter_mut() {
        row.swap(i, j);
    }
}

/// One relator application: at `pos`, the subword `removed` is replaced by
/// `inserted`, where `removed · inserted⁻¹` is a rotation of a relator or of
/// its inverse; the result is then freely reduced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewrite {
    pub pos: usize,
    pub removed: Word,
    pub inserted: Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrivialityVerdict {
    Trivial { trace: Vec<Rewrite> },
    Nontrivial { certificate: Vec<i64> },
    Unknown { explored: usize },
}

impl TrivialityVerdict {
    pub fn is_trivial(&self) -> bool {
        matches!(self, TrivialityVerdict::Trivial { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_len: usize,
    pub max_states: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_len: 64, max_states: 100_000 }
    }
}

/// Every rotation of every relator and of its inverse, deduplicated, in a
/// fixed order.
pub fn symmetrized(relators: &[Word]) -> Vec<Word> {
    let mut out: Vec<Word> = Vec::new();
    for r in relators {
        for base in [r.clone(), inverse(r)] {
            for k in 0..base.len() {
                let rot = rotate(&base, k);
                if !out.contains(&rot) {
                    out.push(rot);
                }
            }
        }
    }
    out
}

fn apply(w: &[Letter], pos: usize, len: usize, inserted: &[Letter]) -> Word {
    let mut out = Vec::with_capacity(w.len() - len + inserted.len());
    out.extend_from_slice(&w[..pos]);
    out.extend_from_slice(inserted);
    out.extend_from_slice(&w[pos + len..]);
    word::free_reduce(&out)
}

/// Decides whether a loop (written in generators) is trivial: abelianization
/// first, then best-first rewriting by relator pieces ordered by
/// `(length, discovery order)`.
pub fn is_trivial(w: &[Letter], p: &Presentation, budget: Budget) -> TrivialityVerdict {
    let start = word::free_reduce(w);
    if start.is_empty() {
        return TrivialityVerdict::Trivial { trace: Vec::new() };
    }
    let ab = p.abelianization();
    let sums = exponent_sums(&start, p.generators.iter().max().map_or(0, |m| m + 1) .max(start.iter().map(|l| l.step + 1).max().unwrap_or(0)));
    let x: Vec<i64> = p.generators.iter().map(|&g| sums[g]).collect();
    let cert = ab.image(&x);
    if cert.iter().any(|c| *c != 0) {
        return TrivialityVerdict::Nontrivial { certificate: cert };
    }
    let pieces: Vec<(Word, Word)> = symmetrized(&p.relators)
        .into_iter()
        .flat_map(|r| (1..=r.len()).map(move |k| (r[..k].to_vec(), inverse(&r[k..]))).collect::<Vec<_>>())
        .collect();
    let mut seen: HashMap<Word, usize> = HashMap::new();
    let mut nodes: Vec<(Word, Option<(usize, Rewrite)>)> = Vec::new();
    let mut heap = BinaryHeap::new();
    seen.insert(start.clone(), 0);
    nodes.push((start.clone(), None));
    heap.push(Reverse((start.len(), 0usize)));
    let mut explored = 0;
    while let Some(Reverse((_, idx))) = heap.pop() {
        explored += 1;
        if explored > budget.max_states {
            break;
        }
        let cur = nodes[idx].0.clone();
        for (u, ins) in &pieces {
            if u.len() > cur.len() {
                continue;
            }
            for pos in 0..=cur.len() - u.len() {
                if cur[pos..pos + u.len()] != u[..] {
                    continue;
                }
                let next = apply(&cur, pos, u.len(), ins);
                if next.len() > budget.max_len || seen.contains_key(&next) {
                    continue;
                }
                let rw = Rewrite { pos, removed: u.clone(), inserted: ins.clone() };
                let id = nodes.len();
                seen.insert(next.clone(), id);
                nodes.push((next.clone(), Some((idx, rw))));
                if next.is_empty() {
                    let mut trace = Vec::new();
                    let mut at = id;
                    while let Some((parent, rw)) = nodes[at].1.clone() {
                        trace.push(rw);
                        at = parent;
                    }
                    trace.reverse();
                    return TrivialityVerdict::Trivial { trace };
                }
                heap.push(Reverse((next.len(), id)));
            }
        }
    }
    TrivialityVerdict::Unknown { explored: explored.min(budget.max_states) }
}

/// Independent replay of a witness: every move must substitute a relator
/// piece at the stated position, and the final word must be empty.
pub fn verify_trace(w: &[Letter], relators: &[Word], trace: &[Rewrite]) -> bool {
    let mut cur = word::free_reduce(w);
    for rw in trace {
        let end = rw.pos + rw.removed.len();
        if end > cur.len() || cur[rw.pos..end] != rw.removed[..] || rw.removed.is_empty() {
            return false;
        }
        let mut cycle = rw.removed.clone();
        cycle.extend(inverse(&rw.inserted));
        let is_relator = relators
            .iter()
            .any(|r| word::cyclic_eq(&cycle, r) || word::cyclic_eq(&cycle, &inverse(r)));
        if !is_relator {
            return false;
        }
        let mut next = cur[..rw.pos].to_vec();
        next.extend_from_slice(&rw.inserted);
        next.extend_from_slice(&cur[end..]);
        cur = word::free_reduce(&next);
    }
    cur.is_empty()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glued {
    /// Cyclic boundary word of the union.
    pub boundary: Word,
    /// The based loop that was tested, written in generators.
    pub loop_word: Word,
    pub verdict: TrivialityVerdict,
}

/// Boundary word of the union of the named disks, glued one at a time along
/// a single shared segment, conjugated to the base and tested for triviality.
pub fn glue_disks(
    data: &MorseComplexData,
    disk_ids: &[usize],
    conjugator: &[Letter],
    budget: Budget,
) -> Result<Glued, Pi1Error> {
    let disk = |id: usize| {
        data.disk_boundaries.iter().find(|d| d.of == id).map(|d| d.word.clone()).ok_or(Pi1Error::UnknownDisk(id))
    };
    let mut boundary = match disk_ids.first() {
        Some(&id) => disk(id)?,
        None => Vec::new(),
    };
    for &id in &disk_ids[1..] {
        boundary = glue_pair(&boundary, &disk(id)?)?;
    }
    let anchor = conjugator.last().map_or(data.base, |&l| data.ends(l).1);
    let k = if boundary.is_empty() {
        0
    } else {
        (0..boundary.len()).find(|&k| data.ends(boundary[k]).0 == anchor).ok_or(Pi1Error::BadConjugator)?
    };
    let mut loop_word = conjugator.to_vec();
    if !boundary.is_empty() {
        loop_word.extend(rotate(&boundary, k));
    }
    loop_word.extend(inverse(conjugator));
    data.check_consecutive(&loop_word, false)?;
    if let Some(first) = loop_word.first() {
        if data.ends(*first).0 != data.base {
            return Err(Pi1Error::BadConjugator);
        }
    }
    let pres = presentation(data)?;
    let loop_word = pres.rewrite(&loop_word);
    let verdict = is_trivial(&loop_word, &pres, budget);
    Ok(Glued { boundary, loop_word, verdict })
}

/// Glues `d` onto `b` along their shared steps, which must form one
/// contiguous segment `s` of `b` appearing as `s⁻¹` in `d` or `d⁻¹`.
pub fn glue_pair(b: &[Letter], d: &[Letter]) -> Result<Word, Pi1Error> {
    let shared: Vec<usize> = b.iter().map(|l| l.step).filter(|s| d.iter().any(|l| l.step == *s)).collect();
    if shared.is_empty() {
        return Err(Pi1Error::NotDiskLike("no shared boundary segment".into()));
    }
    let n = b.len();
    let in_shared = |l: &Letter| shared.contains(&l.step);
    // rotate b so the shared segment sits at the end
    let k = (0..n)
        .find(|&k| {
            let r = rotate(b, k);
            let tail = r.len() - shared.len();
            r[tail..].iter().all(in_shared) && r[..tail].iter().all(|l| !in_shared(l))
        })
        .ok_or_else(|| Pi1Error::NotDiskLike("shared segment is disconnected".into()))?;
    let rb = rotate(b, k);
    let (x, s) = rb.split_at(n - shared.len());
    let s_inv = inverse(s);
    for cand in [d.to_vec(), inverse(d)] {
        for j in 0..cand.len() {
            let r = rotate(&cand, j);
            if r.len() >= s_inv.len() && r[..s_inv.len()] == s_inv[..] && r[s_inv.len()..].iter().all(|l| !in_shared(l)) {
                let mut out = x.to_vec();
                out.extend_from_slice(&r[s_inv.len()..]);
                return Ok(out);
            }
        }
    }
    Err(Pi1Error::NotDiskLike("shared steps do not match as a reversed segment".into()))
}

/// Renders a word in the generator names of a presentation.
pub fn show_in(w: &[Letter]) -> String {
    Named { word: w, names: &|i| format!("s{i}") }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::CriticalPoint;
    use crate::mscomplex::{DiskBoundary, Step};
    use crate::word::w;
    use proptest::prelude::*;

    fn cp(id: usize, index: usize) -> CriticalPoint {
        CriticalPoint { id, coords: vec![], index, value: id as f64 }
    }

    fn step(id: usize, through: usize, start: usize, end: usize) -> Step {
        Step { id, through, start, end, start_lift: None, end_lift: None }
    }

    fn torus() -> MorseComplexData {
        MorseComplexData::handwritten(
            vec![cp(0, 0), cp(1, 1), cp(2, 1), cp(3, 2)],
            vec![step(0, 1, 0, 0), step(1, 2, 0, 0)],
            vec![DiskBoundary { of: 3, word: w("0- 1- 0+ 1+") }],
            0,
        )
        .unwrap()
    }

    fn commutator() -> Presentation {
        presentation(&torus()).unwrap()
    }

    #[test]
    fn free_reduce_checks_consecutive() {
        let cps = vec![cp(0, 0), cp(1, 0), cp(2, 1), cp(3, 1)];
        let d = MorseComplexData::handwritten(cps, vec![step(0, 2, 0, 1), step(1, 3, 0, 1)], vec![], 0).unwrap();
        assert_eq!(free_reduce(&d, &w("0+ 1-")).unwrap(), w("0+ 1-"));
        assert_eq!(free_reduce(&d, &w("0+ 1+")), Err(Pi1Error::NotConsecutive { position: 1 }));
        assert!(free_reduce(&d, &w("0+ 0-")).unwrap().is_empty());
    }

    #[test]
    fn presentations() {
        let p = commutator();
        assert_eq!(p.to_string(), "⟨s0, s1 | s0^-1 s1^-1 s0 s1⟩");
        let ab = p.abelianization();
        assert_eq!((ab.rank, ab.torsion.clone()), (2, vec![]));
        // two minima joined by one step, no disks
        let cps = vec![cp(0, 0), cp(1, 0), cp(2, 1)];
        let d = MorseComplexData::handwritten(cps, vec![step(0, 2, 0, 1)], vec![], 0).unwrap();
        let p = presentation(&d).unwrap();
        assert!(p.generators.is_empty() && p.relators.is_empty());
        assert_eq!(p.to_string(), "⟨ | ⟩");
        // disconnected
        let cps = vec![cp(0, 0), cp(1, 0)];
        let d = MorseComplexData::handwritten(cps, vec![], vec![], 0).unwrap();
        assert_eq!(presentation(&d), Err(Pi1Error::DisconnectedComplex { vertex: 1 }));
    }

    #[test]
    fn abelianization_examples() {
        let ab = Abelianization::of(vec![vec![2]], 1);
        assert_eq!((ab.rank, ab.torsion), (0, vec![2]));
        let ab = Abelianization::of(vec![], 0);
        assert_eq!((ab.rank, ab.torsion), (0, vec![]));
        let ab = Abelianization::of(vec![vec![2, 4], vec![6, 8]], 2);
        assert_eq!((ab.rank, ab.torsion), (0, vec![2, 4]));
    }

    #[test]
    fn word_problem_examples() {
        let p = commutator();
        let b = Budget::default();
        assert!(is_trivial(&w("0+ 1+ 0- 1-"), &p, b).is_trivial());
        assert_eq!(is_trivial(&w("0+"), &p, b), TrivialityVerdict::Nontrivial { certificate: vec![1, 0] });
        let hard = w("0+ 0+ 1+ 1+ 0- 0- 1- 1-");
        match is_trivial(&hard, &p, b) {
            TrivialityVerdict::Trivial { trace } => {
                assert!(!trace.is_empty());
                assert!(verify_trace(&hard, &p.relators, &trace));
                let mut tampered = trace.clone();
                tampered[0].inserted.push(Letter::pos(0));
                assert!(!verify_trace(&hard, &p.relators, &tampered));
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn unknown_is_reported_honestly() {
        // [a, b] has zero abelian image but is nontrivial in the free group
        let p = Presentation {
            schema: SCHEMA.into(),
            base: 0,
            generators: vec![0, 1],
            relators: vec![],
            tree: vec![],
            tree_paths: BTreeMap::new(),
        };
        let v = is_trivial(&w("0+ 1+ 0- 1-"), &p, Budget { max_len: 64, max_states: 10 });
        assert!(matches!(v, TrivialityVerdict::Unknown { .. }));
    }

    /// Two torus-like disks of a genus-two style fixture sharing step 2.
    #[test]
    fn gluing_two_disks() {
        let cps = vec![cp(0, 0), cp(1, 1), cp(2, 1), cp(3, 1), cp(4, 1), cp(5, 2), cp(6, 2)];
        let d = MorseComplexData::handwritten(
            cps,
            vec![step(0, 1, 0, 0), step(1, 2, 0, 0), step(2, 3, 0, 0), step(3, 4, 0, 0)],
            vec![
                DiskBoundary { of: 5, word: w("0+ 1+ 0- 2+") },
                DiskBoundary { of: 6, word: w("2- 3+ 3+") },
            ],
            0,
        )
        .unwrap();
        let g = glue_disks(&d, &[5], &[], Budget::default()).unwrap();
        assert_eq!(g.boundary, w("0+ 1+ 0- 2+"));
        assert!(g.verdict.is_trivial());
        let g = glue_disks(&d, &[5, 6], &[], Budget::default()).unwrap();
        assert_eq!(g.boundary, w("0+ 1+ 0- 3+ 3+"));
        assert!(g.verdict.is_trivial());
        let conj = glue_disks(&d, &[5, 6], &w("3+"), Budget::default()).unwrap();
        assert!(conj.verdict.is_trivial());
    }

    #[test]
    fn separated_shared_segments_are_rejected() {
        assert!(matches!(glue_pair(&w("0+ 1+ 2+ 3+"), &w("2- 4+ 0- 5+")), Err(Pi1Error::NotDiskLike(_))));
        assert!(matches!(glue_pair(&w("0+ 1+"), &w("2+ 3+")), Err(Pi1Error::NotDiskLike(_))));
    }

    /// A polygon on `n` vertices cut into faces by non-crossing chords; each
    /// face is a disk, and the union of all faces is a disk.
    fn polygon(n: usize, cuts: &[usize]) -> (MorseComplexData, Vec<usize>) {
        let mut steps: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let mut faces: Vec<Vec<usize>> = Vec::new();
        let mut stack = vec![(0..n).collect::<Vec<usize>>()];
        let mut k = 0;
        while let Some(poly) = stack.pop() {
            if poly.len() <= 3 || k >= cuts.len() {
                faces.push(poly);
                continue;
            }
            let m = poly.len();
            let j = 2 + cuts[k] % (m - 3);
            k += 1;
            steps.push((poly[0], poly[j]));
            stack.push(poly[..=j].to_vec());
            let mut other = poly[j..].to_vec();
            other.push(poly[0]);
            stack.push(other);
        }
        let edge = |a: usize, b: usize| -> Letter {
            let i = steps.iter().position(|&(s, e)| (s, e) == (a, b) || (s, e) == (b, a)).unwrap();
            Letter { step: i, sign: if steps[i] == (a, b) { 1 } else { -1 } }
        };
        let mut cps: Vec<CriticalPoint> = (0..n).map(|i| cp(i, 0)).collect();
        let mut st = Vec::new();
        for (i, &(s, e)) in steps.iter().enumerate() {
            cps.push(cp(n + i, 1));
            st.push(step(i, n + i, s, e));
        }
        let mut disks = Vec::new();
        let mut ids = Vec::new();
        for f in &faces {
            let id = cps.len();
            cps.push(cp(id, 2));
            let wd: Word = (0..f.len()).map(|i| edge(f[i], f[(i + 1) % f.len()])).collect();
            disks.push(DiskBoundary { of: id, word: wd });
            ids.push(id);
        }
        let data = MorseComplexData::handwritten(cps, st, disks, 0).unwrap();
        // order the faces so each new face touches the union in one chord
        let mut order = vec![ids[0]];
        let mut rest: Vec<usize> = ids[1..].to_vec();
        let mut acc = data.disk_boundaries[0].word.clone();
        while !rest.is_empty() {
            let pos = rest
                .iter()
                .position(|id| {
                    let dw = &data.disk_boundaries.iter().find(|d| d.of == *id).unwrap().word;
                    glue_pair(&acc, dw).is_ok()
                })
                .unwrap();
            let id = rest.remove(pos);
            let dw = &data.disk_boundaries.iter().find(|d| d.of == id).unwrap().word;
            acc = glue_pair(&acc, dw).unwrap();
            order.push(id);
        }
        (data, order)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn glued_polygons_are_trivial(n in 3usize..9, cuts in prop::collection::vec(0usize..100, 0..6)) {
            let (data, order) = polygon(n, &cuts);
            let g = glue_disks(&data, &order, &[], Budget::default()).unwrap();
            prop_assert_eq!(g.boundary.len(), n);
            prop_assert!(g.verdict.is_trivial());
            let p = presentation(&data).unwrap();
            let v = data.critical_points.iter().filter(|c| c.index == 0).count();
            prop_assert_eq!(p.generators.len(), data.steps.len() + 1 - v);
            if let TrivialityVerdict::Trivial { trace } = &g.verdict {
                prop_assert!(verify_trace(&g.loop_word, &p.relators, trace));
            }
        }

        #[test]
        fn snf_image_respects_relators(rows in prop::collection::vec(prop::collection::vec(-4i64..5, 3), 0..4),
                                       coeffs in prop::collection::vec(-3i64..4, 4)) {
            let ab = Abelianization::of(rows.clone(), 3);
            let mut x = vec![0i64; 3];
            for (r, c) in rows.iter().zip(&coeffs) {
                for j in 0..3 {
                    x[j] += c * r[j];
                }
            }
            prop_assert!(ab.image(&x).iter().all(|c| *c == 0));
            prop_assert_eq!(ab.rank + ab.moduli.iter().filter(|m| **m != 0).count(), 3);
        }
    }
}
