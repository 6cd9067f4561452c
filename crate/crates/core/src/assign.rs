//! Exact minimizers for the two assignment problems used in training:
//!
//! * MixIT: every estimated source goes to one of two reference mixtures;
//!   all `2^M` binary mixing matrices are enumerated.
//! * PIT: estimates are matched one-to-one with references; all `C!`
//!   permutations are enumerated.
//!
//! Both sweeps visit candidates in lexicographic order and keep the first
//! strict minimum, so exact ties resolve to the lexicographically smallest
//! assignment.

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::signal::{energy, SourceStack, Waveform};

pub const MAX_MIXIT_SOURCES: usize = 20;
pub const MAX_PIT_SOURCES: usize = 8;

/// A binary `2 × M` mixing matrix with one nonzero per column, stored as the
/// row index (0 or 1) receiving each source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MixingMatrix {
    assignment: Vec<u8>,
}

impl MixingMatrix {
    pub fn new(assignment: Vec<u8>) -> Result<Self> {
        if assignment.is_empty() || assignment.iter().any(|&r| r > 1) {
            return Err(Error::InvalidArgument(format!(
                "mixing assignment must be a non-empty 0/1 vector, got {assignment:?}"
            )));
        }
        Ok(Self { assignment })
    }

    /// The `index`-th matrix in lexicographic order of the assignment array
    /// (source 0 is the most significant position).
    fn from_index(index: u64, num_sources: usize) -> Self {
        let assignment = (0..num_sources)
            .map(|j| ((index >> (num_sources - 1 - j)) & 1) as u8)
            .collect();
        Self { assignment }
    }

    pub fn assignment(&self) -> &[u8] {
        &self.assignment
    }

    pub fn num_sources(&self) -> usize {
        self.assignment.len()
    }

    /// Dense `2 × M` 0/1 form.
    pub fn to_dense(&self) -> [Vec<u8>; 2] {
        let row = |r: u8| self.assignment.iter().map(|&a| u8::from(a == r)).collect();
        [row(0), row(1)]
    }

    /// `[A ŝ]_0` and `[A ŝ]_1` as raw sample vectors.
    pub fn remix_raw(&self, ests: &SourceStack) -> [Vec<f64>; 2] {
        let len = ests.num_samples();
        let mut rows = [vec![0.0; len], vec![0.0; len]];
        for (src, &row) in ests.iter().zip(&self.assignment) {
            for (o, s) in rows[row as usize].iter_mut().zip(src.samples()) {
                *o += s;
            }
        }
        rows
    }

    pub fn remix(&self, ests: &SourceStack) -> Result<SourceStack> {
        if ests.len() != self.assignment.len() {
            return Err(Error::Shape(format!(
                "mixing matrix has {} columns, stack has {} sources",
                self.assignment.len(),
                ests.len()
            )));
        }
        let [a, b] = self.remix_raw(ests);
        SourceStack::from_channels(vec![a, b], ests.sample_rate())
    }
}

/// A bijection on `0..C`; entry `i` is the estimate matched with reference `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    perm: Vec<usize>,
}

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!("not a permutation: {perm:?}")));
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// Reorders `ests` so that output `i` is `ests[perm[i]]`.
    pub fn apply(&self, ests: &SourceStack) -> Result<SourceStack> {
        ests.select(&self.perm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assignment {
    Mixing(MixingMatrix),
    Permutation(Permutation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub total_loss: f64,
    pub assignment: Assignment,
    /// `[Aŝ]_0, [Aŝ]_1` for mixing-matrix problems.
    pub remixed: Option<SourceStack>,
}

impl AssignmentResult {
    pub fn mixing(&self) -> Option<&MixingMatrix> {
        match &self.assignment {
            Assignment::Mixing(m) => Some(m),
            Assignment::Permutation(_) => None,
        }
    }

    pub fn permutation(&self) -> Option<&Permutation> {
        match &self.assignment {
            Assignment::Permutation(p) => Some(p),
            Assignment::Mixing(_) => None,
        }
    }
}

/// All `2^M` mixing matrices in lexicographic order.
pub fn enumerate_mixing_matrices(num_sources: usize) -> Result<Vec<MixingMatrix>> {
    check_mixit_size(num_sources)?;
    Ok((0..1u64 << num_sources)
        .map(|k| MixingMatrix::from_index(k, num_sources))
        .collect())
}

fn check_mixit_size(num_sources: usize) -> Result<()> {
    if !(1..=MAX_MIXIT_SOURCES).contains(&num_sources) {
        return Err(Error::InvalidArgument(format!(
            "number of sources {num_sources} outside 1..={MAX_MIXIT_SOURCES}"
        )));
    }
    Ok(())
}

fn check_same_length(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch {
            index: 1,
            expected: a,
            found: b,
        });
    }
    Ok(())
}

fn best_remix(targets: [&[f64]; 2], ests: &SourceStack, spec: &LossSpec) -> Result<AssignmentResult> {
    let m = ests.len();
    check_mixit_size(m)?;
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "mixing-matrix search needs at least 2 estimates, got {m}"
        )));
    }
    let mut best: Option<(f64, MixingMatrix, [Vec<f64>; 2])> = None;
    for k in 0..1u64 << m {
        let matrix = MixingMatrix::from_index(k, m);
        let rows = matrix.remix_raw(ests);
        let loss = spec.eval(targets[0], &rows[0]) + spec.eval(targets[1], &rows[1]);
        if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
            best = Some((loss, matrix, rows));
        }
    }
    let (total_loss, matrix, [a, b]) = best.expect("at least one matrix");
    Ok(AssignmentResult {
        total_loss,
        assignment: Assignment::Mixing(matrix),
        remixed: Some(SourceStack::from_channels(vec![a, b], ests.sample_rate())?),
    })
}

/// MixIT loss: the minimum over mixing matrices `A` of
/// `loss(x1, [Aŝ]_0) + loss(x2, [Aŝ]_1)`.
pub fn mixit_loss(
    x1: &Waveform,
    x2: &Waveform,
    ests: &SourceStack,
    spec: &LossSpec,
) -> Result<AssignmentResult> {
    check_same_length(x1.len(), x2.len())?;
    check_same_length(x1.len(), ests.num_samples())?;
    best_remix([x1.samples(), x2.samples()], ests, spec)
}

/// Best remix of `ests` scored against two ground-truth sources. Used for
/// the oracle-selection evaluation baseline.
pub fn oracle_remix_select(
    refs: &SourceStack,
    ests: &SourceStack,
    spec: &LossSpec,
) -> Result<AssignmentResult> {
    if refs.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "oracle remix needs exactly 2 references, got {}",
            refs.len()
        )));
    }
    check_same_length(refs.num_samples(), ests.num_samples())?;
    best_remix([refs[0].samples(), refs[1].samples()], ests, spec)
}

/// Advances `p` to the next permutation in lexicographic order; returns
/// false after the last one.
pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// PIT loss: the minimum over permutations of `Σ_i loss(refs[i], ests[perm[i]])`.
pub fn pit_loss(refs: &SourceStack, ests: &SourceStack, spec: &LossSpec) -> Result<AssignmentResult> {
    let c = refs.len();
    if ests.len() != c {
        return Err(Error::InvalidArgument(format!(
            "PIT needs as many estimates as references ({c}), got {}",
            ests.len()
        )));
    }
    if c > MAX_PIT_SOURCES {
        return Err(Error::InvalidArgument(format!(
            "PIT limited to {MAX_PIT_SOURCES} sources, got {c}"
        )));
    }
    check_same_length(refs.num_samples(), ests.num_samples())?;
    // Pairwise losses are reused by every permutation.
    let pair: Vec<Vec<f64>> = refs
        .iter()
        .map(|r| ests.iter().map(|e| spec.eval(r.samples(), e.samples())).collect())
        .collect();
    let mut perm: Vec<usize> = (0..c).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let loss: f64 = perm.iter().enumerate().map(|(i, &j)| pair[i][j]).sum();
        if loss < best.0 {
            best = (loss, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(AssignmentResult {
        total_loss: best.0,
        assignment: Assignment::Permutation(Permutation { perm: best.1 }),
        remixed: None,
    })
}

/// The `count` highest-energy sources in descending energy order (ties go to
/// the lower index), together with their original indices.
pub fn select_top_energy(ests: &SourceStack, count: usize) -> Result<(SourceStack, Vec<usize>)> {
    if count == 0 || count > ests.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {count} of {} sources",
            ests.len()
        )));
    }
    let energies: Vec<f64> = ests.iter().map(energy).collect();
    let indices = rank_by_energy(&energies, count);
    Ok((ests.select(&indices)?, indices))
}

pub(crate) fn rank_by_energy(energies: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}
