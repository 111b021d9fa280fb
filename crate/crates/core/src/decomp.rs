//! Variable grouping: ground truth from generator metadata, or detected by
//! pairwise differential probing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::ProblemInstance;
use crate::error::{Error, Result};

/// Symmetric binary interaction matrix stored as bitset rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignStructureMatrix {
    dim: usize,
    words: usize,
    bits: Vec<u64>,
}

impl DesignStructureMatrix {
    /// Identity matrix: every variable interacts only with itself.
    pub fn identity(dim: usize) -> Self {
        let words = dim.div_ceil(64).max(1);
        let mut m = DesignStructureMatrix {
            dim,
            words,
            bits: vec![0; dim * words],
        };
        for i in 0..dim {
            m.set_bit(i, i);
        }
        m
    }

    fn set_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1u64 << (j % 64);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Mark `i` and `j` as interacting (both entries).
    pub fn link(&mut self, i: usize, j: usize) {
        self.set_bit(i, j);
        self.set_bit(j, i);
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.bits[i * self.words..(i + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    /// True when every row has only its diagonal entry set.
    pub fn fully_separable(&self) -> bool {
        (0..self.dim).all(|i| self.row_sum(i) == 1)
    }

    /// Matrix with `(i, j)` set iff `i` and `j` share a group.
    pub fn from_groups(dim: usize, groups: &[Vec<usize>]) -> Self {
        let mut m = Self::identity(dim);
        for g in groups {
            for (a, &i) in g.iter().enumerate() {
                for &j in &g[a + 1..] {
                    m.link(i, j);
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionSource {
    GroundTruth,
    Detected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    /// Sorted variable indices per group, ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    pub dsm: DesignStructureMatrix,
    pub source: DecompositionSource,
}

impl DecompositionResult {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.dsm.dim()
    }

    /// Variables that belong to more than one group.
    pub fn shared_count(&self) -> usize {
        let mut seen = vec![0u32; self.dim()];
        for g in &self.groups {
            for &v in g {
                seen[v] += 1;
            }
        }
        seen.iter().filter(|&&c| c > 1).count()
    }
}

/// Groups taken directly from the instance; costs no evaluations.
pub fn ground_truth_decompose(instance: &ProblemInstance) -> DecompositionResult {
    let groups = instance.groups().to_vec();
    DecompositionResult {
        dsm: DesignStructureMatrix::from_groups(instance.dim(), &groups),
        groups,
        source: DecompositionSource::GroundTruth,
    }
}

/// Connected components of the union of `groups`, each sorted, ordered by smallest member.
pub fn merge_overlapping(dim: usize, groups: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(dim);
    for g in groups {
        for w in g.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    uf.components()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the result does not depend on union order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Threshold {
    /// `c * (1 + |f(base)|)`
    Relative(f64),
    Absolute(f64),
    /// `c * gamma * (|f| + |f_i| + |f_j| + |f_ij|)` with
    /// `gamma = n u / (1 - n u)`, `n = sqrt(D) + 2` and `u` the unit roundoff:
    /// a multiple of the rounding error the four evaluations can carry.
    Noise(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Noise(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub delta: f64,
    pub threshold: Threshold,
    pub fe_budget: u64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            delta: 1.0,
            threshold: Threshold::default(),
            fe_budget: u64::MAX,
        }
    }
}

/// Evaluations a full pairwise scan needs in dimension `dim`.
pub fn grouping_cost(dim: usize) -> u64 {
    let d = dim as u64;
    1 + d + d * d.saturating_sub(1) / 2
}

/// Pairwise difference-of-differences interaction detection from the lower
/// bound corner. Groups are the connected components of the interaction graph.
///
/// Pairs are probed in `(i, j)` order; when the budget cannot cover every
/// pair, the pairs that fit are probed and a budget error carries what was found.
pub fn differential_grouping_decompose(
    instance: &ProblemInstance,
    config: &GroupingConfig,
) -> Result<DecompositionResult> {
    if !(config.delta > 0.0) {
        return Err(Error::contract("probe step delta must be positive"));
    }
    let dim = instance.dim();
    if config.fe_budget < 1 + dim as u64 {
        return Err(Error::BudgetExhausted {
            pairs_probed: 0,
            interactions: Vec::new(),
        });
    }
    let (lo, _) = instance.bounds();
    let base = vec![lo; dim];
    let f_base = instance.evaluate(&base)?;
    let gamma = {
        let n = (dim as f64).sqrt() + 2.0;
        let u = f64::EPSILON / 2.0;
        n * u / (1.0 - n * u)
    };
    let threshold = |f_i: f64, f_j: f64, f_ij: f64| match config.threshold {
        Threshold::Relative(c) => c * (1.0 + f_base.abs()),
        Threshold::Absolute(e) => e,
        Threshold::Noise(c) => c * gamma * (f_base.abs() + f_i.abs() + f_j.abs() + f_ij.abs()),
    };

    let shifted = |i: usize| {
        let mut x = base.clone();
        x[i] += config.delta;
        x
    };
    let single: Vec<f64> = (0..dim)
        .into_par_iter()
        .map(|i| instance.evaluate(&shifted(i)).expect("dimension checked"))
        .collect();

    let pairs: Vec<(usize, usize)> = (0..dim)
        .flat_map(|i| (i + 1..dim).map(move |j| (i, j)))
        .collect();
    let affordable = (config.fe_budget - 1 - dim as u64).min(pairs.len() as u64) as usize;
    let probed = &pairs[..affordable];
    let interacting: Vec<bool> = probed
        .par_iter()
        .map(|&(i, j)| {
            let mut x = shifted(i);
            x[j] += config.delta;
            let f_ij = instance.evaluate(&x).expect("dimension checked");
            ((f_ij - single[j]) - (single[i] - f_base)).abs() > threshold(single[i], single[j], f_ij)
        })
        .collect();
    let interactions: Vec<(usize, usize)> = probed
        .iter()
        .zip(&interacting)
        .filter_map(|(&p, &hit)| hit.then_some(p))
        .collect();

    if affordable < pairs.len() {
        return Err(Error::BudgetExhausted {
            pairs_probed: affordable,
            interactions,
        });
    }

    let mut uf = UnionFind::new(dim);
    let mut dsm = DesignStructureMatrix::identity(dim);
    for &(i, j) in &interactions {
        uf.union(i, j);
        dsm.link(i, j);
    }
    Ok(DecompositionResult {
        groups: uf.components(),
        dsm,
        source: DecompositionSource::Detected,
    })
}
