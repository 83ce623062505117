//! Numerical audit of the extremality property on linear-probabilistic and
//! softmax-linear inference layers.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::task::{ConceptSpace, World};

pub const VIOLATION_TOL: f64 = 1e-9;
pub const DEFAULT_GRID: usize = 99;
const GOLDEN_ITERS: usize = 20;
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Rows are label distributions, mixed linearly.
    LinearProb,
    /// Rows are logits; the mixture is taken before the softmax.
    SoftmaxLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceLayerSpec {
    kind: LayerKind,
    space: ConceptSpace,
    labels: u32,
    rows: Vec<Vec<f64>>,
}

impl InferenceLayerSpec {
    pub fn new(kind: LayerKind, space: ConceptSpace, labels: u32, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels == 0 {
            return invalid("layer needs at least one label");
        }
        if space.dense_size() != Some(rows.len()) {
            return invalid(format!("layer has {} rows, concept space has {} worlds", rows.len(), space.total_worlds()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != labels as usize {
                return invalid(format!("row {i} has {} entries, expected {labels}", r.len()));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return invalid(format!("row {i} has a non-finite entry"));
            }
            if kind == LayerKind::LinearProb {
                let s: f64 = r.iter().sum();
                if r.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > NORM_TOL {
                    return invalid(format!("row {i} is not a distribution"));
                }
            }
        }
        Ok(InferenceLayerSpec {
            kind,
            space,
            labels,
            rows,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn space(&self) -> &ConceptSpace {
        &self.space
    }

    pub fn labels(&self) -> u32 {
        self.labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Label distribution of the point mass on world index `c`.
    pub fn endpoint(&self, c: usize) -> Vec<f64> {
        match self.kind {
            LayerKind::LinearProb => self.rows[c].clone(),
            LayerKind::SoftmaxLinear => softmax(&self.rows[c]),
        }
    }

    fn mix(&self, c: usize, c2: usize, lambda: f64) -> Vec<f64> {
        let m: Vec<f64> = self.rows[c]
            .iter()
            .zip(&self.rows[c2])
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        match self.kind {
            LayerKind::LinearProb => m,
            LayerKind::SoftmaxLinear => softmax(&m),
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the strict maximum; `None` on a tie.
fn strict_argmax(v: &[f64]) -> Option<usize> {
    let m = max_of(v);
    let mut it = v.iter().enumerate().filter(|(_, &x)| x == m);
    let first = it.next()?.0;
    it.next().is_none().then_some(first)
}

/// Output of the layer on `λ·1{C=c} + (1−λ)·1{C=c2}`.
pub fn mixture_label_dist(layer: &InferenceLayerSpec, c: &World, c2: &World, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return invalid(format!("lambda {lambda} outside (0, 1)"));
    }
    if c == c2 {
        return invalid("mixture endpoints must differ");
    }
    for w in [c, c2] {
        if !layer.space.contains(w) {
            return invalid(format!("world {w} is not in the concept space"));
        }
    }
    Ok(layer.mix(layer.space.index_of(c), layer.space.index_of(c2), lambda))
}

/// Which eligible pairs to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSelection {
    All,
    /// `n` pairs drawn without replacement.
    Sample { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstPair {
    pub c: World,
    pub c2: World,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalityReport {
    pub satisfied: bool,
    /// No eligible pair exists.
    pub vacuous: bool,
    /// Max over scanned pairs and λ of mixture max-prob minus the better
    /// endpoint's max-prob.
    pub worst_violation: Option<f64>,
    pub worst_pair: Option<WorstPair>,
    pub pairs_scanned: usize,
    pub eligible_pairs: usize,
    pub grid_points: usize,
    pub strict_pairs: usize,
    /// Pairs whose worst value lies within the tolerance of zero.
    pub boundary_pairs: usize,
    pub violated_pairs: usize,
    pub fraction_satisfied: f64,
    pub tied_worlds: usize,
    pub warnings: Vec<String>,
}

/// Worst violation of one pair: grid scan, then golden-section refinement
/// around the best grid point.
fn scan_pair(layer: &InferenceLayerSpec, c: usize, c2: usize, grid: usize) -> (f64, f64) {
    let bound = max_of(&layer.endpoint(c)).max(max_of(&layer.endpoint(c2)));
    let f = |l: f64| max_of(&layer.mix(c, c2, l)) - bound;
    let step = 1.0 / (grid + 1) as f64;
    let (mut bi, mut bv) = (1, f64::NEG_INFINITY);
    for i in 1..=grid {
        let v = f(i as f64 * step);
        if v > bv {
            bi = i;
            bv = v;
        }
    }
    let mut best = (bv, bi as f64 * step);
    let (mut a, mut b) = ((bi - 1) as f64 * step, (bi + 1) as f64 * step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v > best.0 {
                best = (v, x);
            }
        }
    }
    best
}

#[cfg(feature = "parallel")]
fn scan_all(layer: &InferenceLayerSpec, pairs: &[(usize, usize)], grid: usize) -> Vec<(f64, f64)> {
    use rayon::prelude::*;
    pairs.par_iter().map(|&(c, c2)| scan_pair(layer, c, c2, grid)).collect()
}

#[cfg(not(feature = "parallel"))]
fn scan_all(layer: &InferenceLayerSpec, pairs: &[(usize, usize)], grid: usize) -> Vec<(f64, f64)> {
    pairs.iter().map(|&(c, c2)| scan_pair(layer, c, c2, grid)).collect()
}

pub fn check_extremality(layer: &InferenceLayerSpec, grid: usize, pairs: PairSelection) -> Result<ExtremalityReport> {
    if grid < 3 {
        return invalid("grid needs at least 3 points");
    }
    let n = layer.rows.len();
    let argmax: Vec<Option<usize>> = (0..n).map(|c| strict_argmax(&layer.endpoint(c))).collect();
    let tied = argmax.iter().filter(|a| a.is_none()).count();
    let mut warnings = Vec::new();
    if tied > 0 {
        warnings.push(format!("{tied} worlds have tied argmax labels; their pairs are ineligible"));
    }
    let mut eligible = Vec::new();
    for c in 0..n {
        for c2 in c + 1..n {
            if let (Some(a), Some(b)) = (argmax[c], argmax[c2]) {
                if a != b {
                    eligible.push((c, c2));
                }
            }
        }
    }
    let total = eligible.len();
    if let PairSelection::Sample { n: want, seed } = pairs {
        if want < total {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, total, want).into_vec();
            idx.sort_unstable();
            eligible = idx.into_iter().map(|i| eligible[i]).collect();
        }
    }
    if eligible.is_empty() {
        warnings.push("vacuously satisfied: no eligible pair".into());
        return Ok(ExtremalityReport {
            satisfied: true,
            vacuous: true,
            worst_violation: None,
            worst_pair: None,
            pairs_scanned: 0,
            eligible_pairs: total,
            grid_points: grid,
            strict_pairs: 0,
            boundary_pairs: 0,
            violated_pairs: 0,
            fraction_satisfied: 1.0,
            tied_worlds: tied,
            warnings,
        });
    }
    let results = scan_all(layer, &eligible, grid);
    let (mut strict, mut boundary, mut violated) = (0, 0, 0);
    let mut worst = (f64::NEG_INFINITY, 0usize, 0.0);
    for (i, &(v, l)) in results.iter().enumerate() {
        if v > VIOLATION_TOL {
            violated += 1;
        } else if v >= -VIOLATION_TOL {
            boundary += 1;
        } else {
            strict += 1;
        }
        if v > worst.0 {
            worst = (v, i, l);
        }
    }
    let (c, c2) = eligible[worst.1];
    Ok(ExtremalityReport {
        satisfied: violated == 0,
        vacuous: false,
        worst_violation: Some(worst.0),
        worst_pair: Some(WorstPair {
            c: layer.space.world_at(c),
            c2: layer.space.world_at(c2),
            lambda: worst.2,
        }),
        pairs_scanned: eligible.len(),
        eligible_pairs: total,
        grid_points: grid,
        strict_pairs: strict,
        boundary_pairs: boundary,
        violated_pairs: violated,
        fraction_satisfied: (strict + boundary) as f64 / eligible.len() as f64,
        tied_worlds: tied,
        warnings,
    })
}

/// Every row has a label beating the others by `ln M` while the others
/// stay within `ln M` of each other.
pub fn is_logm_deterministic(rows: &[Vec<f64>], m: f64) -> Result<bool> {
    let labels = rows.first().map_or(0, |r| r.len());
    if !(m > labels.saturating_sub(1) as f64) {
        return invalid(format!("M = {m} must exceed |Y| - 1 = {}", labels.saturating_sub(1)));
    }
    let lm = m.ln();
    Ok(rows.iter().all(|w| {
        (0..w.len()).any(|y| {
            let others = (0..w.len()).filter(|&o| o != y);
            let gap = others.clone().all(|o| w[y] - w[o] >= lm);
            let spread = others.clone().all(|a| others.clone().all(|b| (w[a] - w[b]).abs() <= lm));
            gap && spread
        })
    }))
}

/// Lower bound on the max label probability of a log(M)-deterministic
/// softmax layer.
pub fn min_max_prob_bound(m: f64, labels: u32) -> Result<f64> {
    if labels == 0 {
        return invalid("label count must be positive");
    }
    if !(m > (labels - 1) as f64) {
        return invalid(format!("M = {m} must exceed |Y| - 1 = {}", labels - 1));
    }
    Ok(1.0 / (1.0 + (labels - 1) as f64 / m))
}

/// Max label probability of every world's point mass.
pub fn max_probabilities(layer: &InferenceLayerSpec) -> Vec<f64> {
    (0..layer.rows.len()).map(|c| max_of(&layer.endpoint(c))).collect()
}
