//! Post-hoc evaluation of prediction dumps: correlation matrix, concept and
//! value alignment, concept collapse and macro-F1 scores.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::hungarian;
use crate::maps::BetaMap;
use crate::task::{ConceptSpace, TaskSpec, World};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    pub g: World,
    pub c: World,
    pub y: u32,
    pub yhat: u32,
}

#[derive(Debug, Clone)]
pub struct PredictionDump {
    space: ConceptSpace,
    labels: u32,
    rows: Vec<PredictionRow>,
}

impl PredictionDump {
    pub fn new(space: ConceptSpace, labels: u32, rows: Vec<PredictionRow>) -> Result<Self> {
        if rows.is_empty() {
            return invalid("prediction dump is empty");
        }
        for (i, r) in rows.iter().enumerate() {
            if !space.contains(&r.g) || !space.contains(&r.c) {
                return invalid(format!("row {i}: world out of range"));
            }
            if r.y >= labels || r.yhat >= labels {
                return invalid(format!("row {i}: label out of range"));
            }
        }
        Ok(PredictionDump { space, labels, rows })
    }

    /// CSV with header `g_1..g_k,c_1..c_k,y,yhat`.
    pub fn from_csv<R: Read>(reader: R, task: &TaskSpec) -> Result<Self> {
        let k = task.space.k();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Malformed(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let expected: Vec<String> = (1..=k)
            .map(|i| format!("g_{i}"))
            .chain((1..=k).map(|i| format!("c_{i}")))
            .chain(["y".to_string(), "yhat".to_string()])
            .collect();
        if header != expected {
            return Err(Error::Malformed(format!("dump header must be `{}`", expected.join(","))));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
            let v: Vec<u32> = rec
                .iter()
                .map(|x| x.parse().map_err(|_| Error::Malformed(format!("bad dump cell `{x}`"))))
                .collect::<Result<_>>()?;
            rows.push(PredictionRow {
                g: World(v[..k].to_vec()),
                c: World(v[k..2 * k].to_vec()),
                y: v[2 * k],
                yhat: v[2 * k + 1],
            });
        }
        Self::new(task.space.clone(), task.label_count(), rows)
    }

    pub fn space(&self) -> &ConceptSpace {
        &self.space
    }

    pub fn labels(&self) -> u32 {
        self.labels
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    fn gt(&self, a: usize) -> Vec<u32> {
        self.rows.iter().map(|r| r.g.0[a]).collect()
    }

    fn pred(&self, i: usize) -> Vec<u32> {
        self.rows.iter().map(|r| r.c.0[i]).collect()
    }
}

/// Sample Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[u32], y: &[u32]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a as f64 - mx, b as f64 - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrMatrix {
    /// `values[i][j] = corr(G_i, C_j)` on raw value indices.
    pub values: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub fn pearson_corr_matrix(dump: &PredictionDump) -> CorrMatrix {
    let k = dump.space.k();
    let mut warnings = BTreeSet::new();
    let gts: Vec<Vec<u32>> = (0..k).map(|a| dump.gt(a)).collect();
    let preds: Vec<Vec<u32>> = (0..k).map(|i| dump.pred(i)).collect();
    let values = (0..k)
        .map(|a| {
            (0..k)
                .map(|j| {
                    pearson(&gts[a], &preds[j]).unwrap_or_else(|| {
                        warnings.insert(format!("zero variance in g_{} or c_{}; correlation set to 0", a + 1, j + 1));
                        0.0
                    })
                })
                .collect()
        })
        .collect();
    CorrMatrix {
        values,
        warnings: warnings.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    /// Predicted concept `i` reads ground-truth concept `pi[i]`.
    pub pi: Vec<usize>,
    /// `c_i = psi[i][g_{pi[i]}]`.
    pub psi: Vec<Vec<u32>>,
    pub objective: f64,
}

impl AlignmentResult {
    pub fn identity(space: &ConceptSpace) -> Self {
        AlignmentResult {
            pi: (0..space.k()).collect(),
            psi: space.cardinalities().into_iter().map(|c| (0..c).collect()).collect(),
            objective: 0.0,
        }
    }

    pub fn apply(&self, g: &World) -> World {
        World(self.pi.iter().zip(&self.psi).map(|(&a, p)| p[g.0[a] as usize]).collect())
    }
}

/// Value bijection `u -> v` maximizing co-occurrence of `g_a = u`, `c_i = v`.
fn value_alignment(gt: &[u32], pred: &[u32], card: u32) -> Vec<u32> {
    let n = card as usize;
    let mut t = vec![vec![0.0; n]; n];
    for (&u, &v) in gt.iter().zip(pred) {
        t[u as usize][v as usize] += 1.0;
    }
    hungarian::solve_max(&t)
        .expect("square finite matrix")
        .into_iter()
        .map(|v| v as u32)
        .collect()
}

/// Concept-level matching on |correlation| between each ground-truth
/// concept and each predicted concept once the predicted values are mapped
/// back through their best value bijection, then value-level matching on
/// contingency counts.
pub fn hungarian_align(dump: &PredictionDump) -> Result<AlignmentResult> {
    let k = dump.space.k();
    let cards = dump.space.cardinalities();
    let gts: Vec<Vec<u32>> = (0..k).map(|a| dump.gt(a)).collect();
    let preds: Vec<Vec<u32>> = (0..k).map(|i| dump.pred(i)).collect();
    let mut weight = vec![vec![f64::NEG_INFINITY; k]; k];
    let mut psis = vec![vec![Vec::new(); k]; k];
    for i in 0..k {
        for a in 0..k {
            if cards[a] != cards[i] {
                continue;
            }
            let psi = value_alignment(&gts[a], &preds[i], cards[i]);
            let mut inv = vec![0u32; psi.len()];
            for (u, &v) in psi.iter().enumerate() {
                inv[v as usize] = u as u32;
            }
            let back: Vec<u32> = preds[i].iter().map(|&v| inv[v as usize]).collect();
            weight[i][a] = pearson(&gts[a], &back).map_or(0.0, f64::abs);
            psis[i][a] = psi;
        }
    }
    let pi = hungarian::solve_max(&weight)
        .ok_or_else(|| Error::Validation("no cardinality-compatible concept matching".into()))?;
    let objective = pi.iter().enumerate().map(|(i, &a)| weight[i][a]).sum();
    let psi = pi.iter().enumerate().map(|(i, &a)| psis[i][a].clone()).collect();
    Ok(AlignmentResult { pi, psi, objective })
}

/// `1 - distinct predicted worlds / total worlds`.
pub fn concept_collapse(dump: &PredictionDump) -> f64 {
    let distinct: BTreeSet<&World> = dump.rows.iter().map(|r| &r.c).collect();
    let m = dump.space.size() as f64;
    1.0 - distinct.len() as f64 / m
}

/// Macro-F1 over the classes occurring in either sequence.
pub fn macro_f1(truth: &[u32], pred: &[u32]) -> f64 {
    let classes: BTreeSet<u32> = truth.iter().chain(pred).copied().collect();
    if classes.is_empty() {
        return 1.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&k| {
            let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
            for (&t, &p) in truth.iter().zip(pred) {
                match (t == k, p == k) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    _ => {}
                }
            }
            2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
        })
        .sum();
    total / classes.len() as f64
}

/// Mean over concepts of macro-F1 between the aligned ground truth and the
/// predictions.
pub fn aligned_concept_f1(dump: &PredictionDump, al: &AlignmentResult) -> f64 {
    let k = dump.space.k();
    let mapped: Vec<World> = dump.rows.iter().map(|r| al.apply(&r.g)).collect();
    (0..k)
        .map(|i| {
            let t: Vec<u32> = mapped.iter().map(|w| w.0[i]).collect();
            macro_f1(&t, &dump.pred(i))
        })
        .sum::<f64>()
        / k as f64
}

pub fn label_f1(dump: &PredictionDump) -> f64 {
    let y: Vec<u32> = dump.rows.iter().map(|r| r.y).collect();
    let yh: Vec<u32> = dump.rows.iter().map(|r| r.yhat).collect();
    macro_f1(&y, &yh)
}

/// Macro-F1 of `β((ψ ∘ P_π)(g))` against the true labels.
pub fn eval_beta_f1(dump: &PredictionDump, beta: &BetaMap, al: &AlignmentResult) -> Result<f64> {
    let space = &dump.space;
    if beta.cells().len() != space.size() {
        return invalid("beta does not cover the concept space");
    }
    let mut missing = BTreeSet::new();
    let mut pred = Vec::with_capacity(dump.rows.len());
    for r in &dump.rows {
        let c = al.apply(&r.g);
        match beta.cell(space.index_of(&c)) {
            Some(y) => pred.push(y),
            None => {
                missing.insert(c.to_string());
            }
        }
    }
    if !missing.is_empty() {
        return invalid(format!(
            "beta is free on required worlds: {}",
            missing.into_iter().collect::<Vec<_>>().join(" ")
        ));
    }
    let y: Vec<u32> = dump.rows.iter().map(|r| r.y).collect();
    Ok(macro_f1(&y, &pred))
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub rows: usize,
    pub f1_y: f64,
    pub f1_c: f64,
    pub cls_c: f64,
    pub f1_beta: Option<f64>,
    pub alignment: AlignmentResult,
    pub pearson: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub fn evaluate(dump: &PredictionDump, beta: Option<&BetaMap>) -> Result<MetricsReport> {
    let corr = pearson_corr_matrix(dump);
    let alignment = hungarian_align(dump)?;
    let f1_beta = beta.map(|b| eval_beta_f1(dump, b, &alignment)).transpose()?;
    Ok(MetricsReport {
        rows: dump.rows.len(),
        f1_y: label_f1(dump),
        f1_c: aligned_concept_f1(dump, &alignment),
        cls_c: concept_collapse(dump),
        f1_beta,
        alignment,
        pearson: corr.values,
        warnings: corr.warnings,
    })
}

impl MetricsReport {
    pub fn to_json(&self, digest: &str) -> Value {
        json!({
            "task_digest": digest,
            "rows": self.rows,
            "f1_y": self.f1_y,
            "f1_c": self.f1_c,
            "cls_c": self.cls_c,
            "f1_beta": self.f1_beta,
            "alignment": self.alignment,
            "pearson": self.pearson,
            "warnings": self.warnings,
        })
    }

    pub fn to_table(&self, digest: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{}", "task", &digest[..16]);
        let _ = writeln!(out, "{:<12}{}", "rows", self.rows);
        let _ = writeln!(out, "{:<12}{:.6}", "F1(Y)", self.f1_y);
        let _ = writeln!(out, "{:<12}{:.6}", "F1(C)", self.f1_c);
        let _ = writeln!(out, "{:<12}{:.6}", "Cls(C)", self.cls_c);
        match self.f1_beta {
            Some(f) => {
                let _ = writeln!(out, "{:<12}{f:.6}", "F1(beta)");
            }
            None => {
                let _ = writeln!(out, "{:<12}-", "F1(beta)");
            }
        }
        let _ = writeln!(out, "{:<12}{:?}", "pi", self.alignment.pi);
        for (i, p) in self.alignment.psi.iter().enumerate() {
            let _ = writeln!(out, "{:<12}{:?}", format!("psi_{}", i + 1), p);
        }
        let _ = writeln!(out, "{:<12}{:.6}", "objective", self.alignment.objective);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::AlphaFamily;

    fn dump_from(space: &ConceptSpace, pairs: Vec<(Vec<u32>, Vec<u32>)>) -> PredictionDump {
        let rows = pairs
            .into_iter()
            .map(|(g, c)| PredictionRow {
                g: World(g),
                c: World(c),
                y: 0,
                yhat: 0,
            })
            .collect();
        PredictionDump::new(space.clone(), 1, rows).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let s = ConceptSpace::from_cardinalities(&[3, 3]).unwrap();
        let ws: Vec<Vec<u32>> = s.worlds().map(|w| w.0).collect();
        let same = dump_from(&s, ws.iter().map(|w| (w.clone(), w.clone())).collect());
        let r = pearson_corr_matrix(&same);
        assert!((r.values[0][0] - 1.0).abs() < 1e-12 && (r.values[1][1] - 1.0).abs() < 1e-12);
        let swapped = dump_from(&s, ws.iter().map(|w| (w.clone(), vec![w[1], w[0]])).collect());
        let r = pearson_corr_matrix(&swapped);
        assert!((r.values[0][1] - 1.0).abs() < 1e-12 && (r.values[1][0] - 1.0).abs() < 1e-12);
        let constant = dump_from(&s, ws.iter().map(|w| (w.clone(), vec![w[0], 0])).collect());
        let r = pearson_corr_matrix(&constant);
        assert_eq!(r.values[0][1], 0.0);
        assert_eq!(r.values[1][1], 0.0);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn planted_swap_and_reversal() {
        let s = ConceptSpace::from_cardinalities(&[4, 4]).unwrap();
        let all: Vec<World> = s.worlds().collect();
        let pairs = all
            .into_iter()
            .cycle()
            .take(500)
            .map(|w| {
                let c = vec![w.0[1], 3 - w.0[0]];
                (w.0, c)
            })
            .collect();
        let d = dump_from(&s, pairs);
        let al = hungarian_align(&d).unwrap();
        assert_eq!(al.pi, vec![1, 0]);
        assert_eq!(al.psi, vec![vec![0, 1, 2, 3], vec![3, 2, 1, 0]]);
        assert!((aligned_concept_f1(&d, &al) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_cases() {
        let s = ConceptSpace::from_cardinalities(&[2, 2]).unwrap();
        let d = dump_from(&s, vec![(vec![0, 0], vec![0, 0]), (vec![1, 1], vec![1, 1]), (vec![0, 1], vec![0, 0])]);
        assert_eq!(concept_collapse(&d), 0.5);
        let all = dump_from(&s, s.worlds().map(|w| (w.0.clone(), w.0)).collect());
        assert_eq!(concept_collapse(&all), 0.0);
        let s16 = ConceptSpace::from_cardinalities(&[2, 2, 2, 2]).unwrap();
        let one = dump_from(&s16, vec![(vec![0, 1, 0, 1], vec![1, 1, 1, 1]); 5]);
        assert_eq!(concept_collapse(&one), 0.9375);
    }

    #[test]
    fn macro_f1_arithmetic() {
        let truth = [0, 1, 0, 1];
        assert!((macro_f1(&truth, &[0, 0, 0, 0]) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(macro_f1(&truth, &truth), 1.0);
    }

    #[test]
    fn beta_scores() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::tied(2)).unwrap();
        let rows = t
            .space
            .worlds()
            .map(|w| {
                let y = t.knowledge.label_of(&t.space, &w);
                PredictionRow {
                    g: w.clone(),
                    c: w,
                    y,
                    yhat: y,
                }
            })
            .collect();
        let d = PredictionDump::new(t.space.clone(), 2, rows).unwrap();
        let id = AlignmentResult::identity(&t.space);
        assert_eq!(eval_beta_f1(&d, &BetaMap::from_knowledge(&t.knowledge), &id).unwrap(), 1.0);
        let constant = BetaMap::new(2, vec![Some(0); 4]).unwrap();
        assert!((eval_beta_f1(&d, &constant, &id).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let partial = BetaMap::new(2, vec![Some(0), None, Some(1), Some(0)]).unwrap();
        let err = eval_beta_f1(&d, &partial, &id).unwrap_err().to_string();
        assert!(err.contains("(0,1)"), "{err}");
    }

    #[test]
    fn csv_dump() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::tied(2)).unwrap();
        let text = "g_1,g_2,c_1,c_2,y,yhat\n0,1,0,1,1,1\n1,1,0,0,0,0\n";
        let d = PredictionDump::from_csv(text.as_bytes(), &t).unwrap();
        assert_eq!(d.rows().len(), 2);
        assert!(PredictionDump::from_csv("a,b\n".as_bytes(), &t).is_err());
        assert!(PredictionDump::from_csv("g_1,g_2,c_1,c_2,y,yhat\n0,1,0,1,1,7\n".as_bytes(), &t).is_err());
    }
}
