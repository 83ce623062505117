//! Exact counting of admissible α's, RSs and JRSs.

pub(crate) mod factored;
pub mod naive;
pub(crate) mod problem;
pub(crate) mod search;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::intended::{tally, witness_count, SubtrahendPolicy, WitnessTally, DEFAULT_WITNESS_CAP};
use crate::maps::{intended_pair_count, AlphaMap, BetaMap};
use crate::mitigations::{conjoin_multitask, MitigationSet};
use crate::task::TaskSpec;
use problem::Problem;

pub use naive::{naive_count_pairs, NaiveCounts, DEFAULT_NAIVE_BUDGET};

pub const DEFAULT_NODE_BUDGET: u64 = 2_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Rs,
    Jrs,
    JrsNonredundant,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rs" => Some(Mode::Rs),
            "jrs" => Some(Mode::Jrs),
            "jrs-nonredundant" => Some(Mode::JrsNonredundant),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Rs => "rs",
            Mode::Jrs => "jrs",
            Mode::JrsNonredundant => "jrs-nonredundant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Auto,
    Naive,
    Pruned,
    Factored,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Method::Auto),
            "naive" => Some(Method::Naive),
            "pruned" => Some(Method::Pruned),
            "factored" => Some(Method::Factored),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::Naive => "naive",
            Method::Pruned => "pruned",
            Method::Factored => "factored",
        }
    }
}

/// How leaf tallies are turned into totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    BigInt,
    /// Native 128-bit arithmetic with overflow checks.
    CheckedU128,
}

#[derive(Debug, Clone)]
pub struct CountOptions {
    pub mode: Mode,
    pub method: Method,
    pub workers: usize,
    /// Node budget (pruned) or pair budget (naive).
    pub budget: Option<u64>,
    pub subtrahend: SubtrahendPolicy,
    pub witness_cap: u64,
    pub arithmetic: Arithmetic,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            mode: Mode::Jrs,
            method: Method::Auto,
            workers: default_workers(),
            budget: None,
            subtrahend: SubtrahendPolicy::Auto,
            witness_cap: DEFAULT_WITNESS_CAP,
            arithmetic: Arithmetic::BigInt,
        }
    }
}

impl CountOptions {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_subtrahend(mut self, policy: SubtrahendPolicy) -> Self {
        self.subtrahend = policy;
        self
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Formula the subtrahend came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubtrahendFormula {
    /// The single pair (id, β*).
    Identity,
    ShortcutAware,
    Representable,
    ClosedForm,
}

impl SubtrahendFormula {
    pub fn as_str(&self) -> &'static str {
        match self {
            SubtrahendFormula::Identity => "identity",
            SubtrahendFormula::ShortcutAware => "shortcut-aware",
            SubtrahendFormula::Representable => "representable",
            SubtrahendFormula::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtrahend {
    pub formula: SubtrahendFormula,
    pub redundant: BigUint,
    pub nonredundant: BigUint,
    pub witnesses: Option<WitnessTally>,
}

#[derive(Debug, Clone)]
pub struct CountReport {
    pub task_digest: String,
    pub mode: Mode,
    pub method: Method,
    pub workers: usize,
    pub exact: bool,
    /// Optimal pairs before subtraction, every β cell counted (JRS modes).
    pub optimal_pairs: Option<BigUint>,
    /// α's admitting an optimal β; in RS mode, α's optimal with β*.
    pub admissible_alpha_count: BigUint,
    pub rs_admissible: BigUint,
    pub rs_count: BigInt,
    pub jrs_count_redundant: Option<BigInt>,
    pub jrs_count_nonredundant: Option<BigInt>,
    pub subtrahend: Subtrahend,
    /// C[G] for reference.
    pub intended_pair_count: BigUint,
    pub nodes: u64,
    pub elapsed: Duration,
    pub warnings: Vec<String>,
}

impl CountReport {
    /// The count the mode asks for.
    pub fn headline(&self) -> BigInt {
        match self.mode {
            Mode::Rs => self.rs_count.clone(),
            Mode::Jrs => self.jrs_count_redundant.clone().unwrap_or_default(),
            Mode::JrsNonredundant => self.jrs_count_nonredundant.clone().unwrap_or_default(),
        }
    }

    pub fn to_json(&self, timing: bool) -> Value {
        let s = |x: &BigUint| Value::String(x.to_string());
        let si = |x: &BigInt| Value::String(x.to_string());
        let mut v = json!({
            "task_digest": self.task_digest,
            "mode": self.mode.as_str(),
            "method": self.method.as_str(),
            "workers": self.workers,
            "exact": self.exact,
            "admissible_alpha_count": s(&self.admissible_alpha_count),
            "rs_count": si(&self.rs_count),
            "optimal_pairs": self.optimal_pairs.as_ref().map(s),
            "jrs_count_redundant": self.jrs_count_redundant.as_ref().map(si),
            "jrs_count_nonredundant": self.jrs_count_nonredundant.as_ref().map(si),
            "intended_subtrahend": {
                "formula": self.subtrahend.formula.as_str(),
                "redundant": s(&self.subtrahend.redundant),
                "nonredundant": s(&self.subtrahend.nonredundant),
                "rs_with_witness": self.subtrahend.witnesses.as_ref().map(|w| w.rs_intended.to_string()),
            },
            "intended_pair_count": s(&self.intended_pair_count),
            "nodes": self.nodes,
            "warnings": self.warnings,
        });
        if timing {
            v["elapsed_ms"] = json!(self.elapsed.as_secs_f64() * 1e3);
        }
        v
    }

    pub fn to_table(&self, timing: bool) -> String {
        let mut rows: Vec<(&str, String)> = vec![
            ("task", self.task_digest[..16].to_string()),
            ("mode", self.mode.as_str().into()),
            ("method", self.method.as_str().into()),
            ("workers", self.workers.to_string()),
            ("exact", self.exact.to_string()),
            ("admissible alphas", self.admissible_alpha_count.to_string()),
            ("rs count", self.rs_count.to_string()),
        ];
        if let Some(p) = &self.optimal_pairs {
            rows.push(("optimal pairs", p.to_string()));
        }
        if let Some(j) = &self.jrs_count_redundant {
            rows.push(("jrs (redundant)", j.to_string()));
        }
        if let Some(j) = &self.jrs_count_nonredundant {
            rows.push(("jrs (non-redundant)", j.to_string()));
        }
        rows.push(("subtrahend", self.subtrahend.formula.as_str().into()));
        rows.push(("  redundant", self.subtrahend.redundant.to_string()));
        rows.push(("  non-redundant", self.subtrahend.nonredundant.to_string()));
        if let Some(w) = &self.subtrahend.witnesses {
            rows.push(("rs with witness", w.rs_intended.to_string()));
        }
        rows.push(("C[G]", self.intended_pair_count.to_string()));
        rows.push(("nodes", self.nodes.to_string()));
        if timing {
            rows.push(("elapsed", format!("{:.3} ms", self.elapsed.as_secs_f64() * 1e3)));
        }
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<22}{v}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

struct Totals {
    optimal_pairs: BigUint,
    admissible: BigUint,
    rs_admissible: BigUint,
    nodes: u64,
    exact: bool,
}

fn checked_pow(b: u128, e: u64) -> Option<u128> {
    (0..e).try_fold(1u128, |acc, _| acc.checked_mul(b))
}

fn pruned_totals(p: &Problem, opts: &CountOptions, warnings: &mut Vec<String>) -> Result<Totals> {
    let budget = opts.budget.unwrap_or(DEFAULT_NODE_BUDGET);
    let out = search::run(p, opts.workers, Some(budget));
    if !out.complete {
        warnings.push(format!("node budget {budget} exhausted; counts are lower bounds"));
    }
    let t = &out.tally;
    let entries = t.hist.entries();
    let (pairs, adm, rs) = match opts.arithmetic {
        Arithmetic::BigInt => {
            let mult = p.irrelevant_multiplier();
            let mut pairs = BigUint::zero();
            for (key, n) in &entries {
                let mut w = BigUint::from(*n);
                for (j, f) in search::decode_key(p, *key).into_iter().enumerate() {
                    w *= BigUint::from(p.comps[j].labels).pow(f as u32);
                }
                pairs += w;
            }
            (pairs * &mult, BigUint::from(t.leaves) * &mult, BigUint::from(t.rs_leaves) * mult)
        }
        Arithmetic::CheckedU128 => {
            let overflow = || Error::Validation("128-bit overflow while aggregating counts".into());
            let rel = p.relevant();
            let mult = p
                .elements
                .iter()
                .zip(&rel)
                .filter(|(_, &r)| !r)
                .try_fold(1u128, |acc, (e, _)| acc.checked_mul(e.candidates.len() as u128))
                .ok_or_else(overflow)?;
            let mut pairs = 0u128;
            for (key, n) in &entries {
                let mut w = *n as u128;
                for (j, f) in search::decode_key(p, *key).into_iter().enumerate() {
                    let pw = checked_pow(p.comps[j].labels as u128, f).ok_or_else(overflow)?;
                    w = w.checked_mul(pw).ok_or_else(overflow)?;
                }
                pairs = pairs.checked_add(w).ok_or_else(overflow)?;
            }
            let pairs = pairs.checked_mul(mult).ok_or_else(overflow)?;
            let adm = (t.leaves as u128).checked_mul(mult).ok_or_else(overflow)?;
            let rs = (t.rs_leaves as u128).checked_mul(mult).ok_or_else(overflow)?;
            (BigUint::from(pairs), BigUint::from(adm), BigUint::from(rs))
        }
    };
    Ok(Totals {
        optimal_pairs: pairs,
        admissible: adm,
        rs_admissible: rs,
        nodes: t.nodes,
        exact: out.complete,
    })
}

fn resolve_method(p: &Problem, requested: Method) -> Result<Method> {
    match requested {
        Method::Auto if factored::applicable(p) => Ok(Method::Factored),
        Method::Auto => Ok(Method::Pruned),
        Method::Factored if !factored::applicable(p) => {
            invalid("factored method needs a joint family without supervision or extra tasks")
        }
        m => Ok(m),
    }
}

fn subtrahend(
    task: &TaskSpec,
    p: &Problem,
    ms: &MitigationSet,
    opts: &CountOptions,
    warnings: &mut Vec<String>,
) -> Result<Subtrahend> {
    let closed = || {
        let c = intended_pair_count(&task.space);
        Subtrahend {
            formula: SubtrahendFormula::ClosedForm,
            redundant: c.clone(),
            nonredundant: c,
            witnesses: None,
        }
    };
    if opts.subtrahend == SubtrahendPolicy::ClosedForm {
        return Ok(closed());
    }
    match tally(p, &task.family, opts.witness_cap) {
        Some(w) => {
            let (formula, r, n) = match opts.subtrahend {
                SubtrahendPolicy::Representable => (
                    SubtrahendFormula::Representable,
                    w.representable_redundant,
                    w.representable_nonredundant,
                ),
                _ => (
                    SubtrahendFormula::ShortcutAware,
                    w.shortcut_aware_redundant,
                    w.shortcut_aware_nonredundant,
                ),
            };
            Ok(Subtrahend {
                formula,
                redundant: r.into(),
                nonredundant: n.into(),
                witnesses: Some(w),
            })
        }
        None => {
            let wc = witness_count(&task.space, &task.family);
            if opts.subtrahend == SubtrahendPolicy::Auto && task.family.is_joint() && ms.is_empty() {
                warnings.push(format!(
                    "{wc} witnesses exceed the cap {}; subtracting the closed form C[G]",
                    opts.witness_cap
                ));
                Ok(closed())
            } else {
                Err(Error::BudgetExceeded(format!(
                    "{wc} witnesses exceed the enumeration cap {}",
                    opts.witness_cap
                )))
            }
        }
    }
}

fn sub_signed(a: &BigUint, b: &BigUint, what: &str, warnings: &mut Vec<String>) -> BigInt {
    let v = BigInt::from(a.clone()) - BigInt::from(b.clone());
    if v.is_negative() {
        warnings.push(format!("{what} is negative ({v}): the subtrahend exceeds the pair count"));
    }
    v
}

/// Counts under `ms` according to `opts.mode`.
pub fn count_with_mitigations(task: &TaskSpec, ms: &MitigationSet, opts: &CountOptions) -> Result<CountReport> {
    let start = Instant::now();
    let task = conjoin_multitask(task, ms)?;
    let rs_mode = opts.mode == Mode::Rs;
    let p = Problem::build(&task, ms, rs_mode)?;
    let method = resolve_method(&p, opts.method)?;
    let mut warnings = Vec::new();

    let totals = match method {
        Method::Naive => {
            let c = naive_count_pairs(&task, ms, opts.budget.unwrap_or(DEFAULT_NAIVE_BUDGET))?;
            let adm = if rs_mode { c.rs_alphas.clone() } else { c.admissible_alphas };
            Totals {
                optimal_pairs: if rs_mode { c.rs_alphas.clone() } else { c.optimal_pairs },
                admissible: adm,
                rs_admissible: c.rs_alphas,
                nodes: 0,
                exact: true,
            }
        }
        Method::Factored => {
            let f = factored::count(&p)?;
            Totals {
                optimal_pairs: f.optimal_pairs,
                admissible: f.admissible,
                rs_admissible: f.rs_admissible,
                nodes: 0,
                exact: true,
            }
        }
        _ => pruned_totals(&p, opts, &mut warnings)?,
    };

    let rs_count = sub_signed(&totals.rs_admissible, &BigUint::one(), "rs count", &mut warnings);
    let (subtrahend, jr, jn, pairs) = if rs_mode {
        let s = Subtrahend {
            formula: SubtrahendFormula::Identity,
            redundant: BigUint::one(),
            nonredundant: BigUint::one(),
            witnesses: None,
        };
        (s, None, None, None)
    } else {
        let s = subtrahend(&task, &p, ms, opts, &mut warnings)?;
        let jr = sub_signed(&totals.optimal_pairs, &s.redundant, "redundant jrs count", &mut warnings);
        let jn = sub_signed(&totals.admissible, &s.nonredundant, "non-redundant jrs count", &mut warnings);
        (s, Some(jr), Some(jn), Some(totals.optimal_pairs))
    };

    Ok(CountReport {
        task_digest: task.digest(),
        mode: opts.mode,
        method,
        workers: opts.workers,
        exact: totals.exact,
        optimal_pairs: pairs,
        admissible_alpha_count: totals.admissible,
        rs_admissible: totals.rs_admissible,
        rs_count,
        jrs_count_redundant: jr,
        jrs_count_nonredundant: jn,
        subtrahend,
        intended_pair_count: intended_pair_count(&task.space),
        nodes: totals.nodes,
        elapsed: start.elapsed(),
        warnings,
    })
}

pub fn count_rs(task: &TaskSpec, opts: &CountOptions) -> Result<CountReport> {
    count_with_mitigations(task, &MitigationSet::none(), &opts.clone().with_mode(Mode::Rs))
}

pub fn count_jrs(task: &TaskSpec, redundant: bool, opts: &CountOptions) -> Result<CountReport> {
    let mode = if redundant { Mode::Jrs } else { Mode::JrsNonredundant };
    count_with_mitigations(task, &MitigationSet::none(), &opts.clone().with_mode(mode))
}

/// An admissible α with the β cells it forces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimalAlpha {
    pub alpha: AlphaMap,
    pub beta: BetaMap,
    /// Forced β of each extra-task component.
    pub extra_betas: Vec<BetaMap>,
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub entries: Vec<OptimalAlpha>,
    pub truncated: bool,
}

/// Up to `limit` admissible α's, identity-offset encoding order.
pub fn enumerate_optimal_alphas(task: &TaskSpec, ms: &MitigationSet, limit: usize) -> Result<Enumeration> {
    if limit == 0 {
        return invalid("limit must be at least 1");
    }
    let task = conjoin_multitask(task, ms)?;
    let p = Problem::build(&task, ms, false)?;
    let (found, truncated) = search::enumerate(&p, limit);
    let entries = found
        .into_iter()
        .map(|f| {
            let alpha = if p.joint {
                AlphaMap::Joint(f.assign.iter().map(|&c| c as usize).collect())
            } else {
                let groups = task.family.groups().unwrap();
                let tables = groups
                    .iter()
                    .enumerate()
                    .map(|(gi, g)| {
                        let off = p.group_offset[gi];
                        f.assign[off..off + task.space.cardinality(g[0]) as usize].to_vec()
                    })
                    .collect();
                AlphaMap::factored(&task.space, &task.family, tables).unwrap()
            };
            let mut betas = f
                .betas
                .into_iter()
                .zip(&p.comps)
                .map(|(cells, c)| BetaMap::new(c.labels, cells).unwrap());
            let beta = betas.next().unwrap();
            OptimalAlpha {
                alpha,
                beta,
                extra_betas: betas.collect(),
            }
        })
        .collect();
    Ok(Enumeration { entries, truncated })
}

/// Decimal rendering of an α table: one line per world.
pub fn render_alpha(task: &TaskSpec, alpha: &AlphaMap) -> Vec<String> {
    let space = &task.space;
    (0..space.size())
        .map(|g| format!("{} -> {}", space.world_at(g), space.world_at(alpha.image_index(space, g))))
        .collect()
}

impl Enumeration {
    pub fn to_json(&self, task: &TaskSpec) -> Value {
        let space = &task.space;
        let entries: Vec<Value> = self
            .entries
            .iter()
            .map(|e| {
                let alpha: Vec<Value> = (0..space.size())
                    .map(|g| json!([space.world_at(g).0, space.world_at(e.alpha.image_index(space, g)).0]))
                    .collect();
                let beta: Vec<Value> = e
                    .beta
                    .cells()
                    .iter()
                    .enumerate()
                    .filter_map(|(c, y)| y.map(|y| json!([space.world_at(c).0, y])))
                    .collect();
                json!({ "alpha": alpha, "beta": beta, "free_cells": e.beta.free_cells() })
            })
            .collect();
        json!({
            "task_digest": task.digest(),
            "count": self.entries.len(),
            "truncated": self.truncated,
            "entries": entries,
        })
    }
}
