//! One-hot CNF encoding of the optimal-pair constraints, DIMACS I/O and two
//! projected model counters (exhaustive and DPLL with component caching).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::engine::problem::Problem;
use crate::error::{invalid, Error, Result};
use crate::maps::{AlphaMap, BetaMap};
use crate::mitigations::{conjoin_multitask, MitigationSet};
use crate::task::{TaskSpec, World};

pub const EXHAUSTIVE_VAR_LIMIT: usize = 24;
pub const DEFAULT_COUNT_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnfTarget {
    OptimalPairs,
    OptimalAlphas,
}

impl CnfTarget {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optimal_pairs" | "optimal-pairs" => Some(CnfTarget::OptimalPairs),
            "optimal_alphas" | "optimal-alphas" => Some(CnfTarget::OptimalAlphas),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CnfTarget::OptimalPairs => "optimal_pairs",
            CnfTarget::OptimalAlphas => "optimal_alphas",
        }
    }
}

/// What a variable selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarRole {
    /// Joint α: world ↦ image world.
    AlphaWorld { world: World, image: World },
    /// Factorized α: value ↦ image value inside one tie group.
    AlphaValue { group: usize, value: u32, image: u32 },
    /// β of component `component`: cell ↦ label.
    Beta { component: usize, cell: World, label: u32 },
}

impl VarRole {
    pub fn is_alpha(&self) -> bool {
        !matches!(self, VarRole::Beta { .. })
    }
}

impl fmt::Display for VarRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRole::AlphaWorld { world, image } => write!(f, "alpha {world}->{image}"),
            VarRole::AlphaValue { group, value, image } => write!(f, "alpha g{group} {value}->{image}"),
            VarRole::Beta { component, cell, label } => write!(f, "beta k{component} {cell}={label}"),
        }
    }
}

fn parse_world(s: &str) -> Option<World> {
    let inner = s.strip_prefix('(')?.strip_suffix(')')?;
    inner.split(',').map(|d| d.trim().parse().ok()).collect::<Option<Vec<u32>>>().map(World)
}

impl FromStr for VarRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Malformed(format!("bad legend role `{s}`"));
        let mut parts = s.split_whitespace();
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("alpha"), Some(g), Some(map), None) if g.starts_with('g') => {
                let group = g[1..].parse().map_err(|_| bad())?;
                let (v, u) = map.split_once("->").ok_or_else(bad)?;
                Ok(VarRole::AlphaValue {
                    group,
                    value: v.parse().map_err(|_| bad())?,
                    image: u.parse().map_err(|_| bad())?,
                })
            }
            (Some("alpha"), Some(map), None, None) => {
                let (w, c) = map.split_once("->").ok_or_else(bad)?;
                Ok(VarRole::AlphaWorld {
                    world: parse_world(w).ok_or_else(bad)?,
                    image: parse_world(c).ok_or_else(bad)?,
                })
            }
            (Some("beta"), Some(k), Some(map), None) if k.starts_with('k') => {
                let component = k[1..].parse().map_err(|_| bad())?;
                let (c, y) = map.split_once('=').ok_or_else(bad)?;
                Ok(VarRole::Beta {
                    component,
                    cell: parse_world(c).ok_or_else(bad)?,
                    label: y.parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<i32>>,
    projection: Vec<u32>,
    legend: Vec<(u32, VarRole)>,
    target: Option<CnfTarget>,
    /// Completions of dropped β cells, to multiply into the count.
    multiplier: BigUint,
}

impl CnfFormula {
    pub fn new(
        num_vars: usize,
        clauses: Vec<Vec<i32>>,
        projection: Vec<u32>,
        legend: Vec<(u32, VarRole)>,
    ) -> Result<Self> {
        let f = CnfFormula {
            num_vars,
            clauses,
            projection,
            legend,
            target: None,
            multiplier: BigUint::one(),
        };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars as u32;
        for c in &self.clauses {
            if c.is_empty() {
                return invalid("empty clause");
            }
            if c.iter().any(|&l| l == 0 || l.unsigned_abs() > n) {
                return invalid("literal references an undeclared variable");
            }
        }
        if self.projection.iter().any(|&v| v == 0 || v > n) {
            return invalid("projection variable out of range");
        }
        let named: BTreeSet<u32> = self.legend.iter().map(|(v, _)| *v).collect();
        if let Some(v) = self.projection.iter().find(|v| !named.contains(v)) {
            return invalid(format!("projection variable {v} has no legend entry"));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<i32>] {
        &self.clauses
    }

    pub fn projection(&self) -> &[u32] {
        &self.projection
    }

    pub fn legend(&self) -> &[(u32, VarRole)] {
        &self.legend
    }

    pub fn target(&self) -> Option<CnfTarget> {
        self.target
    }

    pub fn multiplier(&self) -> &BigUint {
        &self.multiplier
    }

    pub fn role(&self, var: u32) -> Option<&VarRole> {
        self.legend
            .binary_search_by_key(&var, |(v, _)| *v)
            .ok()
            .map(|i| &self.legend[i].1)
    }
}

/// An α-literal before numbering: (element, image).
type Sel = (usize, u32);

/// Merges two selector lists; `None` if they pick different images for
/// one element (the clause would be satisfied by exactly-one).
fn merge(a: &[Sel], b: &[Sel]) -> Option<Vec<Sel>> {
    let mut out: Vec<Sel> = a.to_vec();
    for &(e, v) in b {
        match out.iter().find(|(x, _)| *x == e) {
            Some(&(_, w)) if w != v => return None,
            Some(_) => {}
            None => out.push((e, v)),
        }
    }
    Some(out)
}

/// Every image cell support position `s` can reach, with the selectors
/// that produce it.
fn image_tuples(p: &Problem, s: usize) -> Vec<(usize, Vec<Sel>)> {
    let we = &p.world_elements[s];
    let mut out = Vec::new();
    let mut chosen: Vec<Sel> = Vec::with_capacity(we.len());
    fn rec(p: &Problem, we: &[usize], i: usize, cell: usize, chosen: &mut Vec<Sel>, out: &mut Vec<(usize, Vec<Sel>)>) {
        if i == we.len() {
            out.push((cell, chosen.clone()));
            return;
        }
        let e = we[i];
        let stride = if p.joint { 1 } else { p.space.stride(i) };
        if let Some(&(_, v)) = chosen.iter().find(|(x, _)| *x == e) {
            rec(p, we, i + 1, cell + v as usize * stride, chosen, out);
            return;
        }
        let mut cands = p.elements[e].candidates.clone();
        cands.sort_unstable();
        for v in cands {
            chosen.push((e, v));
            rec(p, we, i + 1, cell + v as usize * stride, chosen, out);
            chosen.pop();
        }
    }
    rec(p, we, 0, 0, &mut chosen, &mut out);
    out.sort_by_key(|(c, _)| *c);
    out
}

/// Selectors that make position `s` land on `cell`, if any.
fn selectors_for(p: &Problem, s: usize, cell: usize) -> Option<Vec<Sel>> {
    let we = &p.world_elements[s];
    let mut out: Vec<Sel> = Vec::new();
    for (i, &e) in we.iter().enumerate() {
        let v = if p.joint { cell as u32 } else { p.space.digit(cell, i) };
        if !p.elements[e].candidates.contains(&v) {
            return None;
        }
        out = merge(&out, &[(e, v)])?;
    }
    Some(out)
}

fn exactly_one(vars: &[i32], clauses: &mut Vec<Vec<i32>>) {
    clauses.push(vars.to_vec());
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            clauses.push(vec![-vars[i], -vars[j]]);
        }
    }
}

/// Compiles the optimal-pair constraints of `task` under `ms`. The model
/// count of the result (times its multiplier) is the engine's count before
/// the intended subtrahend is removed.
pub fn encode_task(task: &TaskSpec, ms: &MitigationSet, target: CnfTarget, trim_beta: bool) -> Result<CnfFormula> {
    let task = conjoin_multitask(task, ms)?;
    let p = Problem::build(&task, ms, false)?;
    let space = &p.space;
    let n = p.n_cells;
    let mut legend = Vec::new();
    let mut clauses = Vec::new();
    let mut next = 1u32;

    let mut alpha_base = Vec::with_capacity(p.elements.len());
    let mut e_group = Vec::with_capacity(p.elements.len());
    if !p.joint {
        for (gi, &off) in p.group_offset.iter().enumerate() {
            let end = p.group_offset.get(gi + 1).copied().unwrap_or(p.elements.len());
            e_group.extend(std::iter::repeat(gi).take(end - off));
        }
    }
    for (e, el) in p.elements.iter().enumerate() {
        alpha_base.push(next);
        let mut block = Vec::with_capacity(el.range as usize);
        for img in 0..el.range {
            let role = if p.joint {
                VarRole::AlphaWorld {
                    world: space.world_at(e),
                    image: space.world_at(img as usize),
                }
            } else {
                VarRole::AlphaValue {
                    group: e_group[e],
                    value: el.identity,
                    image: img,
                }
            };
            legend.push((next, role));
            block.push(next as i32);
            next += 1;
        }
        exactly_one(&block, &mut clauses);
        for img in 0..el.range {
            if !el.candidates.contains(&img) {
                clauses.push(vec![-(block[img as usize])]);
            }
        }
    }
    let alpha_vars = next - 1;
    let lit = |(e, v): Sel| (alpha_base[e] + v) as i32;

    let tuples: Vec<Vec<(usize, Vec<Sel>)>> = (0..p.support.len()).map(|s| image_tuples(&p, s)).collect();

    // beta cells kept per component
    let mut kept: Vec<Vec<bool>> = Vec::with_capacity(p.comps.len());
    for j in 0..p.comps.len() {
        let mut on = vec![!trim_beta; n];
        if trim_beta {
            for (s, ts) in tuples.iter().enumerate() {
                if p.world_labels[s][j].is_some() {
                    for (c, _) in ts {
                        on[*c] = true;
                    }
                }
            }
        }
        kept.push(on);
    }

    let mut beta_base: Vec<Vec<u32>> = Vec::with_capacity(p.comps.len());
    let mut multiplier = BigUint::one();
    for (j, comp) in p.comps.iter().enumerate() {
        let mut bases = vec![0u32; n];
        for c in 0..n {
            if !kept[j][c] {
                if comp.pinned[c].is_none() {
                    multiplier *= comp.labels;
                }
                continue;
            }
            bases[c] = next;
            let block: Vec<i32> = (0..comp.labels).map(|y| (next + y) as i32).collect();
            for y in 0..comp.labels {
                legend.push((
                    next,
                    VarRole::Beta {
                        component: j,
                        cell: space.world_at(c),
                        label: y,
                    },
                ));
                next += 1;
            }
            exactly_one(&block, &mut clauses);
            if let Some(y) = comp.pinned[c] {
                clauses.push(vec![block[y as usize]]);
            }
        }
        beta_base.push(bases);
    }

    for (s, ts) in tuples.iter().enumerate() {
        for (j, y) in p.world_labels[s].iter().enumerate() {
            let Some(y) = y else { continue };
            for (c, sels) in ts {
                let mut cl: Vec<i32> = sels.iter().map(|&x| -lit(x)).collect();
                cl.push((beta_base[j][*c] + y) as i32);
                clauses.push(cl);
            }
        }
    }

    if p.reconstruction {
        for s in 0..p.support.len() {
            for t in s + 1..p.support.len() {
                for (c, sels) in &tuples[s] {
                    let Some(other) = selectors_for(&p, t, *c) else { continue };
                    if let Some(both) = merge(sels, &other) {
                        clauses.push(both.into_iter().map(|x| -lit(x)).collect());
                    }
                }
            }
        }
    }

    for cl in clauses.iter_mut() {
        cl.sort_unstable_by_key(|l| (l.unsigned_abs(), *l));
        cl.dedup();
    }
    let num_vars = (next - 1) as usize;
    let projection = match target {
        CnfTarget::OptimalPairs => (1..=num_vars as u32).collect(),
        CnfTarget::OptimalAlphas => {
            multiplier = BigUint::one();
            (1..=alpha_vars).collect()
        }
    };
    let mut f = CnfFormula::new(num_vars, clauses, projection, legend)?;
    f.target = Some(target);
    f.multiplier = multiplier;
    Ok(f)
}

/// DIMACS with `c legend`, `c ind` and an optional `c target`/`c multiplier`
/// header.
pub fn write_dimacs<W: Write>(f: &CnfFormula, mut w: W) -> Result<()> {
    if let Some(t) = f.target {
        writeln!(w, "c target {}", t.as_str())?;
        writeln!(w, "c note counts include intended pairs; subtract the engine subtrahend")?;
    }
    if !f.multiplier.is_one() {
        writeln!(w, "c multiplier {}", f.multiplier)?;
    }
    for (v, role) in &f.legend {
        writeln!(w, "c legend {v} {role}")?;
    }
    for chunk in f.projection.chunks(10) {
        write!(w, "c ind")?;
        for v in chunk {
            write!(w, " {v}")?;
        }
        writeln!(w, " 0")?;
    }
    writeln!(w, "p cnf {} {}", f.num_vars, f.clauses.len())?;
    for c in &f.clauses {
        for l in c {
            write!(w, "{l} ")?;
        }
        writeln!(w, "0")?;
    }
    Ok(())
}

pub fn to_dimacs_string(f: &CnfFormula) -> String {
    let mut buf = Vec::new();
    write_dimacs(f, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn read_dimacs<R: BufRead>(r: R) -> Result<CnfFormula> {
    let bad = |m: String| Error::Malformed(m);
    let mut header: Option<(usize, usize)> = None;
    let mut projection = Vec::new();
    let mut legend = Vec::new();
    let mut target = None;
    let mut multiplier = BigUint::one();
    let mut clauses = Vec::new();
    let mut cur: Vec<i32> = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('c') {
            let rest = rest.trim_start();
            if let Some(ind) = rest.strip_prefix("ind ") {
                for tok in ind.split_whitespace() {
                    let v: u32 = tok.parse().map_err(|_| bad(format!("bad ind token `{tok}`")))?;
                    if v != 0 {
                        projection.push(v);
                    }
                }
            } else if let Some(leg) = rest.strip_prefix("legend ") {
                let (v, role) = leg.split_once(' ').ok_or_else(|| bad(format!("bad legend `{leg}`")))?;
                let v: u32 = v.parse().map_err(|_| bad(format!("bad legend variable `{v}`")))?;
                legend.push((v, role.parse()?));
            } else if let Some(tg) = rest.strip_prefix("target ") {
                target = Some(CnfTarget::parse(tg.trim()).ok_or_else(|| bad(format!("bad target `{tg}`")))?);
            } else if let Some(m) = rest.strip_prefix("multiplier ") {
                multiplier = m.trim().parse().map_err(|_| bad(format!("bad multiplier `{m}`")))?;
            }
            continue;
        }
        if let Some(p) = t.strip_prefix("p cnf") {
            let nums: Vec<usize> = p.split_whitespace().filter_map(|x| x.parse().ok()).collect();
            if nums.len() != 2 || header.is_some() {
                return Err(bad(format!("bad header `{t}`")));
            }
            header = Some((nums[0], nums[1]));
            continue;
        }
        if header.is_none() {
            return Err(bad("clause before `p cnf` header".into()));
        }
        for tok in t.split_whitespace() {
            let l: i32 = tok.parse().map_err(|_| bad(format!("bad literal `{tok}`")))?;
            if l == 0 {
                clauses.push(std::mem::take(&mut cur));
            } else {
                cur.push(l);
            }
        }
    }
    let (nv, nc) = header.ok_or_else(|| bad("missing `p cnf` header".into()))?;
    if !cur.is_empty() {
        return Err(bad("unterminated clause".into()));
    }
    if clauses.len() != nc {
        return Err(bad(format!("header declares {nc} clauses, found {}", clauses.len())));
    }
    let mut f = CnfFormula::new(nv, clauses, projection, legend)?;
    f.target = target;
    f.multiplier = multiplier;
    Ok(f)
}

/// Projected count by enumerating every assignment. Ignores the multiplier.
pub fn exhaustive_model_count(f: &CnfFormula) -> Result<BigUint> {
    let n = f.num_vars;
    if n > EXHAUSTIVE_VAR_LIMIT {
        return Err(Error::SpaceTooLarge(format!(
            "{n} variables exceed the exhaustive limit of {EXHAUSTIVE_VAR_LIMIT}"
        )));
    }
    let mut masks: Vec<(u32, u32)> = f
        .clauses
        .iter()
        .map(|c| {
            c.iter().fold((0, 0), |(pos, neg), &l| {
                let b = 1u32 << (l.unsigned_abs() - 1);
                if l > 0 {
                    (pos | b, neg)
                } else {
                    (pos, neg | b)
                }
            })
        })
        .collect();
    masks.sort_by_key(|(p, q)| (p | q).count_ones());
    let proj = f.projection.iter().fold(0u32, |m, &v| m | 1 << (v - 1));
    let mut seen = std::collections::HashSet::new();
    for a in 0..(1u64 << n) {
        let a = a as u32;
        if masks.iter().all(|&(p, q)| a & p != 0 || !a & q != 0) {
            seen.insert(a & proj);
        }
    }
    Ok(BigUint::from(seen.len()))
}

struct Counter {
    projected: Vec<bool>,
    /// Branching tier: β selectors first.
    tier: Vec<u8>,
    nodes: u64,
    budget: u64,
    cache: HashMap<Vec<Vec<i32>>, BigUint>,
}

const CACHE_LIMIT: usize = 400_000;

/// Unit propagation; `None` on conflict.
fn propagate(mut clauses: Vec<Vec<i32>>, assigned: &mut Vec<i32>) -> Option<Vec<Vec<i32>>> {
    loop {
        let Some(l) = clauses.iter().find(|c| c.len() == 1).map(|c| c[0]) else {
            return Some(clauses);
        };
        assigned.push(l);
        let mut out = Vec::with_capacity(clauses.len());
        for mut c in clauses {
            if c.contains(&l) {
                continue;
            }
            c.retain(|&x| x != -l);
            if c.is_empty() {
                return None;
            }
            out.push(c);
        }
        clauses = out;
    }
}

fn components(clauses: Vec<Vec<i32>>, n: usize) -> Vec<Vec<Vec<i32>>> {
    let mut parent: Vec<usize> = (0..=n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in &clauses {
        let a = find(&mut parent, c[0].unsigned_abs() as usize);
        for l in &c[1..] {
            let b = find(&mut parent, l.unsigned_abs() as usize);
            if a != b {
                parent[b] = a;
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Vec<i32>>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for c in clauses {
        let r = find(&mut parent, c[0].unsigned_abs() as usize);
        let i = *slot.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(c);
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

fn vars_of(clauses: &[Vec<i32>]) -> Vec<u32> {
    let mut v: Vec<u32> = clauses.iter().flatten().map(|l| l.unsigned_abs()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

impl Counter {
    fn new(f: &CnfFormula, budget: u64) -> Self {
        let mut projected = vec![false; f.num_vars + 1];
        for &v in &f.projection {
            projected[v as usize] = true;
        }
        let mut tier = vec![1u8; f.num_vars + 1];
        for (v, r) in &f.legend {
            if !r.is_alpha() {
                tier[*v as usize] = 0;
            }
        }
        Counter {
            projected,
            tier,
            nodes: 0,
            budget,
            cache: HashMap::new(),
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded(format!("model counting exceeded {} nodes", self.budget)));
        }
        Ok(())
    }

    fn pick(&self, clauses: &[Vec<i32>], projected_only: bool) -> u32 {
        let mut occ: HashMap<u32, usize> = HashMap::new();
        for l in clauses.iter().flatten() {
            *occ.entry(l.unsigned_abs()).or_default() += 1;
        }
        occ.into_iter()
            .filter(|(v, _)| !projected_only || self.projected[*v as usize])
            .min_by_key(|&(v, n)| (self.tier[v as usize], std::cmp::Reverse(n), v))
            .map(|(v, _)| v)
            .expect("component has a variable")
    }

    fn with_unit(clauses: &[Vec<i32>], l: i32) -> Vec<Vec<i32>> {
        let mut c = clauses.to_vec();
        c.push(vec![l]);
        c
    }

    fn count(&mut self, clauses: Vec<Vec<i32>>, vars: &[u32]) -> Result<BigUint> {
        self.tick()?;
        let mut assigned = Vec::new();
        let Some(clauses) = propagate(clauses, &mut assigned) else {
            return Ok(BigUint::zero());
        };
        let present = vars_of(&clauses);
        let gone: BTreeSet<u32> = assigned.iter().map(|l| l.unsigned_abs()).collect();
        let free = vars
            .iter()
            .filter(|&&v| self.projected[v as usize] && !gone.contains(&v) && present.binary_search(&v).is_err())
            .count();
        let mut total = BigUint::one() << free;
        for mut comp in components(clauses, self.projected.len() - 1) {
            comp.sort_unstable();
            let cvars = vars_of(&comp);
            let r = if cvars.iter().any(|&v| self.projected[v as usize]) {
                if let Some(r) = self.cache.get(&comp) {
                    r.clone()
                } else {
                    let v = self.pick(&comp, true) as i32;
                    let r = self.count(Self::with_unit(&comp, v), &cvars)? + self.count(Self::with_unit(&comp, -v), &cvars)?;
                    if self.cache.len() >= CACHE_LIMIT {
                        self.cache.clear();
                    }
                    self.cache.insert(comp, r.clone());
                    r
                }
            } else if self.sat(comp, &mut Vec::new())? {
                BigUint::one()
            } else {
                BigUint::zero()
            };
            if r.is_zero() {
                return Ok(r);
            }
            total *= r;
        }
        Ok(total)
    }

    fn sat(&mut self, clauses: Vec<Vec<i32>>, model: &mut Vec<i32>) -> Result<bool> {
        self.tick()?;
        let mark = model.len();
        let Some(clauses) = propagate(clauses, model) else {
            model.truncate(mark);
            return Ok(false);
        };
        if clauses.is_empty() {
            return Ok(true);
        }
        let v = self.pick(&clauses, false) as i32;
        for l in [v, -v] {
            if self.sat(Self::with_unit(&clauses, l), model)? {
                return Ok(true);
            }
        }
        model.truncate(mark);
        Ok(false)
    }
}

/// Projected count by DPLL with unit propagation, component decomposition
/// and caching. Ignores the multiplier.
pub fn count_models(f: &CnfFormula, budget: u64) -> Result<BigUint> {
    let mut c = Counter::new(f, budget);
    let vars: Vec<u32> = (1..=f.num_vars as u32).collect();
    c.count(f.clauses.clone(), &vars)
}

/// The engine-comparable count: projected models times the multiplier.
pub fn scaled_count(f: &CnfFormula, budget: u64) -> Result<BigUint> {
    let n = if f.num_vars <= EXHAUSTIVE_VAR_LIMIT {
        exhaustive_model_count(f)?
    } else {
        count_models(f, budget)?
    };
    Ok(n * &f.multiplier)
}

/// Some satisfying assignment (index `v - 1` holds variable `v`).
pub fn find_model(f: &CnfFormula) -> Option<Vec<bool>> {
    let mut c = Counter::new(f, u64::MAX);
    let mut lits = Vec::new();
    if !c.sat(f.clauses.clone(), &mut lits).ok()? {
        return None;
    }
    let mut a = vec![false; f.num_vars];
    for l in lits {
        a[l.unsigned_abs() as usize - 1] = l > 0;
    }
    Some(a)
}

/// The (α, β components) selected by a model of an encoded task. Dropped β
/// cells come back free.
pub fn decode(f: &CnfFormula, task: &TaskSpec, ms: &MitigationSet, model: &[bool]) -> Result<(AlphaMap, Vec<BetaMap>)> {
    if model.len() != f.num_vars {
        return invalid("model length differs from the variable count");
    }
    let task = conjoin_multitask(task, ms)?;
    let space = &task.space;
    let n = space.size();
    let mut joint = vec![None; n];
    let mut tables: Vec<Vec<Option<u32>>> = task
        .family
        .groups()
        .map(|gs| gs.iter().map(|g| vec![None; space.cardinality(g[0]) as usize]).collect())
        .unwrap_or_default();
    let labels: Vec<u32> = std::iter::once(task.knowledge.labels())
        .chain(task.extra_tasks.iter().map(|e| e.knowledge.labels()))
        .collect();
    let mut betas: Vec<BetaMap> = labels.iter().map(|&l| BetaMap::free(n, l)).collect();
    for (v, role) in &f.legend {
        if !model[*v as usize - 1] {
            continue;
        }
        match role {
            VarRole::AlphaWorld { world, image } => joint[space.index_of(world)] = Some(space.index_of(image)),
            VarRole::AlphaValue { group, value, image } => {
                let slot = tables
                    .get_mut(*group)
                    .and_then(|t| t.get_mut(*value as usize))
                    .ok_or_else(|| Error::Validation("legend group out of range".into()))?;
                *slot = Some(*image);
            }
            VarRole::Beta { component, cell, label } => {
                let b = betas
                    .get_mut(*component)
                    .ok_or_else(|| Error::Validation("legend component out of range".into()))?;
                b.set(space.index_of(cell), *label);
            }
        }
    }
    let missing = || Error::Validation("model leaves an α entry unselected".into());
    let alpha = if task.family.is_joint() {
        AlphaMap::joint(space, joint.into_iter().map(|c| c.ok_or_else(missing)).collect::<Result<_>>()?)?
    } else {
        let tables = tables
            .into_iter()
            .map(|t| t.into_iter().map(|x| x.ok_or_else(missing)).collect::<Result<Vec<u32>>>())
            .collect::<Result<Vec<_>>>()?;
        AlphaMap::factored(space, &task.family, tables)?
    };
    Ok((alpha, betas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{naive_count_pairs, DEFAULT_NAIVE_BUDGET};
    use crate::maps::is_optimal_pair;
    use crate::mitigations::WorldSet;
    use crate::task::AlphaFamily;

    fn named(n: u32) -> Vec<(u32, VarRole)> {
        (1..=n)
            .map(|v| {
                (
                    v,
                    VarRole::Beta {
                        component: 0,
                        cell: World(vec![v - 1]),
                        label: 0,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn tiny_counts() {
        let taut = CnfFormula::new(3, vec![], vec![1, 2, 3], named(3)).unwrap();
        assert_eq!(exhaustive_model_count(&taut).unwrap(), 8u32.into());
        assert_eq!(count_models(&taut, 1000).unwrap(), 8u32.into());
        let mut cl = Vec::new();
        exactly_one(&[1, 2, 3], &mut cl);
        let one = CnfFormula::new(3, cl, vec![1, 2, 3], named(3)).unwrap();
        assert_eq!(exhaustive_model_count(&one).unwrap(), 3u32.into());
        assert_eq!(count_models(&one, 1000).unwrap(), 3u32.into());
    }

    #[test]
    fn dimacs_bytes() {
        let f = CnfFormula::new(2, vec![vec![1, -2]], vec![1], named(2)).unwrap();
        let s = to_dimacs_string(&f);
        assert!(s.ends_with("c ind 1 0\np cnf 2 1\n1 -2 0\n"), "{s}");
        assert!(s.starts_with("c legend 1 "));
        let back = read_dimacs(s.as_bytes()).unwrap();
        assert_eq!(back, f);
        assert_eq!(to_dimacs_string(&back), s);
    }

    #[test]
    fn invalid_formulas() {
        assert!(CnfFormula::new(2, vec![vec![]], vec![], vec![]).is_err());
        assert!(CnfFormula::new(2, vec![vec![3]], vec![], vec![]).is_err());
        assert!(CnfFormula::new(2, vec![vec![1]], vec![1], vec![]).is_err());
    }

    #[test]
    fn tied_binary_examples() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::tied(2)).unwrap();
        let none = MitigationSet::none();
        let fa = encode_task(&t, &none, CnfTarget::OptimalAlphas, false).unwrap();
        assert_eq!(fa.projection().len(), 4);
        assert_eq!(fa.num_vars(), 12);
        assert_eq!(exhaustive_model_count(&fa).unwrap(), 2u32.into());
        let fp = encode_task(&t, &none, CnfTarget::OptimalPairs, false).unwrap();
        assert_eq!(fp.projection().len(), 12);
        let naive = naive_count_pairs(&t, &none, DEFAULT_NAIVE_BUDGET).unwrap().optimal_pairs;
        assert_eq!(exhaustive_model_count(&fp).unwrap(), naive);
        assert_eq!(count_models(&fp, 10_000).unwrap(), naive);
        let ms = MitigationSet {
            distillation: Some(WorldSet::Full),
            ..Default::default()
        };
        let fd = encode_task(&t, &ms, CnfTarget::OptimalPairs, false).unwrap();
        assert_eq!(exhaustive_model_count(&fd).unwrap(), 2u32.into());
    }

    #[test]
    fn trimming_keeps_the_scaled_count() {
        let t = TaskSpec::biased_sum_parity(1, AlphaFamily::untied(2)).unwrap();
        let none = MitigationSet::none();
        let full = encode_task(&t, &none, CnfTarget::OptimalPairs, false).unwrap();
        let trim = encode_task(&t, &none, CnfTarget::OptimalPairs, true).unwrap();
        assert!(trim.num_vars() <= full.num_vars());
        assert_eq!(scaled_count(&full, 1 << 20).unwrap(), scaled_count(&trim, 1 << 20).unwrap());
    }

    #[test]
    fn decoded_models_are_optimal() {
        let t = TaskSpec::sum_parity(2, AlphaFamily::tied(2)).unwrap();
        let none = MitigationSet::none();
        let f = encode_task(&t, &none, CnfTarget::OptimalPairs, false).unwrap();
        let m = find_model(&f).unwrap();
        let (a, b) = decode(&f, &t, &none, &m).unwrap();
        assert!(is_optimal_pair(&a, &b[0], &t).unwrap());
    }
}
