//! Backtracking search over map entries with early collision cutoff.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::problem::Problem;

const FLUSH_EVERY: u64 = 4096;
const DENSE_HIST_LIMIT: u64 = 1 << 16;

/// Leaf counts keyed by the packed per-component free-cell counts.
#[derive(Debug, Clone)]
pub(crate) enum Hist {
    Dense(Vec<u64>),
    Sparse(HashMap<u64, u64>),
}

impl Hist {
    fn new(size: Option<u64>) -> Self {
        match size {
            Some(s) if s <= DENSE_HIST_LIMIT => Hist::Dense(vec![0; s as usize]),
            _ => Hist::Sparse(HashMap::new()),
        }
    }

    #[inline]
    fn add(&mut self, key: u64, n: u64) {
        match self {
            Hist::Dense(v) => v[key as usize] += n,
            Hist::Sparse(m) => *m.entry(key).or_default() += n,
        }
    }

    fn merge(&mut self, other: &Hist) {
        for (k, n) in other.entries() {
            self.add(k, n);
        }
    }

    /// Non-zero entries in ascending key order.
    pub fn entries(&self) -> Vec<(u64, u64)> {
        match self {
            Hist::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(k, &n)| (k as u64, n))
                .collect(),
            Hist::Sparse(m) => {
                let mut e: Vec<(u64, u64)> = m.iter().map(|(&k, &n)| (k, n)).collect();
                e.sort_unstable();
                e
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Tally {
    pub hist: Hist,
    pub leaves: u64,
    pub rs_leaves: u64,
    pub nodes: u64,
}

impl Tally {
    fn new(hist_size: Option<u64>) -> Self {
        Tally {
            hist: Hist::new(hist_size),
            leaves: 0,
            rs_leaves: 0,
            nodes: 0,
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.hist.merge(&o.hist);
        self.leaves += o.leaves;
        self.rs_leaves += o.rs_leaves;
        self.nodes += o.nodes;
    }
}

pub(crate) struct SearchOutcome {
    pub tally: Tally,
    pub complete: bool,
}

/// Assignment order plus the support worlds completed at each position.
pub(crate) struct Plan {
    pub order: Vec<usize>,
    pub completes: Vec<Vec<usize>>,
}

impl Plan {
    /// Relevant elements only, greedily ordered so that each step
    /// completes as many support worlds as possible.
    pub fn greedy(p: &Problem) -> Plan {
        let rel = p.relevant();
        let mut order = Vec::new();
        let mut assigned = vec![false; p.elements.len()];
        let mut remaining: Vec<usize> = p
            .world_elements
            .iter()
            .map(|we| distinct(we).len())
            .collect();
        let mut touching: Vec<Vec<usize>> = vec![Vec::new(); p.elements.len()];
        for (s, we) in p.world_elements.iter().enumerate() {
            for e in distinct(we) {
                touching[e].push(s);
            }
        }
        let total = rel.iter().filter(|&&r| r).count();
        while order.len() < total {
            let mut best: Option<(usize, usize, usize)> = None;
            for e in 0..p.elements.len() {
                if !rel[e] || assigned[e] {
                    continue;
                }
                let done = touching[e].iter().filter(|&&s| remaining[s] == 1).count();
                let touch = touching[e].len();
                let better = match best {
                    None => true,
                    Some((_, bd, bt)) => (done, touch) > (bd, bt),
                };
                if better {
                    best = Some((e, done, touch));
                }
            }
            let (e, _, _) = best.unwrap();
            assigned[e] = true;
            for &s in &touching[e] {
                remaining[s] -= 1;
            }
            order.push(e);
        }
        Self::with_order(p, order)
    }

    /// Every element in index order.
    pub fn natural(p: &Problem) -> Plan {
        Self::with_order(p, (0..p.elements.len()).collect())
    }

    fn with_order(p: &Problem, order: Vec<usize>) -> Plan {
        let mut pos = vec![usize::MAX; p.elements.len()];
        for (i, &e) in order.iter().enumerate() {
            pos[e] = i;
        }
        let mut completes = vec![Vec::new(); order.len()];
        for (s, we) in p.world_elements.iter().enumerate() {
            let last = we.iter().map(|&e| pos[e]).max().unwrap();
            completes[last].push(s);
        }
        Plan { order, completes }
    }
}

fn distinct(we: &[usize]) -> Vec<usize> {
    let mut v = we.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

pub(crate) struct State<'a> {
    p: &'a Problem,
    plan: &'a Plan,
    pub assign: Vec<u32>,
    pub label: Vec<Vec<u32>>,
    pub refs: Vec<Vec<u32>>,
    covered: Vec<u32>,
    occ: Vec<u32>,
    rs_bad: u32,
    undo: Vec<(usize, usize)>,
    radix: u64,
}

impl<'a> State<'a> {
    pub fn new(p: &'a Problem, plan: &'a Plan) -> Self {
        let n = p.n_cells;
        let mut label = Vec::with_capacity(p.comps.len());
        let mut refs = Vec::with_capacity(p.comps.len());
        let mut covered = Vec::with_capacity(p.comps.len());
        for c in &p.comps {
            label.push(c.pinned.iter().map(|x| x.unwrap_or(0)).collect());
            refs.push(c.pinned.iter().map(|x| x.is_some() as u32).collect());
            covered.push(c.pinned_count as u32);
        }
        State {
            p,
            plan,
            assign: p.elements.iter().map(|e| e.identity).collect(),
            label,
            refs,
            covered,
            occ: if p.reconstruction { vec![0; n] } else { Vec::new() },
            rs_bad: 0,
            undo: Vec::new(),
            radix: n as u64 + 1,
        }
    }

    #[inline]
    fn try_world(&mut self, s: usize) -> bool {
        let c = self.p.image(s, &self.assign);
        let labels = &self.p.world_labels[s];
        for (j, y) in labels.iter().enumerate() {
            if let Some(y) = *y {
                if self.refs[j][c] > 0 && self.label[j][c] != y {
                    return false;
                }
            }
        }
        if self.p.reconstruction && self.occ[c] > 0 {
            return false;
        }
        for (j, y) in labels.iter().enumerate() {
            if let Some(y) = *y {
                if self.refs[j][c] == 0 {
                    self.label[j][c] = y;
                    self.covered[j] += 1;
                }
                self.refs[j][c] += 1;
                if self.p.comps[j].knowledge[c] != y {
                    self.rs_bad += 1;
                }
            }
        }
        if self.p.reconstruction {
            self.occ[c] += 1;
        }
        self.undo.push((s, c));
        true
    }

    #[inline]
    fn untry(&mut self) {
        let (s, c) = self.undo.pop().unwrap();
        for (j, y) in self.p.world_labels[s].iter().enumerate() {
            if let Some(y) = *y {
                self.refs[j][c] -= 1;
                if self.refs[j][c] == 0 {
                    self.covered[j] -= 1;
                }
                if self.p.comps[j].knowledge[c] != y {
                    self.rs_bad -= 1;
                }
            }
        }
        if self.p.reconstruction {
            self.occ[c] -= 1;
        }
    }

    /// Assigns position `pos` and applies its completions; returns the
    /// number of worlds applied, or `None` (with nothing left applied) on
    /// a conflict.
    #[inline]
    fn place(&mut self, pos: usize, v: u32) -> Option<usize> {
        self.assign[self.plan.order[pos]] = v;
        let mut applied = 0;
        for i in 0..self.plan.completes[pos].len() {
            let s = self.plan.completes[pos][i];
            if self.try_world(s) {
                applied += 1;
            } else {
                for _ in 0..applied {
                    self.untry();
                }
                return None;
            }
        }
        Some(applied)
    }

    fn unplace(&mut self, applied: usize) {
        for _ in 0..applied {
            self.untry();
        }
    }

    fn key(&self) -> u64 {
        let n = self.p.n_cells as u64;
        let mut key = 0u64;
        for j in (0..self.covered.len()).rev() {
            key = key * self.radix + (n - self.covered[j] as u64);
        }
        key
    }

    pub fn rs_ok(&self) -> bool {
        self.rs_bad == 0
    }

    /// Replays a prefix of values; `false` if it conflicts.
    fn replay(&mut self, prefix: &[u32]) -> bool {
        for (pos, &v) in prefix.iter().enumerate() {
            if self.place(pos, v).is_none() {
                return false;
            }
        }
        true
    }
}

struct Budget<'a> {
    used: &'a AtomicU64,
    stop: &'a AtomicBool,
    limit: Option<u64>,
    local: u64,
}

impl Budget<'_> {
    #[inline]
    fn tick(&mut self, tally: &mut Tally) -> bool {
        tally.nodes += 1;
        self.local += 1;
        if self.local >= FLUSH_EVERY {
            self.flush()
        } else {
            true
        }
    }

    fn flush(&mut self) -> bool {
        let total = self.used.fetch_add(self.local, Ordering::Relaxed) + self.local;
        self.local = 0;
        if self.limit.is_some_and(|l| total > l) {
            self.stop.store(true, Ordering::Relaxed);
        }
        !self.stop.load(Ordering::Relaxed)
    }
}

fn dfs(st: &mut State, pos: usize, tally: &mut Tally, budget: &mut Budget) -> bool {
    if pos == st.plan.order.len() {
        tally.hist.add(st.key(), 1);
        tally.leaves += 1;
        tally.rs_leaves += st.rs_ok() as u64;
        return true;
    }
    let e = st.plan.order[pos];
    let p = st.p;
    for &v in &p.elements[e].candidates {
        if !budget.tick(tally) {
            return false;
        }
        if let Some(applied) = st.place(pos, v) {
            let go_on = dfs(st, pos + 1, tally, budget);
            st.unplace(applied);
            if !go_on {
                return false;
            }
        }
    }
    true
}

fn hist_size(p: &Problem) -> Option<u64> {
    let radix = p.n_cells as u64 + 1;
    (0..p.comps.len()).try_fold(1u64, |acc, _| acc.checked_mul(radix))
}

/// Prefixes of live partial assignments at the smallest depth giving at
/// least `want` of them (or at full depth).
fn split(p: &Problem, plan: &Plan, want: usize, tally: &mut Tally) -> Vec<Vec<u32>> {
    let mut prefixes: Vec<Vec<u32>> = vec![Vec::new()];
    let mut depth = 0;
    while prefixes.len() < want && depth < plan.order.len() {
        let e = plan.order[depth];
        let mut next = Vec::new();
        for pre in &prefixes {
            let mut st = State::new(p, plan);
            st.replay(pre);
            for &v in &p.elements[e].candidates {
                tally.nodes += 1;
                if let Some(applied) = st.place(depth, v) {
                    let mut q = pre.clone();
                    q.push(v);
                    next.push(q);
                    st.unplace(applied);
                }
            }
        }
        prefixes = next;
        depth += 1;
        if prefixes.is_empty() {
            break;
        }
    }
    prefixes
}

fn run_prefix(
    p: &Problem,
    plan: &Plan,
    prefix: &[u32],
    used: &AtomicU64,
    stop: &AtomicBool,
    limit: Option<u64>,
) -> (Tally, bool) {
    let mut tally = Tally::new(hist_size(p));
    let mut st = State::new(p, plan);
    if !st.replay(prefix) {
        return (tally, true);
    }
    let mut budget = Budget {
        used,
        stop,
        limit,
        local: 0,
    };
    let ok = dfs(&mut st, prefix.len(), &mut tally, &mut budget) && budget.flush();
    (tally, ok)
}

pub(crate) fn run(p: &Problem, workers: usize, budget: Option<u64>) -> SearchOutcome {
    let plan = Plan::greedy(p);
    let used = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let mut tally = Tally::new(hist_size(p));

    if workers <= 1 || !cfg!(feature = "parallel") {
        let (t, ok) = run_prefix(p, &plan, &[], &used, &stop, budget);
        tally.merge(&t);
        return SearchOutcome {
            tally,
            complete: ok,
        };
    }

    let prefixes = split(p, &plan, 4 * workers, &mut tally);
    used.fetch_add(tally.nodes, Ordering::Relaxed);
    let results = run_parallel(p, &plan, &prefixes, &used, &stop, budget, workers);
    let mut complete = true;
    for (t, ok) in &results {
        tally.merge(t);
        complete &= ok;
    }
    SearchOutcome {
        tally,
        complete,
    }
}

#[cfg(feature = "parallel")]
fn run_parallel(
    p: &Problem,
    plan: &Plan,
    prefixes: &[Vec<u32>],
    used: &AtomicU64,
    stop: &AtomicBool,
    budget: Option<u64>,
    workers: usize,
) -> Vec<(Tally, bool)> {
    let job = || {
        prefixes
            .par_iter()
            .map(|pre| run_prefix(p, plan, pre, used, stop, budget))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_parallel(
    p: &Problem,
    plan: &Plan,
    prefixes: &[Vec<u32>],
    used: &AtomicU64,
    stop: &AtomicBool,
    budget: Option<u64>,
    _workers: usize,
) -> Vec<(Tally, bool)> {
    prefixes
        .iter()
        .map(|pre| run_prefix(p, plan, pre, used, stop, budget))
        .collect()
}

/// Decodes a histogram key into per-component free-cell counts.
pub(crate) fn decode_key(p: &Problem, mut key: u64) -> Vec<u64> {
    let radix = p.n_cells as u64 + 1;
    (0..p.comps.len())
        .map(|_| {
            let f = key % radix;
            key /= radix;
            f
        })
        .collect()
}

/// One admissible α in enumeration order with its forced β tables.
pub(crate) struct Found {
    pub assign: Vec<u32>,
    pub betas: Vec<Vec<Option<u32>>>,
}

/// The first `limit` admissible assignments over all elements in index
/// order; the flag is true when more exist.
pub(crate) fn enumerate(p: &Problem, limit: usize) -> (Vec<Found>, bool) {
    let plan = Plan::natural(p);
    let mut st = State::new(p, &plan);
    let mut out = Vec::new();
    let mut truncated = false;
    fn rec(st: &mut State, pos: usize, limit: usize, out: &mut Vec<Found>, truncated: &mut bool) -> bool {
        if pos == st.plan.order.len() {
            if out.len() == limit {
                *truncated = true;
                return false;
            }
            let betas = st
                .label
                .iter()
                .zip(&st.refs)
                .map(|(l, r)| l.iter().zip(r).map(|(&y, &n)| (n > 0).then_some(y)).collect())
                .collect();
            out.push(Found {
                assign: st.assign.clone(),
                betas,
            });
            return true;
        }
        let p = st.p;
        let e = st.plan.order[pos];
        for &v in &p.elements[e].candidates {
            if let Some(applied) = st.place(pos, v) {
                let go = rec(st, pos + 1, limit, out, truncated);
                st.unplace(applied);
                if !go {
                    return false;
                }
            }
        }
        true
    }
    rec(&mut st, 0, limit, &mut out, &mut truncated);
    (out, truncated)
}
