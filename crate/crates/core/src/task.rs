//! Declarative task model: concept spaces, worlds, deterministic knowledge,
//! support sets and α-family declarations.
//!
//! Concept values are plain indices `0..cardinality`. Worlds are indexed
//! lexicographically with the first factor most significant, and every
//! dense table in the crate (knowledge, maps, supports) is laid out in that
//! order.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigUint;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Upper bound on the number of worlds for which dense tables are built.
pub const MAX_DENSE_WORLDS: usize = 1 << 26;

/// Supports over at most this many worlds are stored as a bitset.
const BITSET_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Factor {
    pub name: String,
    pub cardinality: u32,
}

/// An ordered product of finite factors. Serves as both the ground-truth
/// space and the predicted space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSpace {
    factors: Vec<Factor>,
    strides: Vec<usize>,
    dense: Option<usize>,
}

impl ConceptSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return invalid("concept space needs at least one factor");
        }
        let mut seen = HashSet::new();
        for f in &factors {
            if f.cardinality == 0 {
                return invalid(format!("factor `{}` has cardinality 0", f.name));
            }
            if !seen.insert(f.name.as_str()) {
                return invalid(format!("duplicate factor name `{}`", f.name));
            }
        }
        let mut dense = Some(1usize);
        for f in &factors {
            dense = dense
                .and_then(|d| d.checked_mul(f.cardinality as usize))
                .filter(|&d| d <= MAX_DENSE_WORLDS);
        }
        let mut strides = vec![1usize; factors.len()];
        if dense.is_some() {
            for i in (0..factors.len() - 1).rev() {
                strides[i] = strides[i + 1] * factors[i + 1].cardinality as usize;
            }
        }
        Ok(ConceptSpace {
            factors,
            strides,
            dense,
        })
    }

    /// Space with factors named `g1..gk`.
    pub fn from_cardinalities(cards: &[u32]) -> Result<Self> {
        Self::new(
            cards
                .iter()
                .enumerate()
                .map(|(i, &c)| Factor {
                    name: format!("g{}", i + 1),
                    cardinality: c,
                })
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn cardinality(&self, i: usize) -> u32 {
        self.factors[i].cardinality
    }

    pub fn cardinalities(&self) -> Vec<u32> {
        self.factors.iter().map(|f| f.cardinality).collect()
    }

    /// Exact number of worlds.
    pub fn total_worlds(&self) -> BigUint {
        self.factors
            .iter()
            .fold(BigUint::from(1u32), |acc, f| acc * f.cardinality)
    }

    /// Number of worlds when small enough for dense tables.
    pub fn dense_size(&self) -> Option<usize> {
        self.dense
    }

    pub(crate) fn size(&self) -> usize {
        self.dense.expect("dense concept space")
    }

    pub(crate) fn stride(&self, i: usize) -> usize {
        self.strides[i]
    }

    pub fn contains(&self, w: &World) -> bool {
        w.0.len() == self.k() && w.0.iter().zip(&self.factors).all(|(v, f)| *v < f.cardinality)
    }

    pub fn index_of(&self, w: &World) -> usize {
        w.0.iter().zip(&self.strides).map(|(&v, &s)| v as usize * s).sum()
    }

    pub fn world_at(&self, mut idx: usize) -> World {
        let mut vals = vec![0u32; self.k()];
        for i in 0..self.k() {
            vals[i] = (idx / self.strides[i]) as u32;
            idx %= self.strides[i];
        }
        World(vals)
    }

    /// Value of factor `i` in the world with index `idx`.
    pub(crate) fn digit(&self, idx: usize, i: usize) -> u32 {
        ((idx / self.strides[i]) % self.factors[i].cardinality as usize) as u32
    }

    /// All worlds in lexicographic order.
    pub fn worlds(&self) -> impl Iterator<Item = World> + '_ {
        (0..self.size()).map(move |i| self.world_at(i))
    }
}

/// A concept vector: one value index per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct World(pub Vec<u32>);

impl World {
    pub fn values(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for World {
    fn from(v: Vec<u32>) -> Self {
        World(v)
    }
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Knowledge named by the task file's `builtin` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Sum,
    SumParity,
    Xor,
    ModularSum(u32),
}

impl Builtin {
    pub fn parse(name: &str, modulus: Option<u32>) -> Result<Self> {
        match (name, modulus) {
            ("sum", None) => Ok(Builtin::Sum),
            ("sum_parity", None) => Ok(Builtin::SumParity),
            ("xor", None) => Ok(Builtin::Xor),
            ("modular_sum", Some(m)) => Ok(Builtin::ModularSum(m)),
            ("modular_sum", None) => invalid("modular_sum needs a `modulus`"),
            (other, None) => invalid(format!("unknown builtin knowledge `{other}`")),
            (other, Some(_)) => invalid(format!("`modulus` is not accepted by `{other}`")),
        }
    }
}

/// A total deterministic map from worlds to label indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeTable {
    labels: u32,
    table: Vec<u32>,
}

impl KnowledgeTable {
    pub fn new(space: &ConceptSpace, labels: u32, table: Vec<u32>) -> Result<Self> {
        let Some(n) = space.dense_size() else {
            return invalid("concept space too large for a dense knowledge table");
        };
        if labels == 0 {
            return invalid("label count must be positive");
        }
        if table.len() != n {
            return invalid("knowledge not total");
        }
        if let Some((i, &y)) = table.iter().enumerate().find(|(_, &y)| y >= labels) {
            return invalid(format!(
                "knowledge entry out of range: world {} has label {y} >= {labels}",
                space.world_at(i)
            ));
        }
        Ok(KnowledgeTable { labels, table })
    }

    /// Builds a table from explicit `(world, label)` entries, which must
    /// cover every world exactly once.
    pub fn from_entries(
        space: &ConceptSpace,
        labels: u32,
        entries: impl IntoIterator<Item = (World, u32)>,
    ) -> Result<Self> {
        let Some(n) = space.dense_size() else {
            return invalid("concept space too large for a dense knowledge table");
        };
        let mut table = vec![u32::MAX; n];
        for (w, y) in entries {
            if !space.contains(&w) {
                return invalid(format!("knowledge world {w} is not in the concept space"));
            }
            let slot = &mut table[space.index_of(&w)];
            if *slot != u32::MAX && *slot != y {
                return invalid(format!("conflicting knowledge entries for world {w}"));
            }
            *slot = y;
        }
        if let Some(i) = table.iter().position(|&y| y == u32::MAX) {
            return invalid(format!(
                "knowledge not total: world {} has no label",
                space.world_at(i)
            ));
        }
        Self::new(space, labels, table)
    }

    pub fn labels(&self) -> u32 {
        self.labels
    }

    pub fn label(&self, world_index: usize) -> u32 {
        self.table[world_index]
    }

    pub fn label_of(&self, space: &ConceptSpace, w: &World) -> u32 {
        self.table[space.index_of(w)]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.table
    }

    /// The same table over a larger label set.
    pub fn with_labels(mut self, labels: u32) -> Result<Self> {
        if labels < self.labels {
            return invalid(format!(
                "declared labels {labels} smaller than the knowledge needs ({})",
                self.labels
            ));
        }
        self.labels = labels;
        Ok(self)
    }
}

/// Materializes one of the builtin knowledge bases over `space`.
pub fn builtin_knowledge(name: Builtin, space: &ConceptSpace) -> Result<KnowledgeTable> {
    let n = match space.dense_size() {
        Some(n) => n,
        None => return invalid("concept space too large for a dense knowledge table"),
    };
    let sum = |idx: usize| -> u64 { (0..space.k()).map(|i| space.digit(idx, i) as u64).sum() };
    let (labels, table): (u32, Vec<u32>) = match name {
        Builtin::Sum => {
            let labels = space
                .factors()
                .iter()
                .map(|f| f.cardinality - 1)
                .sum::<u32>()
                + 1;
            (labels, (0..n).map(|i| sum(i) as u32).collect())
        }
        Builtin::SumParity => (2, (0..n).map(|i| (sum(i) % 2) as u32).collect()),
        Builtin::Xor => {
            if let Some(f) = space.factors().iter().find(|f| f.cardinality != 2) {
                return invalid(format!(
                    "xor requires binary factors, `{}` has cardinality {}",
                    f.name, f.cardinality
                ));
            }
            (2, (0..n).map(|i| (sum(i) % 2) as u32).collect())
        }
        Builtin::ModularSum(m) => {
            if m < 2 {
                return invalid(format!("modular_sum modulus must be >= 2, got {m}"));
            }
            (m, (0..n).map(|i| (sum(i) % m as u64) as u32).collect())
        }
    };
    KnowledgeTable::new(space, labels, table)
}

/// How the support was declared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SupportMode {
    Full,
    Include(Vec<World>),
    Exclude(Vec<World>),
    Product(Vec<Vec<u32>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Membership {
    Bits(Vec<u64>),
    Sorted,
}

/// The set of ground-truth worlds that appear in the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    mode: SupportMode,
    indices: Vec<usize>,
    membership: Membership,
}

impl SupportSet {
    pub fn new(space: &ConceptSpace, mode: SupportMode) -> Result<Self> {
        let Some(n) = space.dense_size() else {
            return invalid("concept space too large for support materialization");
        };
        let check = |w: &World| -> Result<usize> {
            if space.contains(w) {
                Ok(space.index_of(w))
            } else {
                invalid(format!("support world {w} is not in the concept space"))
            }
        };
        let mut indices: Vec<usize> = match &mode {
            SupportMode::Full => (0..n).collect(),
            SupportMode::Include(ws) => {
                if ws.is_empty() {
                    return invalid("include-list support must be non-empty");
                }
                ws.iter().map(check).collect::<Result<_>>()?
            }
            SupportMode::Exclude(ws) => {
                let excluded: HashSet<usize> = ws.iter().map(check).collect::<Result<_>>()?;
                (0..n).filter(|i| !excluded.contains(i)).collect()
            }
            SupportMode::Product(sets) => {
                if sets.len() != space.k() {
                    return invalid(format!(
                        "product support lists {} factors, space has {}",
                        sets.len(),
                        space.k()
                    ));
                }
                for (i, s) in sets.iter().enumerate() {
                    if let Some(v) = s.iter().find(|&&v| v >= space.cardinality(i)) {
                        return invalid(format!(
                            "product support value {v} out of range for factor {i}"
                        ));
                    }
                }
                (0..n)
                    .filter(|&idx| (0..space.k()).all(|i| sets[i].contains(&space.digit(idx, i))))
                    .collect()
            }
        };
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return invalid("support is empty");
        }
        let membership = if n <= BITSET_LIMIT {
            let mut bits = vec![0u64; n.div_ceil(64)];
            for &i in &indices {
                bits[i / 64] |= 1 << (i % 64);
            }
            Membership::Bits(bits)
        } else {
            Membership::Sorted
        };
        Ok(SupportSet {
            mode,
            indices,
            membership,
        })
    }

    pub fn full(space: &ConceptSpace) -> Result<Self> {
        Self::new(space, SupportMode::Full)
    }

    pub fn mode(&self) -> &SupportMode {
        &self.mode
    }

    /// Support world indices, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains_index(&self, idx: usize) -> bool {
        match &self.membership {
            Membership::Bits(bits) => {
                idx / 64 < bits.len() && bits[idx / 64] >> (idx % 64) & 1 == 1
            }
            Membership::Sorted => self.indices.binary_search(&idx).is_ok(),
        }
    }
}

/// Whether α is an arbitrary map on whole worlds or decomposes into
/// per-factor tables, some of which may be shared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlphaFamily {
    Joint,
    Factorized { groups: Vec<Vec<usize>> },
}

impl AlphaFamily {
    /// One independent table per factor.
    pub fn untied(k: usize) -> Self {
        AlphaFamily::Factorized {
            groups: (0..k).map(|i| vec![i]).collect(),
        }
    }

    /// All factors share a single table.
    pub fn tied(k: usize) -> Self {
        AlphaFamily::Factorized {
            groups: vec![(0..k).collect()],
        }
    }

    /// Builds a factorized family from tie lists; factors not mentioned get
    /// their own table. Groups are normalized to ascending order by their
    /// smallest member.
    pub fn factorized(space: &ConceptSpace, ties: &[Vec<usize>]) -> Result<Self> {
        let k = space.k();
        let mut owner = vec![usize::MAX; k];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for tie in ties {
            if tie.is_empty() {
                return invalid("empty tie-group");
            }
            let mut g = tie.clone();
            g.sort_unstable();
            for &i in &g {
                if i >= k {
                    return invalid(format!("tie-group references factor {i}, space has {k}"));
                }
                if owner[i] != usize::MAX {
                    return invalid(format!("factor {i} appears in two tie-groups"));
                }
                owner[i] = groups.len();
            }
            let c0 = space.cardinality(g[0]);
            if g.iter().any(|&i| space.cardinality(i) != c0) {
                return invalid("tie-group cardinality mismatch");
            }
            groups.push(g);
        }
        for i in 0..k {
            if owner[i] == usize::MAX {
                groups.push(vec![i]);
            }
        }
        groups.sort_by_key(|g| g[0]);
        Ok(AlphaFamily::Factorized { groups })
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, AlphaFamily::Joint)
    }

    pub fn groups(&self) -> Option<&[Vec<usize>]> {
        match self {
            AlphaFamily::Joint => None,
            AlphaFamily::Factorized { groups } => Some(groups),
        }
    }

    /// Group index of every factor (factorized families only).
    pub fn group_of(&self, k: usize) -> Option<Vec<usize>> {
        let groups = self.groups()?;
        let mut out = vec![0; k];
        for (gi, g) in groups.iter().enumerate() {
            for &i in g {
                out[i] = gi;
            }
        }
        Some(out)
    }

    fn validate(&self, space: &ConceptSpace) -> Result<()> {
        if let AlphaFamily::Factorized { groups } = self {
            let rebuilt = AlphaFamily::factorized(space, groups)?;
            if rebuilt != *self {
                return invalid("tie-groups must partition the factors");
            }
        }
        Ok(())
    }
}

/// A constraint component introduced by multi-task conjunction: extra
/// knowledge observed on a subset of the support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtraTask {
    pub knowledge: KnowledgeTable,
    /// World indices where the extra label is observed, ascending.
    pub worlds: Vec<usize>,
}

/// The unit of analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub space: ConceptSpace,
    pub knowledge: KnowledgeTable,
    pub support: SupportSet,
    pub family: AlphaFamily,
    /// Extra label components from multi-task conjunction (empty otherwise).
    pub extra_tasks: Vec<ExtraTask>,
}

impl TaskSpec {
    pub fn new(
        space: ConceptSpace,
        knowledge: KnowledgeTable,
        support: SupportSet,
        family: AlphaFamily,
    ) -> Result<Self> {
        let n = match space.dense_size() {
            Some(n) => n,
            None => return invalid("concept space too large for a dense task"),
        };
        if knowledge.as_slice().len() != n {
            return invalid("knowledge table does not match the concept space");
        }
        if support.indices().last().is_some_and(|&i| i >= n) {
            return invalid("support does not match the concept space");
        }
        family.validate(&space)?;
        Ok(TaskSpec {
            space,
            knowledge,
            support,
            family,
            extra_tasks: Vec::new(),
        })
    }

    pub fn label_count(&self) -> u32 {
        self.knowledge.labels()
    }

    /// Support worlds in lexicographic order.
    pub fn enumerate_support(&self) -> impl Iterator<Item = World> + '_ {
        self.support.indices().iter().map(|&i| self.space.world_at(i))
    }

    /// Content hash of the canonicalized task.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canon<'a> {
            cardinalities: Vec<u32>,
            labels: u32,
            knowledge: &'a [u32],
            support: &'a [usize],
            groups: Option<&'a [Vec<usize>]>,
            extra: Vec<(u32, &'a [u32], &'a [usize])>,
        }
        let canon = Canon {
            cardinalities: self.space.cardinalities(),
            labels: self.knowledge.labels(),
            knowledge: self.knowledge.as_slice(),
            support: self.support.indices(),
            groups: self.family.groups(),
            extra: self
                .extra_tasks
                .iter()
                .map(|e| (e.knowledge.labels(), e.knowledge.as_slice(), e.worlds.as_slice()))
                .collect(),
        };
        let bytes = serde_json::to_vec(&canon).expect("canonical task serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sum-parity over two digits `0..=n`.
    pub fn sum_parity(n: u32, family: AlphaFamily) -> Result<Self> {
        Self::digits_task(n, Builtin::SumParity, family)
    }

    /// Addition over two digits `0..=n`.
    pub fn addition(n: u32, family: AlphaFamily) -> Result<Self> {
        Self::digits_task(n, Builtin::Sum, family)
    }

    /// Sum-parity over two digits `0..=n` trained without (even, odd)
    /// pairs.
    pub fn biased_sum_parity(n: u32, family: AlphaFamily) -> Result<Self> {
        let space = digits_space(n)?;
        let excluded = space
            .worlds()
            .filter(|w| w.0[0] % 2 == 0 && w.0[1] % 2 == 1)
            .collect();
        let knowledge = builtin_knowledge(Builtin::SumParity, &space)?;
        let support = SupportSet::new(&space, SupportMode::Exclude(excluded))?;
        Self::new(space, knowledge, support, family)
    }

    fn digits_task(n: u32, rule: Builtin, family: AlphaFamily) -> Result<Self> {
        let space = digits_space(n)?;
        let knowledge = builtin_knowledge(rule, &space)?;
        let support = SupportSet::full(&space)?;
        Self::new(space, knowledge, support, family)
    }
}

fn digits_space(n: u32) -> Result<ConceptSpace> {
    ConceptSpace::new(vec![
        Factor {
            name: "digit1".into(),
            cardinality: n + 1,
        },
        Factor {
            name: "digit2".into(),
            cardinality: n + 1,
        },
    ])
}
