//! Deterministic concept maps α: G → C and inference maps β: C → Y, the
//! optimality predicate, and the permutation/bijection witnesses that
//! relate a pair to the ground truth `(id, β*)`.

use num_bigint::BigUint;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::perm::class_preserving_permutations;
use crate::task::{AlphaFamily, ConceptSpace, KnowledgeTable, TaskSpec, World};

/// Largest number of factors for which the permutation search in
/// [`check_intended`] runs.
pub const MAX_WITNESS_FACTORS: usize = 8;

/// A deterministic vertex of the concept-map simplex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AlphaMap {
    /// Image world index for every world index.
    Joint(Vec<usize>),
    /// One value table per tie-group; `group_of[i]` selects factor `i`'s table.
    Factored {
        group_of: Vec<usize>,
        tables: Vec<Vec<u32>>,
    },
}

impl AlphaMap {
    pub fn identity(space: &ConceptSpace, family: &AlphaFamily) -> Self {
        match family {
            AlphaFamily::Joint => AlphaMap::Joint((0..space.size()).collect()),
            AlphaFamily::Factorized { groups } => AlphaMap::Factored {
                group_of: family.group_of(space.k()).unwrap(),
                tables: groups
                    .iter()
                    .map(|g| (0..space.cardinality(g[0])).collect())
                    .collect(),
            },
        }
    }

    /// Factor-table map for a factorized family; tables are indexed by
    /// group in the family's order.
    pub fn factored(space: &ConceptSpace, family: &AlphaFamily, tables: Vec<Vec<u32>>) -> Result<Self> {
        let Some(groups) = family.groups() else {
            return invalid("factor tables need a factorized family");
        };
        if tables.len() != groups.len() {
            return invalid("one table per tie-group expected");
        }
        for (g, t) in groups.iter().zip(&tables) {
            let card = space.cardinality(g[0]);
            if t.len() != card as usize || t.iter().any(|&v| v >= card) {
                return invalid("factor table not total on its value range");
            }
        }
        Ok(AlphaMap::Factored {
            group_of: family.group_of(space.k()).unwrap(),
            tables,
        })
    }

    pub fn joint(space: &ConceptSpace, table: Vec<usize>) -> Result<Self> {
        let n = space.size();
        if table.len() != n || table.iter().any(|&c| c >= n) {
            return invalid("joint table not total on the concept space");
        }
        Ok(AlphaMap::Joint(table))
    }

    /// Image index of the world with index `g`.
    pub fn image_index(&self, space: &ConceptSpace, g: usize) -> usize {
        match self {
            AlphaMap::Joint(t) => t[g],
            AlphaMap::Factored { group_of, tables } => (0..space.k())
                .map(|i| tables[group_of[i]][space.digit(g, i) as usize] as usize * space.stride(i))
                .sum(),
        }
    }

    pub fn apply(&self, space: &ConceptSpace, g: &World) -> World {
        match self {
            AlphaMap::Joint(t) => space.world_at(t[space.index_of(g)]),
            AlphaMap::Factored { group_of, tables } => World(
                g.0.iter()
                    .enumerate()
                    .map(|(i, &v)| tables[group_of[i]][v as usize])
                    .collect(),
            ),
        }
    }

    /// The equivalent joint table.
    pub fn expand(&self, space: &ConceptSpace) -> Vec<usize> {
        match self {
            AlphaMap::Joint(t) => t.clone(),
            _ => (0..space.size()).map(|g| self.image_index(space, g)).collect(),
        }
    }

    pub fn is_identity(&self, space: &ConceptSpace) -> bool {
        match self {
            AlphaMap::Joint(t) => t.iter().enumerate().all(|(i, &c)| i == c),
            AlphaMap::Factored { tables, .. } => {
                let _ = space;
                tables
                    .iter()
                    .all(|t| t.iter().enumerate().all(|(v, &c)| v as u32 == c))
            }
        }
    }
}

/// A deterministic inference map; `None` cells are free (never reached).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BetaMap {
    labels: u32,
    cells: Vec<Option<u32>>,
}

impl BetaMap {
    pub fn new(labels: u32, cells: Vec<Option<u32>>) -> Result<Self> {
        if cells.iter().flatten().any(|&y| y >= labels) {
            return invalid("beta cell label out of range");
        }
        Ok(BetaMap { labels, cells })
    }

    pub fn free(cells: usize, labels: u32) -> Self {
        BetaMap {
            labels,
            cells: vec![None; cells],
        }
    }

    /// β ≡ the knowledge table, every cell forced.
    pub fn from_knowledge(k: &KnowledgeTable) -> Self {
        BetaMap {
            labels: k.labels(),
            cells: k.as_slice().iter().map(|&y| Some(y)).collect(),
        }
    }

    pub fn labels(&self) -> u32 {
        self.labels
    }

    pub fn cell(&self, c: usize) -> Option<u32> {
        self.cells[c]
    }

    pub fn cells(&self) -> &[Option<u32>] {
        &self.cells
    }

    pub fn set(&mut self, c: usize, y: u32) {
        assert!(y < self.labels);
        self.cells[c] = Some(y);
    }

    /// Indices of forced cells.
    pub fn reach(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|_| i))
    }

    pub fn free_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }
}

/// True iff `β(α(g)) = β*(g)` on every support world.
pub fn is_optimal_pair(alpha: &AlphaMap, beta: &BetaMap, task: &TaskSpec) -> Result<bool> {
    let space = &task.space;
    let mut optimal = true;
    for &g in task.support.indices() {
        let c = alpha.image_index(space, g);
        match beta.cell(c) {
            None => {
                return Err(Error::Validation(format!(
                    "beta undefined on reached cell {}",
                    space.world_at(c)
                )))
            }
            Some(y) if y != task.knowledge.label(g) => optimal = false,
            Some(_) => {}
        }
    }
    Ok(optimal)
}

/// A concept permutation `pi` and per-concept value bijections `psi`,
/// acting as `c_i = psi_i(g_{pi(i)})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct IntendedWitness {
    pub pi: Vec<usize>,
    pub psi: Vec<Vec<u32>>,
}

impl IntendedWitness {
    pub fn identity(space: &ConceptSpace) -> Self {
        IntendedWitness {
            pi: (0..space.k()).collect(),
            psi: (0..space.k())
                .map(|i| (0..space.cardinality(i)).collect())
                .collect(),
        }
    }

    pub fn new(space: &ConceptSpace, pi: Vec<usize>, psi: Vec<Vec<u32>>) -> Result<Self> {
        let w = IntendedWitness { pi, psi };
        w.validate(&space.cardinalities())?;
        Ok(w)
    }

    fn validate(&self, cards: &[u32]) -> Result<()> {
        let k = cards.len();
        if self.pi.len() != k || self.psi.len() != k {
            return invalid("cardinality mismatch: witness arity differs from the space");
        }
        let mut seen = vec![false; k];
        for (i, &p) in self.pi.iter().enumerate() {
            if p >= k || seen[p] {
                return invalid("pi is not a permutation");
            }
            seen[p] = true;
            if cards[p] != cards[i] {
                return invalid("cardinality mismatch: pi maps between factors of different size");
            }
        }
        for (psi, &card) in self.psi.iter().zip(cards) {
            if !is_bijection(psi, card) {
                return invalid("psi component is not a bijection");
            }
        }
        Ok(())
    }

    fn cards(&self) -> Vec<u32> {
        self.psi.iter().map(|p| p.len() as u32).collect()
    }

    pub fn apply(&self, g: &World) -> World {
        World(
            (0..self.pi.len())
                .map(|i| self.psi[i][g.0[self.pi[i]] as usize])
                .collect(),
        )
    }

    pub fn apply_index(&self, space: &ConceptSpace, g: usize) -> usize {
        (0..self.pi.len())
            .map(|i| self.psi[i][space.digit(g, self.pi[i]) as usize] as usize * space.stride(i))
            .sum()
    }

    /// The α induced by this witness as a joint table.
    pub fn to_alpha(&self, space: &ConceptSpace) -> AlphaMap {
        AlphaMap::Joint((0..space.size()).map(|g| self.apply_index(space, g)).collect())
    }

    /// The inference map `β* ∘ P_π⁻¹ ∘ ψ⁻¹`.
    pub fn intended_beta(&self, space: &ConceptSpace, knowledge: &KnowledgeTable) -> BetaMap {
        let mut cells = vec![None; space.size()];
        for g in 0..space.size() {
            cells[self.apply_index(space, g)] = Some(knowledge.label(g));
        }
        BetaMap {
            labels: knowledge.labels(),
            cells,
        }
    }
}

fn is_bijection(values: &[u32], card: u32) -> bool {
    if values.len() != card as usize {
        return false;
    }
    let mut seen = vec![false; card as usize];
    for &v in values {
        if v >= card || seen[v as usize] {
            return false;
        }
        seen[v as usize] = true;
    }
    true
}

/// The witness of "apply `first`, then `second`".
pub fn compose_witness(first: &IntendedWitness, second: &IntendedWitness) -> Result<IntendedWitness> {
    let cards = first.cards();
    if cards != second.cards() {
        return invalid("cardinality mismatch between composed witnesses");
    }
    first.validate(&cards)?;
    second.validate(&cards)?;
    let k = cards.len();
    let pi = (0..k).map(|i| first.pi[second.pi[i]]).collect();
    let psi = (0..k)
        .map(|i| {
            let inner = &first.psi[second.pi[i]];
            inner.iter().map(|&v| second.psi[i][v as usize]).collect()
        })
        .collect();
    Ok(IntendedWitness { pi, psi })
}

pub fn invert_witness(w: &IntendedWitness) -> IntendedWitness {
    let k = w.pi.len();
    let mut pi_inv = vec![0; k];
    for (i, &p) in w.pi.iter().enumerate() {
        pi_inv[p] = i;
    }
    let psi = (0..k)
        .map(|m| {
            let src = &w.psi[pi_inv[m]];
            let mut inv = vec![0u32; src.len()];
            for (v, &c) in src.iter().enumerate() {
                inv[c as usize] = v as u32;
            }
            inv
        })
        .collect();
    IntendedWitness { pi: pi_inv, psi }
}

/// Searches for `(π, ψ)` with `α = ψ ∘ P_π` and β agreeing with
/// `β* ∘ P_π⁻¹ ∘ ψ⁻¹` on its forced cells.
pub fn check_intended(
    alpha: &AlphaMap,
    beta: &BetaMap,
    task: &TaskSpec,
) -> Result<Option<IntendedWitness>> {
    let space = &task.space;
    let k = space.k();
    if k > MAX_WITNESS_FACTORS {
        return invalid(format!(
            "intended-semantics search supports at most {MAX_WITNESS_FACTORS} factors, got {k}"
        ));
    }
    let table = alpha.expand(space);
    let cards = space.cardinalities();
    'perm: for pi in class_preserving_permutations(&cards, &vec![false; k]) {
        let mut psi: Vec<Vec<Option<u32>>> =
            cards.iter().map(|&c| vec![None; c as usize]).collect();
        for (g, &c) in table.iter().enumerate() {
            for i in 0..k {
                let v = space.digit(g, pi[i]) as usize;
                let img = space.digit(c, i);
                match psi[i][v] {
                    None => psi[i][v] = Some(img),
                    Some(prev) if prev != img => continue 'perm,
                    Some(_) => {}
                }
            }
        }
        let psi: Vec<Vec<u32>> = psi
            .into_iter()
            .map(|p| p.into_iter().map(|v| v.unwrap()).collect())
            .collect();
        if !psi.iter().zip(&cards).all(|(p, &c)| is_bijection(p, c)) {
            continue;
        }
        // α is a bijection now, so every forced cell has a unique preimage.
        for (g, &c) in table.iter().enumerate() {
            if let Some(y) = beta.cell(c) {
                if y != task.knowledge.label(g) {
                    continue 'perm;
                }
            }
        }
        return Ok(Some(IntendedWitness { pi, psi }));
    }
    Ok(None)
}

/// Closed form `Π_ξ m(ξ)! · Π_i |G_i|!` over the multiset of factor
/// cardinalities.
pub fn intended_pair_count(space: &ConceptSpace) -> BigUint {
    let mut multiplicity: BTreeMap<u32, u32> = BTreeMap::new();
    for c in space.cardinalities() {
        *multiplicity.entry(c).or_default() += 1;
    }
    let fact = |n: u32| (1..=n).fold(BigUint::from(1u32), |acc, x| acc * x);
    let perms = multiplicity
        .values()
        .fold(BigUint::from(1u32), |acc, &m| acc * fact(m));
    space
        .cardinalities()
        .into_iter()
        .fold(perms, |acc, c| acc * fact(c))
}
