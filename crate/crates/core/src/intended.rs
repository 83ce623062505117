//! Enumeration of the intended-semantics witnesses representable in an
//! α-family, and the subtrahends derived from them.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::engine::problem::Problem;
use crate::error::{Error, Result};
use crate::mitigations::MitigationSet;
use crate::perm::{class_preserving_permutations, next_permutation};
use crate::task::{AlphaFamily, ConceptSpace, TaskSpec};

pub const DEFAULT_WITNESS_CAP: u64 = 10_000_000;

/// Which number is subtracted from the optimal-pair total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubtrahendPolicy {
    /// Shortcut-aware when enumerable, closed form otherwise (unmitigated
    /// joint family only).
    Auto,
    /// Intended pairs surviving the mitigations, except non-identity
    /// ones whose α already preserves the knowledge on the data.
    ShortcutAware,
    /// Every intended pair in the family surviving the mitigations.
    Representable,
    /// `C[G]` verbatim.
    ClosedForm,
}

impl SubtrahendPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "shortcut-aware" => Some(Self::ShortcutAware),
            "representable" => Some(Self::Representable),
            "closed-form" => Some(Self::ClosedForm),
            _ => None,
        }
    }
}

/// Witness counts by category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WitnessTally {
    pub witnesses: u64,
    /// Intended pairs (α, β* ∘ α⁻¹) surviving every mitigation.
    pub representable_redundant: u64,
    /// Intended α's admissible under the mitigations.
    pub representable_nonredundant: u64,
    pub shortcut_aware_redundant: u64,
    pub shortcut_aware_nonredundant: u64,
    /// Non-identity intended α's that also preserve the knowledge on the
    /// data, i.e. RSs admitting a witness.
    pub rs_intended: u64,
}

/// Number of distinct α's of the form `ψ ∘ P_π` in the family. Unit
/// factors are never permuted, since doing so yields the same map.
pub fn witness_count(space: &ConceptSpace, family: &AlphaFamily) -> BigUint {
    let fact = |n: u32| (1..=n).fold(BigUint::from(1u32), |acc, x| acc * x);
    match family {
        AlphaFamily::Joint => {
            let mut mult: BTreeMap<u32, u32> = BTreeMap::new();
            for c in space.cardinalities() {
                if c > 1 {
                    *mult.entry(c).or_default() += 1;
                }
            }
            let perms = mult.values().fold(BigUint::from(1u32), |acc, &m| acc * fact(m));
            space.cardinalities().into_iter().fold(perms, |acc, c| acc * fact(c))
        }
        AlphaFamily::Factorized { groups } => groups
            .iter()
            .fold(BigUint::from(1u32), |acc, g| acc * fact(space.cardinality(g[0]))),
    }
}

/// Advances a tuple of permutations odometer-style.
fn bump(slots: &mut [Vec<u32>]) -> bool {
    for s in slots.iter_mut().rev() {
        if next_permutation(s) {
            return true;
        }
    }
    false
}

/// Classifies every representable witness against the problem. `None`
/// when the witness count exceeds `cap`.
pub(crate) fn tally(p: &Problem, family: &AlphaFamily, cap: u64) -> Option<WitnessTally> {
    let space = &p.space;
    let total = witness_count(space, family).to_u64().filter(|&w| w <= cap)?;
    let k = space.k();
    let n = p.n_cells;
    let cards = space.cardinalities();

    let (perms, slot_of): (Vec<Vec<usize>>, Vec<usize>) = match family {
        AlphaFamily::Joint => {
            let fixed: Vec<bool> = cards.iter().map(|&c| c == 1).collect();
            (class_preserving_permutations(&cards, &fixed), (0..k).collect())
        }
        AlphaFamily::Factorized { .. } => (vec![(0..k).collect()], family.group_of(k).unwrap()),
    };
    let slot_cards: Vec<u32> = match family {
        AlphaFamily::Joint => cards.clone(),
        AlphaFamily::Factorized { groups } => groups.iter().map(|g| cards[g[0]]).collect(),
    };

    let mut pinned = vec![false; n];
    if let Some(cells) = &p.distilled {
        for &c in cells {
            pinned[c] = true;
        }
    }
    let kn = &p.comps[0].knowledge;
    let mut out = WitnessTally {
        witnesses: total,
        ..Default::default()
    };
    let mut img = vec![0usize; n];

    for pi in &perms {
        let mut slots: Vec<Vec<u32>> = slot_cards.iter().map(|&c| (0..c).collect()).collect();
        loop {
            let mut identity = pi.iter().enumerate().all(|(i, &p)| i == p);
            identity &= slots.iter().all(|s| s.iter().enumerate().all(|(v, &x)| v as u32 == x));
            for (g, slot) in img.iter_mut().enumerate() {
                let mut c = 0;
                for i in 0..k {
                    c += slots[slot_of[i]][space.digit(g, pi[i]) as usize] as usize * space.stride(i);
                }
                *slot = c;
            }
            let sup_ok = match &p.supervised {
                None => true,
                Some((factors, worlds)) => worlds.iter().all(|&g| {
                    factors.iter().all(|&i| space.digit(img[g], i) == space.digit(g, i))
                }),
            };
            if sup_ok {
                let red_ok = (0..n).all(|g| !pinned[img[g]] || kn[g] == kn[img[g]]);
                let nr_ok = p.support.iter().all(|&g| !pinned[img[g]] || kn[g] == kn[img[g]]);
                let rs_consistent = p.support.iter().enumerate().all(|(s, &g)| {
                    p.world_labels[s]
                        .iter()
                        .zip(&p.comps)
                        .all(|(y, comp)| y.is_none_or(|y| comp.knowledge[img[g]] == y))
                });
                let keep = identity || !rs_consistent;
                out.representable_redundant += red_ok as u64;
                out.representable_nonredundant += nr_ok as u64;
                out.shortcut_aware_redundant += (red_ok && keep) as u64;
                out.shortcut_aware_nonredundant += (nr_ok && keep) as u64;
                out.rs_intended += (!identity && rs_consistent) as u64;
            }
            if !bump(&mut slots) {
                break;
            }
        }
    }
    Some(out)
}

/// Intended pairs in the declared family on the unmitigated task.
pub fn representable_intended_count(task: &TaskSpec, cap: u64) -> Result<BigUint> {
    let p = Problem::build(task, &MitigationSet::none(), false)?;
    match tally(&p, &task.family, cap) {
        Some(t) => Ok(t.representable_redundant.into()),
        None => Err(Error::BudgetExceeded(format!(
            "{} witnesses exceed the enumeration cap {cap}",
            witness_count(&task.space, &task.family)
        ))),
    }
}

/// Full witness tally for a task under mitigations (multi-task components
/// must already be conjoined).
pub fn intended_tally(task: &TaskSpec, ms: &MitigationSet, cap: u64) -> Result<Option<WitnessTally>> {
    let p = Problem::build(task, ms, false)?;
    Ok(tally(&p, &task.family, cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::intended_pair_count;
    use crate::task::{KnowledgeTable, SupportSet};

    #[test]
    fn untied_binary_has_four() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::untied(2)).unwrap();
        assert_eq!(representable_intended_count(&t, DEFAULT_WITNESS_CAP).unwrap(), 4u32.into());
    }

    #[test]
    fn joint_binary_matches_closed_form() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::Joint).unwrap();
        assert_eq!(
            representable_intended_count(&t, DEFAULT_WITNESS_CAP).unwrap(),
            intended_pair_count(&t.space)
        );
    }

    #[test]
    fn single_factor_bijections() {
        let s = ConceptSpace::from_cardinalities(&[2]).unwrap();
        let k = KnowledgeTable::new(&s, 2, vec![0, 1]).unwrap();
        let t = TaskSpec::new(s.clone(), k, SupportSet::full(&s).unwrap(), AlphaFamily::Joint).unwrap();
        assert_eq!(representable_intended_count(&t, DEFAULT_WITNESS_CAP).unwrap(), 2u32.into());
    }

    #[test]
    fn unit_factors_are_not_permuted() {
        let s = ConceptSpace::from_cardinalities(&[1, 1, 2]).unwrap();
        assert_eq!(witness_count(&s, &AlphaFamily::Joint), 2u32.into());
        assert_eq!(intended_pair_count(&s), 4u32.into());
    }

    #[test]
    fn shortcut_aware_keeps_symmetries_out() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::untied(2)).unwrap();
        let w = intended_tally(&t, &MitigationSet::none(), DEFAULT_WITNESS_CAP).unwrap().unwrap();
        assert_eq!(w.representable_redundant, 4);
        // (swap, swap) preserves parity
        assert_eq!(w.rs_intended, 1);
        assert_eq!(w.shortcut_aware_redundant, 3);
    }

    #[test]
    fn cap_is_enforced() {
        let t = TaskSpec::sum_parity(3, AlphaFamily::Joint).unwrap();
        assert!(representable_intended_count(&t, 10).is_err());
    }
}
