//! Literal double loop over V(A) x V(B): the reference the faster methods
//! are checked against.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::maps::{is_optimal_pair, AlphaMap, BetaMap};
use crate::mitigations::{admits_concept_supervision, admits_distillation, admits_reconstruction, MitigationSet};
use crate::task::{AlphaFamily, SupportMode, SupportSet, TaskSpec};

pub const DEFAULT_NAIVE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveCounts {
    /// Optimal (α, β) pairs, every β cell counted.
    pub optimal_pairs: BigUint,
    /// α's with at least one optimal β.
    pub admissible_alphas: BigUint,
    /// α's that are optimal with β fixed to the knowledge.
    pub rs_alphas: BigUint,
}

fn alpha_space(task: &TaskSpec) -> BigUint {
    let n = task.space.total_worlds();
    match &task.family {
        AlphaFamily::Joint => n.pow(task.space.size() as u32),
        AlphaFamily::Factorized { groups } => groups.iter().fold(BigUint::from(1u32), |acc, g| {
            let c = task.space.cardinality(g[0]);
            acc * BigUint::from(c).pow(c)
        }),
    }
}

/// Advances an odometer with digit range `base`; false after wrap-around.
fn bump(digits: &mut [u32], base: &[u32]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < base[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}

fn alphas(task: &TaskSpec) -> Vec<AlphaMap> {
    let space = &task.space;
    let mut out = Vec::new();
    match &task.family {
        AlphaFamily::Joint => {
            let n = space.size();
            let base = vec![n as u32; n];
            let mut d = vec![0u32; n];
            loop {
                out.push(AlphaMap::Joint(d.iter().map(|&c| c as usize).collect()));
                if !bump(&mut d, &base) {
                    break;
                }
            }
        }
        AlphaFamily::Factorized { groups } => {
            let cards: Vec<u32> = groups.iter().map(|g| space.cardinality(g[0])).collect();
            let base: Vec<u32> = cards.iter().flat_map(|&c| std::iter::repeat(c).take(c as usize)).collect();
            let mut d = vec![0u32; base.len()];
            loop {
                let mut tables = Vec::with_capacity(cards.len());
                let mut at = 0;
                for &c in &cards {
                    tables.push(d[at..at + c as usize].to_vec());
                    at += c as usize;
                }
                out.push(AlphaMap::factored(space, &task.family, tables).unwrap());
                if !bump(&mut d, &base) {
                    break;
                }
            }
        }
    }
    out
}

/// Exhaustive count of optimal pairs under `ms`. Errors when
/// `|V(A)| * |V(B)|` exceeds `budget`.
pub fn naive_count_pairs(task: &TaskSpec, ms: &MitigationSet, budget: u64) -> Result<NaiveCounts> {
    let task = crate::mitigations::conjoin_multitask(task, ms)?;
    let space = &task.space;
    let n = space.size();

    // one pseudo-task per β component: its knowledge on its observed worlds
    let mut comps = vec![task.clone()];
    for e in &task.extra_tasks {
        let support = SupportSet::new(
            space,
            SupportMode::Include(e.worlds.iter().map(|&g| space.world_at(g)).collect()),
        )?;
        let mut t = TaskSpec::new(space.clone(), e.knowledge.clone(), support, task.family.clone())?;
        t.extra_tasks.clear();
        comps.push(t);
    }
    let labels: Vec<u32> = comps.iter().map(|t| t.knowledge.labels()).collect();
    let beta_space = labels
        .iter()
        .fold(BigUint::from(1u32), |acc, &l| acc * BigUint::from(l).pow(n as u32));
    let size = alpha_space(&task) * &beta_space;
    if size > BigUint::from(budget) {
        return Err(Error::SpaceTooLarge(format!(
            "naive loop needs {size} pairs, budget is {budget}"
        )));
    }
    let beta_count = beta_space.to_u64().unwrap();

    let knowledge_betas: Vec<BetaMap> = comps.iter().map(|t| BetaMap::from_knowledge(&t.knowledge)).collect();
    let base: Vec<u32> = labels.iter().flat_map(|&l| std::iter::repeat(l).take(n)).collect();

    let mut pairs = 0u64;
    let mut admissible = 0u64;
    let mut rs = 0u64;
    for alpha in alphas(&task) {
        if !admits_concept_supervision(&alpha, space, ms) {
            continue;
        }
        if ms.reconstruction && !admits_reconstruction(&alpha, &task) {
            continue;
        }
        let all_opt = |betas: &[BetaMap]| -> bool {
            comps
                .iter()
                .zip(betas)
                .all(|(t, b)| is_optimal_pair(&alpha, b, t).unwrap())
        };
        if all_opt(&knowledge_betas) {
            rs += 1;
        }
        let mut digits = vec![0u32; base.len()];
        let mut betas: Vec<BetaMap> = labels.iter().map(|&l| BetaMap::free(n, l)).collect();
        let mut found = 0u64;
        for _ in 0..beta_count {
            for (j, b) in betas.iter_mut().enumerate() {
                for c in 0..n {
                    b.set(c, digits[j * n + c]);
                }
            }
            if all_opt(&betas) && (ms.distillation.is_none() || admits_distillation(&betas[0], &task, ms)) {
                found += 1;
            }
            bump(&mut digits, &base);
        }
        pairs += found;
        admissible += (found > 0) as u64;
    }
    Ok(NaiveCounts {
        optimal_pairs: pairs.into(),
        admissible_alphas: admissible.into(),
        rs_alphas: rs.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{ConceptSpace, KnowledgeTable};

    #[test]
    fn tied_binary_sum_parity() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::tied(2)).unwrap();
        let c = naive_count_pairs(&t, &MitigationSet::none(), DEFAULT_NAIVE_BUDGET).unwrap();
        assert_eq!(c.optimal_pairs, 2u32.into());
        assert_eq!(c.rs_alphas, 2u32.into());
    }

    #[test]
    fn untied_binary_sum_parity() {
        let t = TaskSpec::sum_parity(1, AlphaFamily::untied(2)).unwrap();
        let c = naive_count_pairs(&t, &MitigationSet::none(), DEFAULT_NAIVE_BUDGET).unwrap();
        assert_eq!(c.optimal_pairs, 4u32.into());
    }

    #[test]
    fn single_label_task() {
        let s = ConceptSpace::from_cardinalities(&[2]).unwrap();
        let k = KnowledgeTable::new(&s, 1, vec![0, 0]).unwrap();
        let t = TaskSpec::new(s.clone(), k, SupportSet::full(&s).unwrap(), AlphaFamily::Joint).unwrap();
        let c = naive_count_pairs(&t, &MitigationSet::none(), DEFAULT_NAIVE_BUDGET).unwrap();
        assert_eq!(c.optimal_pairs, 4u32.into());
    }

    #[test]
    fn over_budget_is_rejected() {
        let t = TaskSpec::sum_parity(2, AlphaFamily::Joint).unwrap();
        assert!(matches!(
            naive_count_pairs(&t, &MitigationSet::none(), DEFAULT_NAIVE_BUDGET),
            Err(Error::SpaceTooLarge(_))
        ));
    }
}
