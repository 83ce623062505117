//! Constraint bundles that restrict the admissible (α, β) pairs: concept
//! supervision, knowledge distillation, reconstruction and multi-task
//! conjunction.

use crate::error::{invalid, Result};
use crate::maps::{AlphaMap, BetaMap};
use crate::task::{ConceptSpace, ExtraTask, KnowledgeTable, TaskSpec, World};

/// A set of worlds given either explicitly or as "everything".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldSet {
    Full,
    Worlds(Vec<World>),
}

impl WorldSet {
    /// Sorted, deduplicated indices; `Full` expands to `full`.
    pub fn resolve(&self, space: &ConceptSpace, full: &[usize]) -> Result<Vec<usize>> {
        match self {
            WorldSet::Full => Ok(full.to_vec()),
            WorldSet::Worlds(ws) => {
                let mut out = Vec::with_capacity(ws.len());
                for w in ws {
                    if !space.contains(w) {
                        return invalid(format!("mitigation world {w} is not in the concept space"));
                    }
                    out.push(space.index_of(w));
                }
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSupervision {
    /// Supervised factor indices.
    pub factors: Vec<usize>,
    pub worlds: WorldSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultitaskSpec {
    pub knowledge: KnowledgeTable,
    /// Worlds where the extra label is observed; `Full` means the support.
    pub worlds: WorldSet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MitigationSet {
    pub concept_supervision: Option<ConceptSupervision>,
    /// Cells where β is distilled to β*; `Full` means every cell.
    pub distillation: Option<WorldSet>,
    pub reconstruction: bool,
    pub multitask: Vec<MultitaskSpec>,
}

impl MitigationSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.concept_supervision.is_none()
            && self.distillation.is_none()
            && !self.reconstruction
            && self.multitask.is_empty()
    }

    pub fn validate(&self, task: &TaskSpec) -> Result<()> {
        let space = &task.space;
        if let Some(cs) = &self.concept_supervision {
            if let Some(&i) = cs.factors.iter().find(|&&i| i >= space.k()) {
                return invalid(format!("supervised factor {i} out of range"));
            }
            cs.worlds.resolve(space, &[])?;
        }
        if let Some(d) = &self.distillation {
            d.resolve(space, &[])?;
        }
        for m in &self.multitask {
            if m.knowledge.as_slice().len() != space.size() {
                return invalid("multitask knowledge does not match the concept space");
            }
            m.worlds.resolve(space, &[])?;
        }
        Ok(())
    }

    /// Supervised world indices (`Full` = all of G).
    pub(crate) fn supervised_worlds(&self, space: &ConceptSpace) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
        let Some(cs) = &self.concept_supervision else {
            return Ok(None);
        };
        let all: Vec<usize> = (0..space.size()).collect();
        let mut factors = cs.factors.clone();
        factors.sort_unstable();
        factors.dedup();
        Ok(Some((factors, cs.worlds.resolve(space, &all)?)))
    }

    /// Distilled cell indices (`Full` = all of C).
    pub(crate) fn distilled_cells(&self, space: &ConceptSpace) -> Result<Option<Vec<usize>>> {
        let Some(d) = &self.distillation else {
            return Ok(None);
        };
        let all: Vec<usize> = (0..space.size()).collect();
        d.resolve(space, &all).map(Some)
    }
}

/// True iff every supervised component is reproduced on every supervised
/// world.
pub fn admits_concept_supervision(alpha: &AlphaMap, space: &ConceptSpace, ms: &MitigationSet) -> bool {
    let Some(cs) = &ms.concept_supervision else {
        return true;
    };
    if cs.factors.is_empty() {
        return true;
    }
    let worlds: Vec<World> = match &cs.worlds {
        WorldSet::Full => space.worlds().collect(),
        WorldSet::Worlds(ws) => ws.clone(),
    };
    worlds.iter().all(|g| {
        let c = alpha.apply(space, g);
        cs.factors.iter().all(|&i| c.0[i] == g.0[i])
    })
}

/// True iff β can equal β* on every distilled cell.
pub fn admits_distillation(beta: &BetaMap, task: &TaskSpec, ms: &MitigationSet) -> bool {
    distill(beta, task, ms).is_some()
}

/// β with its free distilled cells forced to β*, or `None` on a conflict.
pub fn distill(beta: &BetaMap, task: &TaskSpec, ms: &MitigationSet) -> Option<BetaMap> {
    let cells = ms.distilled_cells(&task.space).ok()?;
    let mut out = beta.clone();
    for c in cells.into_iter().flatten() {
        let want = task.knowledge.label(c);
        match beta.cell(c) {
            Some(y) if y != want => return None,
            Some(_) => {}
            None => out.set(c, want),
        }
    }
    Some(out)
}

/// True iff α is injective on the support.
pub fn admits_reconstruction(alpha: &AlphaMap, task: &TaskSpec) -> bool {
    let mut images: Vec<usize> = task
        .support
        .indices()
        .iter()
        .map(|&g| alpha.image_index(&task.space, g))
        .collect();
    images.sort_unstable();
    images.windows(2).all(|w| w[0] != w[1])
}

/// Adds each extra task as a label component. A task whose knowledge table
/// equals an existing component's is merged into it.
pub fn conjoin_multitask(task: &TaskSpec, ms: &MitigationSet) -> Result<TaskSpec> {
    let mut out = task.clone();
    let support = task.support.indices();
    for m in &ms.multitask {
        if m.knowledge.as_slice().len() != task.space.size() {
            return invalid("multitask knowledge does not match the concept space");
        }
        let worlds = m.worlds.resolve(&task.space, support)?;
        if let Some(&g) = worlds.iter().find(|&&g| !task.support.contains_index(g)) {
            return invalid(format!(
                "multitask world {} lies outside the support",
                task.space.world_at(g)
            ));
        }
        if worlds.is_empty() || m.knowledge == task.knowledge {
            continue;
        }
        match out.extra_tasks.iter_mut().find(|e| e.knowledge == m.knowledge) {
            Some(e) => {
                e.worlds.extend(worlds);
                e.worlds.sort_unstable();
                e.worlds.dedup();
            }
            None => out.extra_tasks.push(ExtraTask {
                knowledge: m.knowledge.clone(),
                worlds,
            }),
        }
    }
    Ok(out)
}
