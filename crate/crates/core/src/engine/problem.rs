use num_bigint::BigUint;

use crate::error::{invalid, Result};
use crate::mitigations::MitigationSet;
use crate::task::{AlphaFamily, ConceptSpace, TaskSpec};

/// One β component: the main knowledge or an extra task.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub labels: u32,
    pub knowledge: Vec<u32>,
    pub pinned: Vec<Option<u32>>,
    pub pinned_count: usize,
}

/// A map entry the search assigns: a world (joint) or a (group, value)
/// slot (factorized).
#[derive(Debug, Clone)]
pub(crate) struct Element {
    pub identity: u32,
    pub range: u32,
    /// Candidate values in identity-offset order, already filtered by
    /// supervision.
    pub candidates: Vec<u32>,
}

/// Task + mitigations flattened into arrays the searches work on.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub space: ConceptSpace,
    pub n_cells: usize,
    pub joint: bool,
    pub group_offset: Vec<usize>,
    pub elements: Vec<Element>,
    pub support: Vec<usize>,
    /// Element ids touched by each support world, one per factor.
    pub world_elements: Vec<Vec<usize>>,
    /// Observed label per (support position, component).
    pub world_labels: Vec<Vec<Option<u32>>>,
    pub comps: Vec<Component>,
    pub reconstruction: bool,
    pub supervised: Option<(Vec<usize>, Vec<usize>)>,
    pub distilled: Option<Vec<usize>>,
}

impl Problem {
    /// `task` must already carry its multi-task components.
    pub fn build(task: &TaskSpec, ms: &MitigationSet, rs_mode: bool) -> Result<Self> {
        ms.validate(task)?;
        let space = task.space.clone();
        let n = space.size();
        let k = space.k();
        let supervised = ms.supervised_worlds(&space)?;
        let distilled = ms.distilled_cells(&space)?;

        let mut comps = vec![Component {
            labels: task.knowledge.labels(),
            knowledge: task.knowledge.as_slice().to_vec(),
            pinned: vec![None; n],
            pinned_count: 0,
        }];
        for e in &task.extra_tasks {
            comps.push(Component {
                labels: e.knowledge.labels(),
                knowledge: e.knowledge.as_slice().to_vec(),
                pinned: vec![None; n],
                pinned_count: 0,
            });
        }
        if rs_mode {
            for c in comps.iter_mut() {
                c.pinned = c.knowledge.iter().map(|&y| Some(y)).collect();
            }
        } else if let Some(cells) = &distilled {
            for &c in cells {
                comps[0].pinned[c] = Some(comps[0].knowledge[c]);
            }
        }
        for c in comps.iter_mut() {
            c.pinned_count = c.pinned.iter().filter(|p| p.is_some()).count();
        }

        let support = task.support.indices().to_vec();
        let world_labels: Vec<Vec<Option<u32>>> = support
            .iter()
            .map(|&g| {
                let mut row = vec![Some(task.knowledge.label(g))];
                for e in &task.extra_tasks {
                    row.push(e.worlds.binary_search(&g).ok().map(|_| e.knowledge.label(g)));
                }
                row
            })
            .collect();

        let sup_mask = supervised.as_ref().map(|(factors, worlds)| {
            let mut on = vec![false; n];
            for &g in worlds {
                on[g] = true;
            }
            (factors.clone(), on)
        });

        let (joint, group_offset, elements, world_elements) = match &task.family {
            AlphaFamily::Joint => {
                let elements = (0..n)
                    .map(|g| {
                        let candidates = offset_order(g as u32, n as u32)
                            .filter(|&c| match &sup_mask {
                                Some((factors, on)) if on[g] => factors
                                    .iter()
                                    .all(|&i| space.digit(c as usize, i) == space.digit(g, i)),
                                _ => true,
                            })
                            .collect();
                        Element {
                            identity: g as u32,
                            range: n as u32,
                            candidates,
                        }
                    })
                    .collect();
                let we = support.iter().map(|&g| vec![g]).collect();
                (true, Vec::new(), elements, we)
            }
            AlphaFamily::Factorized { groups } => {
                let group_of = task.family.group_of(k).unwrap();
                // slots pinned by supervision: (group, value) -> value
                let mut forced: Vec<Vec<bool>> = groups
                    .iter()
                    .map(|g| vec![false; space.cardinality(g[0]) as usize])
                    .collect();
                if let Some((factors, worlds)) = &supervised {
                    for &g in worlds {
                        for &i in factors {
                            forced[group_of[i]][space.digit(g, i) as usize] = true;
                        }
                    }
                }
                let mut offsets = Vec::with_capacity(groups.len());
                let mut elements = Vec::new();
                for (gi, g) in groups.iter().enumerate() {
                    offsets.push(elements.len());
                    let card = space.cardinality(g[0]);
                    for v in 0..card {
                        let candidates = if forced[gi][v as usize] {
                            vec![v]
                        } else {
                            offset_order(v, card).collect()
                        };
                        elements.push(Element {
                            identity: v,
                            range: card,
                            candidates,
                        });
                    }
                }
                let we = support
                    .iter()
                    .map(|&g| {
                        (0..k)
                            .map(|i| offsets[group_of[i]] + space.digit(g, i) as usize)
                            .collect()
                    })
                    .collect();
                (false, offsets, elements, we)
            }
        };
        if elements.iter().any(|e| e.candidates.is_empty()) {
            return invalid("supervision leaves an element without candidates");
        }

        Ok(Problem {
            space,
            n_cells: n,
            joint,
            group_offset,
            elements,
            support,
            world_elements,
            world_labels,
            comps,
            reconstruction: ms.reconstruction,
            supervised,
            distilled,
        })
    }

    /// Elements touched by at least one support world.
    pub fn relevant(&self) -> Vec<bool> {
        let mut rel = vec![false; self.elements.len()];
        for we in &self.world_elements {
            for &e in we {
                rel[e] = true;
            }
        }
        rel
    }

    /// Product of candidate counts of elements no support world touches.
    pub fn irrelevant_multiplier(&self) -> BigUint {
        let rel = self.relevant();
        self.elements
            .iter()
            .zip(&rel)
            .filter(|(_, &r)| !r)
            .fold(BigUint::from(1u32), |acc, (e, _)| acc * e.candidates.len())
    }

    /// Image cell of support position `s` under the assignment `assign`
    /// (element id -> value).
    #[inline]
    pub fn image(&self, s: usize, assign: &[u32]) -> usize {
        let we = &self.world_elements[s];
        if self.joint {
            assign[we[0]] as usize
        } else {
            let mut c = 0;
            for (i, &e) in we.iter().enumerate() {
                c += assign[e] as usize * self.space.stride(i);
            }
            c
        }
    }
}

/// `(id + t) mod range` for `t = 0..range`.
pub(crate) fn offset_order(id: u32, range: u32) -> impl Iterator<Item = u32> {
    (0..range).map(move |t| (id + t) % range)
}
