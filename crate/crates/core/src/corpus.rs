//! Seeded corpus of small tasks and the oracle checks run over it.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnf::{encode_task, scaled_count, CnfTarget};
use crate::engine::{count_with_mitigations, naive_count_pairs, CountOptions, Method, Mode};
use crate::error::Error;
use crate::mitigations::{MitigationSet, WorldSet};
use crate::task::{AlphaFamily, ConceptSpace, KnowledgeTable, SupportMode, SupportSet, TaskSpec};

pub const CORPUS_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone)]
pub struct CorpusTask {
    pub name: String,
    pub task: TaskSpec,
}

/// Concept spaces with at most two factors of cardinality at most 3.
pub fn corpus_spaces() -> Vec<ConceptSpace> {
    let mut out: Vec<ConceptSpace> = (1..=3).map(|a| ConceptSpace::from_cardinalities(&[a]).unwrap()).collect();
    for a in 1..=3 {
        for b in 1..=3 {
            out.push(ConceptSpace::from_cardinalities(&[a, b]).unwrap());
        }
    }
    out
}

/// 50 knowledge tables: two per (space, |Y| ∈ {2, 3}) plus two with a
/// single label.
pub fn corpus_tables() -> Vec<(String, KnowledgeTable, ConceptSpace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let spaces = corpus_spaces();
    let mut out = Vec::new();
    for (si, s) in spaces.iter().enumerate() {
        for labels in [2u32, 3] {
            for rep in 0..2 {
                let table = (0..s.size()).map(|_| rng.gen_range(0..labels)).collect();
                let name = format!("s{si}-y{labels}-t{rep}");
                out.push((name, KnowledgeTable::new(s, labels, table).unwrap(), s.clone()));
            }
        }
    }
    for si in [1usize, 7] {
        let s = &spaces[si];
        out.push((format!("s{si}-y1"), KnowledgeTable::new(s, 1, vec![0; s.size()]).unwrap(), s.clone()));
    }
    out
}

fn families(space: &ConceptSpace) -> Vec<(&'static str, AlphaFamily)> {
    let k = space.k();
    let mut out = vec![("joint", AlphaFamily::Joint), ("untied", AlphaFamily::untied(k))];
    if k > 1 && space.cardinalities().windows(2).all(|w| w[0] == w[1]) {
        out.push(("tied", AlphaFamily::tied(k)));
    }
    out
}

/// Every corpus table under every applicable family, with full support and
/// a seeded random half support.
pub fn small_corpus() -> Vec<CorpusTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED ^ 0xa11);
    let mut out = Vec::new();
    for (name, k, space) in corpus_tables() {
        let n = space.size();
        let half: Vec<_> = {
            let mut idx = sample(&mut rng, n, n.div_ceil(2)).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| space.world_at(i)).collect()
        };
        let supports = [
            ("full", SupportSet::full(&space).unwrap()),
            ("half", SupportSet::new(&space, SupportMode::Include(half)).unwrap()),
        ];
        for (fname, fam) in families(&space) {
            for (sname, sup) in &supports {
                out.push(CorpusTask {
                    name: format!("{name}-{fname}-{sname}"),
                    task: TaskSpec::new(space.clone(), k.clone(), sup.clone(), fam.clone()).unwrap(),
                });
            }
        }
    }
    out
}

/// The mitigation sets exercised on corpus tasks (the unmitigated one
/// first).
pub fn mitigation_variants(task: &TaskSpec) -> Vec<(&'static str, MitigationSet)> {
    let mut sup_first = MitigationSet::none();
    sup_first.concept_supervision = Some(crate::mitigations::ConceptSupervision {
        factors: vec![0],
        worlds: WorldSet::Full,
    });
    let mut partial_distill = MitigationSet::none();
    let some: Vec<_> = task.space.worlds().step_by(2).collect();
    partial_distill.distillation = Some(WorldSet::Worlds(some));
    let mut multi = MitigationSet::none();
    let side: Vec<u32> = (0..task.space.size()).map(|g| task.space.world_at(g).0[0] % 2).collect();
    multi.multitask = vec![crate::mitigations::MultitaskSpec {
        knowledge: KnowledgeTable::new(&task.space, 2, side).unwrap(),
        worlds: WorldSet::Full,
    }];
    vec![
        ("none", MitigationSet::none()),
        ("supervision", sup_first),
        (
            "distillation",
            MitigationSet {
                distillation: Some(WorldSet::Full),
                ..Default::default()
            },
        ),
        ("partial-distillation", partial_distill),
        (
            "reconstruction",
            MitigationSet {
                reconstruction: true,
                ..Default::default()
            },
        ),
        ("multitask", multi),
    ]
}

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub checked: usize,
    pub skipped: usize,
    pub failure: Option<String>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

fn opts(workers: usize) -> CountOptions {
    CountOptions::default().with_workers(workers)
}

/// Fast oracle checks over the corpus, as run by `selftest`.
pub fn selftest(naive_budget: u64) -> Vec<PropertyResult> {
    let corpus = small_corpus();
    let mut out = Vec::new();

    let mut r = PropertyResult {
        name: "naive oracle equals engine optimal-pair count",
        checked: 0,
        skipped: 0,
        failure: None,
    };
    let mut c = PropertyResult {
        name: "cnf model count equals engine optimal-pair count",
        checked: 0,
        skipped: 0,
        failure: None,
    };
    let mut d = PropertyResult {
        name: "full distillation jrs equals rs",
        checked: 0,
        skipped: 0,
        failure: None,
    };
    let mut w = PropertyResult {
        name: "counts independent of worker count",
        checked: 0,
        skipped: 0,
        failure: None,
    };
    let none = MitigationSet::none();
    for ct in &corpus {
        let t = &ct.task;
        let fail = |p: &mut PropertyResult, msg: String| {
            if p.failure.is_none() {
                p.failure = Some(format!("{} ({}): {msg}", t.digest(), ct.name));
            }
        };
        let base = match count_with_mitigations(t, &none, &opts(1).with_mode(Mode::Jrs)) {
            Ok(b) => b,
            Err(e) => {
                fail(&mut r, e.to_string());
                continue;
            }
        };
        let pairs = base.optimal_pairs.clone().unwrap_or_default();
        match naive_count_pairs(t, &none, naive_budget) {
            Ok(n) if n.optimal_pairs == pairs => r.checked += 1,
            Ok(n) => fail(&mut r, format!("naive {} vs engine {pairs}", n.optimal_pairs)),
            Err(Error::SpaceTooLarge(_)) => r.skipped += 1,
            Err(e) => fail(&mut r, e.to_string()),
        }
        match encode_task(t, &none, CnfTarget::OptimalPairs, true).and_then(|f| scaled_count(&f, 2_000_000)) {
            Ok(n) if n == pairs => c.checked += 1,
            Ok(n) => fail(&mut c, format!("cnf {n} vs engine {pairs}")),
            Err(Error::BudgetExceeded(_)) => c.skipped += 1,
            Err(e) => fail(&mut c, e.to_string()),
        }
        let ms = MitigationSet {
            distillation: Some(WorldSet::Full),
            ..Default::default()
        };
        let rs = count_with_mitigations(t, &none, &opts(1).with_mode(Mode::Rs));
        let jd = count_with_mitigations(t, &ms, &opts(1).with_method(Method::Pruned));
        match (rs, jd) {
            (Ok(a), Ok(b)) if Some(a.rs_count.clone()) == b.jrs_count_redundant => d.checked += 1,
            (Ok(a), Ok(b)) => fail(&mut d, format!("rs {} vs distilled jrs {:?}", a.rs_count, b.jrs_count_redundant)),
            (Err(e), _) | (_, Err(e)) => fail(&mut d, e.to_string()),
        }
        match count_with_mitigations(t, &none, &opts(4).with_method(Method::Pruned)) {
            Ok(p) if p.optimal_pairs == base.optimal_pairs && p.admissible_alpha_count == base.admissible_alpha_count => {
                w.checked += 1
            }
            Ok(p) => fail(&mut w, format!("workers=4 gives {:?}", p.optimal_pairs)),
            Err(e) => fail(&mut w, e.to_string()),
        }
    }
    out.extend([r, c, d, w]);
    out
}
