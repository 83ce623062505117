use proptest::prelude::*;

use rscount::cnf::{encode_task, exhaustive_model_count, read_dimacs, scaled_count, to_dimacs_string, CnfTarget};
use rscount::engine::naive_count_pairs;
use rscount::extremality::{mixture_label_dist, InferenceLayerSpec, LayerKind};
use rscount::hungarian;
use rscount::metrics::macro_f1;
use rscount::mitigations::WorldSet;
use rscount::task::SupportMode;
use rscount::{
    count_rs, count_with_mitigations, AlphaFamily, ConceptSpace, CountOptions, KnowledgeTable, Method, MitigationSet,
    SupportSet, TaskSpec, World,
};

fn small_task() -> impl Strategy<Value = TaskSpec> {
    (prop::collection::vec(1u32..=3, 1..=2), 1u32..=3, 0u8..3)
        .prop_flat_map(|(cards, labels, fam)| {
            let n: usize = cards.iter().map(|&c| c as usize).product();
            (
                Just(cards),
                Just(labels),
                Just(fam),
                prop::collection::vec(0..labels, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(cards, labels, fam, table, keep)| {
            let space = ConceptSpace::from_cardinalities(&cards).unwrap();
            let k = KnowledgeTable::new(&space, labels, table).unwrap();
            let mut worlds: Vec<World> = space.worlds().zip(&keep).filter(|(_, &b)| b).map(|(w, _)| w).collect();
            if worlds.is_empty() {
                worlds.push(space.world_at(0));
            }
            let support = SupportSet::new(&space, SupportMode::Include(worlds)).unwrap();
            let family = match fam {
                0 => AlphaFamily::Joint,
                1 => AlphaFamily::untied(cards.len()),
                _ if cards.len() == 2 && cards[0] == cards[1] => AlphaFamily::tied(2),
                _ => AlphaFamily::untied(cards.len()),
            };
            TaskSpec::new(space, k, support, family).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_matches_naive(t in small_task()) {
        let none = MitigationSet::none();
        let r = count_with_mitigations(&t, &none, &CountOptions::default().with_workers(1)).unwrap();
        if let Ok(n) = naive_count_pairs(&t, &none, 2_000_000) {
            prop_assert_eq!(Some(n.optimal_pairs), r.optimal_pairs.clone());
            prop_assert_eq!(n.admissible_alphas, r.admissible_alpha_count.clone());
        }
        let p = count_with_mitigations(&t, &none, &CountOptions::default().with_workers(3).with_method(Method::Pruned)).unwrap();
        prop_assert_eq!(p.optimal_pairs, r.optimal_pairs);
        prop_assert_eq!(p.jrs_count_nonredundant, r.jrs_count_nonredundant);
    }

    #[test]
    fn distilled_jrs_is_rs(t in small_task()) {
        let ms = MitigationSet { distillation: Some(WorldSet::Full), ..Default::default() };
        let d = count_with_mitigations(&t, &ms, &CountOptions::default()).unwrap();
        let rs = count_rs(&t, &CountOptions::default()).unwrap();
        prop_assert_eq!(d.jrs_count_redundant, Some(rs.rs_count));
    }

    #[test]
    fn cnf_round_trip_and_count(t in small_task()) {
        let none = MitigationSet::none();
        let f = encode_task(&t, &none, CnfTarget::OptimalPairs, true).unwrap();
        let text = to_dimacs_string(&f);
        let back = read_dimacs(text.as_bytes()).unwrap();
        prop_assert_eq!(to_dimacs_string(&back), text);
        let r = count_with_mitigations(&t, &none, &CountOptions::default()).unwrap();
        prop_assert_eq!(Some(scaled_count(&back, 2_000_000).unwrap()), r.optimal_pairs);
        let a = encode_task(&t, &none, CnfTarget::OptimalAlphas, false).unwrap();
        if a.num_vars() <= 24 {
            prop_assert_eq!(exhaustive_model_count(&a).unwrap(), r.admissible_alpha_count);
        }
    }

    #[test]
    fn hungarian_is_optimal(cost in prop::collection::vec(prop::collection::vec(0u8..20, 4), 4)) {
        let c: Vec<Vec<f64>> = cost.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        let a = hungarian::solve(&c).unwrap();
        let got: f64 = a.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        let mut best = f64::INFINITY;
        for p in 0..24usize {
            // decode p as a permutation of 4 via the factorial number system
            let mut pool = vec![0, 1, 2, 3];
            let mut q = p;
            let mut s = 0.0;
            for (i, f) in [6, 2, 1, 1].into_iter().enumerate() {
                let j = pool.remove(q / f);
                q %= f;
                s += c[i][j];
            }
            best = best.min(s);
        }
        prop_assert_eq!(got, best);
    }

    #[test]
    fn macro_f1_bounds(truth in prop::collection::vec(0u32..4, 1..40), noise in prop::collection::vec(0u32..4, 40)) {
        let pred: Vec<u32> = truth.iter().zip(&noise).map(|(&t, &n)| if n == 0 { (t + 1) % 4 } else { t }).collect();
        let f = macro_f1(&truth, &pred);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(macro_f1(&truth, &truth), 1.0);
    }

    #[test]
    fn mixtures_are_distributions(
        rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 3), 4),
        lambda in 0.001f64..0.999,
        a in 0usize..4,
        b in 0usize..4,
    ) {
        prop_assume!(a != b);
        let space = ConceptSpace::from_cardinalities(&[4]).unwrap();
        let layer = InferenceLayerSpec::new(LayerKind::SoftmaxLinear, space.clone(), 3, rows).unwrap();
        let d = mixture_label_dist(&layer, &space.world_at(a), &space.world_at(b), lambda).unwrap();
        prop_assert!(d.iter().all(|&x| x >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
