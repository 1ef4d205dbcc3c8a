mod common;

use common::*;
use onconet::agreement::{bh_fdr, ks_statistic};
use onconet::engine::{Matrix, SeededRng};
use onconet::graph::{build_graph, GeneGraph, GraphConfig, Interaction, InteractionTable};
use onconet::pathway::{build_masks, permute_mask, MaskSet};
use onconet::synth::{generate_hierarchy, SynthConfig};
use onconet::train::roc_auc;
use proptest::prelude::*;
use std::path::Path;

fn binary_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..10, 1usize..10).prop_flat_map(|(r, c)| {
        proptest::collection::vec(any::<bool>(), r * c)
            .prop_map(move |bits| Matrix::from_vec(r, c, bits.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
    })
}

fn grid_scores(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((0u8..8).prop_map(|k| k as f64 / 7.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn permuted_mask_keeps_shape_and_popcount(m in binary_matrix(), seed in any::<u64>()) {
        let p = permute_mask(&m, &mut SeededRng::new(seed));
        prop_assert_eq!(p.shape(), m.shape());
        prop_assert_eq!(p.sum(), m.sum());
        let mut a = m.data().to_vec();
        let mut b = p.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn auc_matches_pairwise_count(
        scores in grid_scores(2..50),
        flips in proptest::collection::vec(any::<bool>(), 50),
    ) {
        let n = scores.len();
        let mut labels: Vec<f64> = flips[..n].iter().map(|&b| b as u8 as f64).collect();
        labels[0] = 1.0;
        labels[n - 1] = 0.0;
        let auc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((auc - brute_auc(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn ks_statistic_matches_ecdf_sweep(a in grid_scores(1..40), b in grid_scores(1..40)) {
        prop_assert!((ks_statistic(&a, &b) - brute_ks(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn bh_commutes_with_permutation(
        p in proptest::collection::vec(0.0f64..=1.0, 1..30),
        seed in any::<u64>(),
    ) {
        let q = bh_fdr(&p).unwrap();
        let mut order: Vec<usize> = (0..p.len()).collect();
        SeededRng::new(seed).shuffle(&mut order);
        let p2: Vec<f64> = order.iter().map(|&i| p[i]).collect();
        let q2 = bh_fdr(&p2).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(q2[k], q[i]);
        }
        for (pi, qi) in p.iter().zip(&q) {
            prop_assert!(qi >= pi && *qi <= 1.0);
        }
    }
}

#[test]
fn bh_hand_fixtures_exact() {
    for (p, q) in bh_fixtures() {
        assert_eq!(bh_fdr(&p).unwrap(), q, "p = {p:?}");
    }
}

fn random_graph_of(n: usize, edges: &[(usize, usize, f64)], threshold: f64) -> GeneGraph {
    let genes: Vec<String> = (0..n).map(|i| format!("gene{i}")).collect();
    let records = edges
        .iter()
        .filter(|(a, b, _)| a % n != b % n)
        .map(|&(a, b, s)| Interaction {
            gene_a: genes[a % n].clone(),
            gene_b: genes[b % n].clone(),
            strength: s,
        })
        .collect();
    build_graph(&InteractionTable { records }, &GraphConfig { threshold }, &genes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_text_round_trip(
        n in 1usize..20,
        edges in proptest::collection::vec((0usize..20, 0usize..20, 0.0f64..=1.0), 0..60),
        threshold in 0.0f64..0.99,
    ) {
        let g = random_graph_of(n, &edges, threshold);
        let back = GeneGraph::from_text(&g.to_text(), Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.edge_count() * 2, back.indices().len());
    }

    #[test]
    fn mask_set_save_load_round_trip(
        n_genes in 4usize..24,
        layers in 2usize..4,
        channels in 1usize..4,
        seed in any::<u64>(),
        permute in any::<bool>(),
    ) {
        let config = SynthConfig { n_genes, branching: 2, depth: 3, drivers: 1, ..SynthConfig::default() };
        let mut rng = SeededRng::new(seed);
        let h = generate_hierarchy(&config, &mut rng).unwrap().to_hierarchy().unwrap();
        let mut masks = build_masks(&h, layers.min(h.max_depth()), channels).unwrap();
        if permute {
            masks = masks.permuted(&mut rng);
        }
        let dir = tempfile::tempdir().unwrap();
        masks.save(dir.path()).unwrap();
        prop_assert_eq!(MaskSet::load(dir.path()).unwrap(), masks);
    }
}

#[test]
fn gnn_outputs_invariant_under_relabeling() {
    for (i, arch) in ["gcn", "gat", "meta"].into_iter().enumerate() {
        let worst = gnn_permutation_family(arch, 100, 40 + i as u64);
        assert!(worst < 1e-9, "{arch}: {worst:e}");
    }
}

#[test]
fn masked_positions_stay_zero_through_adam() {
    let (w, g, zeros) = masked_positions_after_training(100, 7);
    assert!(zeros > 100, "fixture should have many masked positions");
    assert_eq!(w, 0.0);
    assert_eq!(g, 0.0);
}

#[test]
fn oracle_families_agree() {
    assert!(auc_oracle_family(1000, 1) <= 1e-12);
    assert!(ks_oracle_family(1000, 2) <= 1e-12);
    assert!(permuted_masks_preserve(1000, 3));
}
