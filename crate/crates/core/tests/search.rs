mod common;

use std::collections::HashSet;

use common::{fixture, scan_all, small_config};
use proptest::prelude::*;
use sidx_core::eval::{average_recall, avg_error_ratio, brute_force_knn, map_score};
use sidx_core::index::{build_index, Index};
use sidx_core::query::{
    approx_search, exact_search, exact_search_traced, extended_approx_search, extended_scan_order, neighbor_cmp,
    DistanceKind, Neighbor, PreparedQuery, SearchBudget,
};
use sidx_core::Error;

#[test]
fn budget_covering_every_leaf_is_exact() {
    let fx = fixture(3000, 64, 5, 21);
    let (index, _) = fx.build("idx", &small_config(64, 8, 80));
    let leaves = index.stats().leaf_count;
    for i in 0..fx.query_set.len() {
        let q = fx.query_set.series_f64(i);
        let pq = PreparedQuery::for_index(&q, &index, DistanceKind::Euclidean).unwrap();
        let full = extended_approx_search(&index, &pq, 10, SearchBudget::new(leaves).unwrap()).unwrap();
        assert_eq!(full.nodes_visited, leaves);
        assert_eq!(full.neighbors, exact_search(&index, &pq, 10).unwrap().neighbors);
        let one = approx_search(&index, &pq, 10).unwrap();
        assert_eq!(one.nodes_visited, 1);
    }
}

#[test]
fn scan_order_is_a_prefix_chain() {
    let fx = fixture(3000, 64, 5, 22);
    let (index, _) = fx.build("idx", &small_config(64, 8, 60));
    for i in 0..fx.query_set.len() {
        let q = fx.query_set.series_f64(i);
        let pq = PreparedQuery::for_index(&q, &index, DistanceKind::Euclidean).unwrap();
        let routed = index.tree().route_to_leaf(pq.sax(), 8).unwrap();
        for nbr in [1, 2, 5, 10, 40] {
            let order = extended_scan_order(&index, &pq, nbr);
            assert!(order.len() <= nbr);
            assert_eq!(order.iter().collect::<HashSet<_>>().len(), order.len());
            if nbr == 1 {
                assert_eq!(order, vec![routed]);
            }
        }
    }
}

#[test]
fn pruned_leaves_hold_no_answer() {
    let fx = fixture(4000, 64, 8, 23);
    let (index, _) = fx.build("idx", &small_config(64, 8, 60));
    let records = scan_all(&index);
    let mut pruned_total = 0usize;
    for kind in [DistanceKind::Euclidean, DistanceKind::Dtw { window: 6 }] {
        for i in 0..fx.query_set.len() {
            let q = fx.query_set.series_f64(i);
            let pq = PreparedQuery::for_index(&q, &index, kind).unwrap();
            let (result, pruned) = exact_search_traced(&index, &pq, 5).unwrap();
            let answer: HashSet<u64> = result.ordinals().into_iter().collect();
            let pruned: HashSet<u32> = pruned.into_iter().collect();
            for &(ord, leaf, _) in &records {
                assert!(!(pruned.contains(&leaf) && answer.contains(&ord)));
            }
            pruned_total += pruned.len();
        }
    }
    assert!(pruned_total > 0);
}

#[test]
fn fuzzy_index_stays_exact_and_bounded() {
    let fx = fixture(4000, 64, 6, 24);
    let mut cfg = small_config(64, 8, 80);
    cfg.fuzzy = Some(0.2);
    cfg.max_duplications = 2;
    let (index, report) = fx.build("fuzzy", &cfg);
    assert!(!report.fuzzy.is_empty());
    let mut copies = std::collections::HashMap::<u64, u32>::new();
    for (ord, _, home) in scan_all(&index) {
        if !home {
            *copies.entry(ord).or_default() += 1;
        }
    }
    assert_eq!(copies.values().sum::<u32>() as usize, report.fuzzy.len());
    assert!(copies.values().all(|&c| c <= 2));
    for leaf in index.tree().leaves_under(index.tree().root()) {
        assert!(index.tree().leaf(leaf).live() <= cfg.th);
    }
    for i in 0..fx.query_set.len() {
        let q = fx.query_set.series_f64(i);
        let pq = PreparedQuery::for_index(&q, &index, DistanceKind::Euclidean).unwrap();
        let got = exact_search(&index, &pq, 8).unwrap().neighbors;
        assert_eq!(got, brute_force_knn(&fx.data, &q, 8, DistanceKind::Euclidean));
        let approx = extended_approx_search(&index, &pq, 8, SearchBudget::new(3).unwrap()).unwrap();
        let ords: HashSet<u64> = approx.ordinals().into_iter().collect();
        assert_eq!(ords.len(), approx.neighbors.len(), "duplicates returned twice");
    }
}

#[test]
fn invalid_requests_are_rejected() {
    let fx = fixture(500, 64, 1, 25);
    let (index, _) = fx.build("idx", &small_config(64, 8, 80));
    let q = fx.query_set.series_f64(0);
    assert!(matches!(SearchBudget::new(0), Err(Error::Config(_))));
    assert!(matches!(
        PreparedQuery::for_index(&q[..32], &index, DistanceKind::Euclidean),
        Err(Error::LengthMismatch { .. })
    ));
    assert!(matches!(
        PreparedQuery::for_index(&q, &index, DistanceKind::Dtw { window: 64 }),
        Err(Error::WindowTooLarge { .. })
    ));
    let pq = PreparedQuery::for_index(&q, &index, DistanceKind::Euclidean).unwrap();
    assert!(exact_search(&index, &pq, 0).is_err());
}

#[test]
fn damaged_index_files_are_rejected() {
    let fx = fixture(800, 64, 1, 26);
    let (index, _) = fx.build("idx", &small_config(64, 8, 80));
    let dir = index.dir().to_path_buf();
    let file = dir.join("index.bin");
    let good = std::fs::read(&file).unwrap();

    let mut bad = good.clone();
    bad[0] = b'X';
    std::fs::write(&file, &bad).unwrap();
    assert!(matches!(Index::open(&dir), Err(Error::BadMagic(_))));

    // a newer version with a valid checksum
    let crc = crc::Crc::<u64>::new(&crc::CRC_64_ECMA_182);
    let mut body = good[..good.len() - 8].to_vec();
    body[8] = body[8].wrapping_add(1);
    let sum = crc.checksum(&body);
    body.extend_from_slice(&sum.to_le_bytes());
    std::fs::write(&file, &body).unwrap();
    assert!(matches!(Index::open(&dir), Err(Error::VersionMismatch { .. })));

    std::fs::write(&file, &good[..12]).unwrap();
    assert!(Index::open(&dir).is_err());

    // leaf files are read on demand
    std::fs::write(&file, &good).unwrap();
    let reopened = Index::open(&dir).unwrap();
    let leaf = reopened.tree().leaves_under(reopened.tree().root())[0];
    let path = dir.join(format!("leaf_{}.bin", reopened.tree().leaf(leaf).file_id));
    std::fs::remove_file(&path).unwrap();
    assert!(matches!(reopened.leaf_bytes(leaf), Err(Error::Corrupt(_))));
}

#[test]
fn rebuilding_into_a_used_directory_replaces_it() {
    let fx = fixture(1000, 64, 1, 27);
    let dir = fx.index_dir("idx");
    build_index(&fx.dataset, &dir, &small_config(64, 8, 40)).unwrap();
    let (index, _) = build_index(&fx.dataset, &dir, &small_config(64, 8, 400)).unwrap();
    let reopened = Index::open(&dir).unwrap();
    assert_eq!(reopened.stats(), index.stats());
    assert_eq!(scan_all(&reopened).len(), 1000);
}

fn sorted_lists() -> impl Strategy<Value = (usize, Vec<(Vec<Neighbor>, Vec<Neighbor>)>)> {
    (1usize..8).prop_flat_map(|k| {
        let one = prop::collection::vec(0u32..30, k..k + 20).prop_flat_map(move |dists| {
            let pool: Vec<Neighbor> = dists
                .iter()
                .enumerate()
                .map(|(i, &d)| Neighbor {
                    ordinal: i as u64,
                    distance: f64::from(d) * 0.5,
                })
                .collect();
            let len = pool.len();
            (Just(pool), prop::sample::subsequence((0..len).collect::<Vec<_>>(), k))
        });
        (Just(k), prop::collection::vec(one, 1..6)).prop_map(|(k, items)| {
            let lists = items
                .into_iter()
                .map(|(pool, picks)| {
                    let mut sorted = pool.clone();
                    sorted.sort_by(neighbor_cmp);
                    let mut result: Vec<Neighbor> = picks.into_iter().map(|i| pool[i]).collect();
                    result.sort_by(neighbor_cmp);
                    (result, sorted[..k].to_vec())
                })
                .collect();
            (k, lists)
        })
    })
}

proptest! {
    #[test]
    fn map_equals_recall_for_sorted_results((k, lists) in sorted_lists()) {
        let (results, truth): (Vec<_>, Vec<_>) = lists.into_iter().unzip();
        let map = map_score(&results, &truth, k).unwrap();
        let recall = average_recall(&results, &truth, k).unwrap();
        prop_assert!((map - recall).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&map));
    }

    #[test]
    fn error_ratio_is_at_least_one((k, lists) in sorted_lists()) {
        let (results, truth): (Vec<_>, Vec<_>) = lists.into_iter().unzip();
        let ratio = avg_error_ratio(&results, &truth, k).unwrap();
        prop_assert!(ratio.value.is_nan() || ratio.value >= 1.0 - 1e-12);
    }
}
