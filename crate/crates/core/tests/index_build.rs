mod common;

use std::collections::HashMap;

use common::{fixture, scan_all, small_config};
use sidx_core::eval::brute_force_knn;
use sidx_core::index::{Index, Strategy};
use sidx_core::query::{exact_search, DistanceKind, PreparedQuery};

#[test]
fn every_series_has_exactly_one_home() {
    let fx = fixture(5000, 64, 0, 1);
    let (index, report) = fx.build("idx", &small_config(64, 8, 100));
    assert!(report.oversized.is_empty());
    let records = scan_all(&index);
    let mut homes: HashMap<u64, usize> = HashMap::new();
    for &(ord, _, home) in &records {
        assert!(home);
        *homes.entry(ord).or_default() += 1;
    }
    assert_eq!(homes.len(), 5000);
    assert!(homes.values().all(|&c| c == 1));
    let stats = index.stats();
    println!("{stats:?}");
    assert!(stats.fill_factor > 0.0);
}

#[test]
fn exact_search_matches_brute_force_small() {
    let fx = fixture(4000, 64, 10, 2);
    let (index, _) = fx.build("idx", &small_config(64, 8, 100));
    for kind in [DistanceKind::Euclidean, DistanceKind::Dtw { window: 6 }] {
        for i in 0..fx.query_set.len() {
            let q = fx.query_set.series_f64(i);
            let pq = PreparedQuery::for_index(&q, &index, kind).unwrap();
            let got = exact_search(&index, &pq, 10).unwrap();
            let want = brute_force_knn(&fx.data, &q, 10, kind);
            assert_eq!(got.neighbors, want, "{kind:?} query {i}");
        }
    }
}

#[test]
fn reopen_gives_same_tree() {
    let fx = fixture(3000, 64, 0, 3);
    let (index, _) = fx.build("idx", &small_config(64, 8, 100));
    let reopened = Index::open(index.dir()).unwrap();
    assert_eq!(reopened.tree().compacted(), index.tree().compacted());
    assert_eq!(reopened.meta(), index.meta());
}

#[test]
fn binary_baseline_builds() {
    let fx = fixture(3000, 64, 0, 4);
    let mut cfg = small_config(64, 8, 100);
    cfg.strategy = Strategy::BinaryBaseline;
    let (index, _) = fx.build("bin", &cfg);
    assert_eq!(scan_all(&index).len(), 3000);
    println!("{:?}", index.stats());
}
