use proptest::prelude::*;
use rand::Rng as _;

use strandforge_core::bench::{
    cosine64, ndcg, precision_at, recall_at, topk_search, DbEntry, SimilarityDb,
};
use strandforge_core::rng::seeded;

fn flags_and_sim() -> impl Strategy<Value = (Vec<bool>, usize)> {
    prop::collection::vec(any::<bool>(), 1..40).prop_flat_map(|f| {
        let hits = f.iter().filter(|x| **x).count();
        (Just(f), hits.max(1)..hits.max(1) + 10)
    })
}

proptest! {
    #[test]
    fn ndcg_in_unit_interval((flags, n_sim) in flags_and_sim()) {
        let v = ndcg(&flags, n_sim, flags.len());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn moving_a_hit_earlier_never_lowers_ndcg((flags, n_sim) in flags_and_sim(), i in 0usize..40, j in 0usize..40) {
        let (i, j) = (i % flags.len(), j % flags.len());
        let (lo, hi) = (i.min(j), i.max(j));
        if flags[hi] && !flags[lo] {
            let mut g = flags.clone();
            g.swap(lo, hi);
            prop_assert!(ndcg(&g, n_sim, flags.len()) >= ndcg(&flags, n_sim, flags.len()));
        }
    }

    #[test]
    fn ndcg_is_one_exactly_for_a_perfect_prefix(n_sim in 1usize..20, k in 1usize..30, hits in prop::collection::vec(any::<bool>(), 30)) {
        let flags: Vec<bool> = hits[..k].to_vec();
        let count = flags.iter().filter(|x| **x).count();
        let perfect = count == n_sim && flags.iter().take(n_sim).all(|x| *x);
        let v = ndcg(&flags, n_sim, k);
        prop_assert_eq!((v - 1.0).abs() < 1e-12, perfect);
    }

    #[test]
    fn precision_and_recall_are_counts((flags, n_sim) in flags_and_sim(), k in 1usize..50) {
        let p = precision_at(&flags, k) * k as f64;
        let r = recall_at(&flags, n_sim, k) * n_sim as f64;
        prop_assert!((p - p.round()).abs() < 1e-9);
        prop_assert!((r - r.round()).abs() < 1e-9);
    }
}

#[test]
fn ndcg_prefers_early_hits_at_equal_precision() {
    let a = [true, true, false, false];
    let b = [false, false, true, true];
    assert_eq!(precision_at(&a, 4), precision_at(&b, 4));
    assert!(ndcg(&a, 2, 4) > ndcg(&b, 2, 4));
}

/// Selection by repeated full scans, independent of the sorting path.
fn brute_force(db: &SimilarityDb, q: usize, k: usize) -> Vec<String> {
    let es = db.entries();
    let mut taken = vec![false; es.len()];
    taken[q] = true;
    let mut out = Vec::new();
    for _ in 0..k.min(es.len() - 1) {
        let mut best: Option<(f64, usize)> = None;
        for (i, e) in es.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let s = cosine64(&es[q].embedding, &e.embedding);
            if best.map(|(b, _)| s > b).unwrap_or(true) {
                best = Some((s, i));
            }
        }
        let (_, i) = best.unwrap();
        taken[i] = true;
        out.push(es[i].id.clone());
    }
    out
}

#[test]
fn topk_matches_brute_force_on_1k_entries() {
    let mut rng = seeded(21);
    let entries: Vec<DbEntry> = (0..1000)
        .map(|i| DbEntry {
            id: format!("e{:04}", i),
            // Coarse values so exact ties occur.
            embedding: (0..6).map(|_| rng.gen_range(-2i32..=2) as f32).collect(),
            group: rng.gen_range(0..50),
        })
        .collect();
    let db = SimilarityDb::new(entries).unwrap();
    for q in (0..1000).step_by(37) {
        for k in [1, 10, 40, 999, 2000] {
            let id = db.entries()[q].id.clone();
            let (got, _) = topk_search(&db, &id, k).unwrap();
            assert_eq!(got, brute_force(&db, q, k), "query {id} k {k}");
        }
    }
}
