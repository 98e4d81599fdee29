//! Retrieval metrics and exact top-k search over embedding databases.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::BenchError;

/// Discounted gain of `flags` (1 = similar) over the first `k` positions,
/// normalized by the gain of `n_sim` hits at the top.
pub fn ndcg(flags: &[bool], n_sim: usize, k: usize) -> f64 {
    let dcg: f64 = flags
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| 1.0 / libm::log((i + 2) as f64))
        .sum();
    let ideal: f64 = (1..=n_sim).map(|i| 1.0 / libm::log((i + 1) as f64)).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    dcg / ideal
}

pub fn precision_at(flags: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    flags.iter().take(k).filter(|f| **f).count() as f64 / k as f64
}

pub fn recall_at(flags: &[bool], n_sim: usize, k: usize) -> f64 {
    if n_sim == 0 {
        return 0.0;
    }
    flags.iter().take(k).filter(|f| **f).count() as f64 / n_sim as f64
}

pub fn cosine64(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (libm::sqrt(aa).max(1e-12) * libm::sqrt(bb).max(1e-12))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbEntry {
    pub id: String,
    pub embedding: Vec<f32>,
    /// Ground-truth similarity class.
    pub group: u64,
}

/// Entries sorted by id, with every entry that has at least one other
/// member of its group available as a query.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDb {
    entries: Vec<DbEntry>,
    queries: Vec<usize>,
    group_size: BTreeMap<u64, usize>,
}

impl SimilarityDb {
    pub fn new(mut entries: Vec<DbEntry>) -> Result<Self, BenchError> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(BenchError::DuplicateEntry(w[0].id.clone()));
        }
        let mut group_size: BTreeMap<u64, usize> = BTreeMap::new();
        for e in &entries {
            *group_size.entry(e.group).or_default() += 1;
        }
        let queries = (0..entries.len()).filter(|&i| group_size[&entries[i].group] > 1).collect();
        Ok(SimilarityDb { entries, queries, group_size })
    }

    /// Restricts the query list to the given ids.
    pub fn with_queries(mut self, ids: &[String]) -> Result<Self, BenchError> {
        let mut q = Vec::new();
        for id in ids {
            let i = self.position(id)?;
            if self.n_sim(i) == 0 {
                return Err(BenchError::NoSimilar(id.clone()));
            }
            q.push(i);
        }
        q.sort_unstable();
        q.dedup();
        self.queries = q;
        Ok(self)
    }

    pub fn entries(&self) -> &[DbEntry] {
        &self.entries
    }

    pub fn queries(&self) -> &[usize] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, id: &str) -> Result<usize, BenchError> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .map_err(|_| BenchError::QueryNotInDb(id.into()))
    }

    /// Similar entries other than the query itself.
    pub fn n_sim(&self, index: usize) -> usize {
        self.group_size[&self.entries[index].group] - 1
    }

    /// The `k` entries closest to `index` by cosine, the query excluded.
    /// Equal scores keep id order.
    pub fn top_k(&self, index: usize, k: usize) -> Vec<usize> {
        let q = &self.entries[index].embedding;
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(i, e)| (cosine64(q, &e.embedding), i))
            .collect();
        let by_score = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        let k = k.min(scored.len());
        if k < scored.len() && k > 0 {
            scored.select_nth_unstable_by(k - 1, by_score);
            scored.truncate(k);
        }
        scored.sort_by(by_score);
        scored.truncate(k);
        scored.into_iter().map(|(_, i)| i).collect()
    }

    /// Hit flags of the ranked answer for `index`.
    pub fn flags(&self, index: usize, k: usize) -> Vec<bool> {
        let g = self.entries[index].group;
        self.top_k(index, k).into_iter().map(|i| self.entries[i].group == g).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryScore {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

/// Ranked ids and scores for the query with id `q`.
pub fn topk_search(db: &SimilarityDb, q: &str, k: usize) -> Result<(Vec<String>, QueryScore), BenchError> {
    let i = db.position(q)?;
    let ranked = db.top_k(i, k);
    let g = db.entries[i].group;
    let flags: Vec<bool> = ranked.iter().map(|j| db.entries[*j].group == g).collect();
    let n_sim = db.n_sim(i);
    let score = QueryScore {
        precision: precision_at(&flags, k),
        recall: recall_at(&flags, n_sim, k),
        ndcg: ndcg(&flags, n_sim, k),
    };
    Ok((ranked.into_iter().map(|j| db.entries[j].id.clone()).collect(), score))
}

/// Per-query precision, recall and nDCG for each `k`, averaged over the
/// database's queries. One ranking of length `max(ks)` is shared.
pub fn evaluate(db: &SimilarityDb, ks: &[usize]) -> Vec<(usize, QueryScore)> {
    let per_query: Vec<Vec<bool>> = db.queries.iter().map(|&q| db.flags(q, ks.iter().copied().max().unwrap_or(0))).collect();
    average_scores(db, &per_query, ks)
}

/// Averages precomputed rankings; `flags[i]` belongs to `db.queries()[i]`.
pub fn average_scores(db: &SimilarityDb, flags: &[Vec<bool>], ks: &[usize]) -> Vec<(usize, QueryScore)> {
    let n = db.queries.len().max(1) as f64;
    ks.iter()
        .map(|&k| {
            let mut acc = QueryScore { precision: 0.0, recall: 0.0, ndcg: 0.0 };
            for (&q, f) in db.queries.iter().zip(flags) {
                let n_sim = db.n_sim(q);
                acc.precision += precision_at(f, k);
                acc.recall += recall_at(f, n_sim, k);
                acc.ndcg += ndcg(f, n_sim, k);
            }
            (k, QueryScore { precision: acc.precision / n, recall: acc.recall / n, ndcg: acc.ndcg / n })
        })
        .collect()
}

/// Area under the ROC curve: the chance that a random positive outscores a
/// random negative, ties counting half. `None` without both classes.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let mut v: Vec<(f64, bool)> = scored.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pos = v.iter().filter(|x| x.1).count();
    let neg = v.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    // Midranks over tied runs.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j].0 == v[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * v[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}
