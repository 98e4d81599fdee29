//! Train/validation/test splits with no shared sample text.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Groups items by `key`, shuffles the groups with `seed`, and deals them
/// out by `ratios` (train, val; test gets the rest). Identical texts always
/// land in the same split.
pub fn split_by_text<T: Clone>(items: &[T], key: impl Fn(&T) -> String, ratios: (f64, f64), seed: u64) -> Splits<T> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        groups.entry(key(it)).or_default().push(i);
    }
    let mut keys: Vec<&String> = groups.keys().collect();
    keys.shuffle(&mut seeded(seed));
    let n = keys.len() as f64;
    let n_train = libm::round(n * ratios.0) as usize;
    let n_val = (libm::round(n * ratios.1) as usize).min(keys.len() - n_train.min(keys.len()));
    let mut which = alloc::vec![2u8; items.len()];
    for (rank, k) in keys.iter().enumerate() {
        let split = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
        for &i in &groups[*k] {
            which[i] = split;
        }
    }
    let mut out = Splits { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (i, it) in items.iter().enumerate() {
        match which[i] {
            0 => out.train.push(it.clone()),
            1 => out.val.push(it.clone()),
            _ => out.test.push(it.clone()),
        }
    }
    out
}
