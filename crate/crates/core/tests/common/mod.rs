//! Oracles shared by the integration tests. They ignore every structural
//! shortcut of the library (sorting, prefix sums) and enumerate subsets.

#![allow(dead_code)]

/// Largest `sum(B) - sum(S)` over buyer subsets `B` and seller subsets `S`
/// of equal size, the empty trade included.
///
/// For a fixed size `k` the buyer and seller choices are independent, so the
/// best buyer `k`-subset and the cheapest seller `k`-subset are found by
/// walking all `2^m` and `2^n` subsets separately.
pub fn brute_force_gft(buyers: &[i64], sellers: &[i64]) -> i64 {
    let best_b = extreme_subset_sums(buyers, i64::max);
    let best_s = extreme_subset_sums(sellers, i64::min);
    best_b.iter().zip(&best_s).map(|(b, s)| b - s).max().unwrap_or(0)
}

/// Per subset size, the best subset sum under `pick`.
fn extreme_subset_sums(values: &[i64], pick: fn(i64, i64) -> i64) -> Vec<i64> {
    assert!(values.len() < 24, "subset walk is exponential");
    let mut best: Vec<Option<i64>> = vec![None; values.len() + 1];
    for mask in 0u32..1 << values.len() {
        let sum: i64 = values.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| v).sum();
        let k = mask.count_ones() as usize;
        best[k] = Some(best[k].map_or(sum, |b| pick(b, sum)));
    }
    best.into_iter().map(|b| b.expect("every size occurs")).collect()
}

/// Every multiset of `len` values from `0..=top`, ascending within itself.
pub fn multisets(len: usize, top: i64) -> Vec<Vec<i64>> {
    if len == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in multisets(len - 1, top) {
        let floor = rest.last().copied().unwrap_or(0);
        for v in floor..=top {
            let mut next = rest.clone();
            next.push(v);
            out.push(next);
        }
    }
    out
}
