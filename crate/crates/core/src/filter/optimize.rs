//! Chain ordering under the independence assumption.
//!
//! The expected per-image cost of an order is
//! `sum_i cost[i] * prod_{j<i} (1 - removal[j])`.

use super::FilterProfile;

/// Largest filter count solved by exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 8;

const TIE_EPS: f64 = 1e-12;

pub fn expected_cost<'a, I>(order: I) -> f64
where
    I: IntoIterator<Item = &'a FilterProfile>,
{
    let mut survive = 1.0;
    let mut total = 0.0;
    for p in order {
        total += p.mean_cost * survive;
        survive *= 1.0 - p.removal_rate;
    }
    total
}

/// Rearranges `v` into the next lexicographic permutation; false when `v` was the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Order minimizing expected cost. Up to [`EXHAUSTIVE_LIMIT`] filters every
/// permutation is scored; among equal-cost orders the lexicographically
/// smallest name sequence wins. Larger sets use [`rank_order`].
pub fn optimize_order(profiles: &[FilterProfile]) -> Vec<String> {
    if profiles.len() > EXHAUSTIVE_LIMIT {
        return rank_order(profiles);
    }
    let mut sorted: Vec<&FilterProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.filter_name.cmp(&b.filter_name));
    let mut perm: Vec<usize> = (0..sorted.len()).collect();
    let mut best = perm.clone();
    let mut best_cost = expected_cost(sorted.iter().copied());
    while next_permutation(&mut perm) {
        let cost = expected_cost(perm.iter().map(|&i| sorted[i]));
        // permutations arrive in name order, so only a strict improvement replaces
        if cost < best_cost - TIE_EPS * best_cost.abs().max(1.0) {
            best_cost = cost;
            best.clone_from(&perm);
        }
    }
    best.into_iter().map(|i| sorted[i].filter_name.clone()).collect()
}

/// Ascending `cost / removal_rate` (filters that remove nothing go last),
/// ties by name. Optimal for independent filters.
pub fn rank_order(profiles: &[FilterProfile]) -> Vec<String> {
    let rank = |p: &FilterProfile| {
        if p.removal_rate > 0.0 {
            p.mean_cost / p.removal_rate
        } else {
            f64::INFINITY
        }
    };
    let mut sorted: Vec<&FilterProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| {
        rank(a)
            .total_cmp(&rank(b))
            .then_with(|| a.filter_name.cmp(&b.filter_name))
    });
    sorted.into_iter().map(|p| p.filter_name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str, removal: f64, cost: f64) -> FilterProfile {
        FilterProfile::new(name, removal, cost, 1000)
    }

    #[test]
    fn trivial_cases() {
        assert!(optimize_order(&[]).is_empty());
        assert_eq!(optimize_order(&[p("only", 0.3, 1.0)]), ["only"]);
    }

    #[test]
    fn equal_cost_higher_removal_first() {
        assert_eq!(optimize_order(&[p("a", 0.1, 1.0), p("b", 0.9, 1.0)]), ["b", "a"]);
    }

    #[test]
    fn exact_ties_break_by_name() {
        assert_eq!(optimize_order(&[p("z", 0.5, 1.0), p("a", 0.5, 1.0)]), ["a", "z"]);
        assert_eq!(rank_order(&[p("z", 0.5, 1.0), p("a", 0.5, 1.0)]), ["a", "z"]);
    }

    #[test]
    fn expected_cost_by_hand() {
        let order = [p("x", 0.5, 2.0), p("y", 0.25, 4.0), p("z", 0.0, 8.0)];
        // 2 + 0.5*4 + 0.5*0.75*8
        assert!((expected_cost(&order) - 7.0).abs() < 1e-15);
    }

    #[test]
    fn permutations_enumerated_in_order() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], [0, 2, 1]);
        assert_eq!(seen[5], [2, 1, 0]);
    }

    #[test]
    fn large_sets_use_rank_rule() {
        let profiles: Vec<_> = (0..10)
            .map(|i| p(&format!("f{i}"), 0.05 + 0.09 * i as f64, 1.0 + (i % 3) as f64))
            .collect();
        assert_eq!(optimize_order(&profiles), rank_order(&profiles));
    }
}
