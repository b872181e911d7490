use std::collections::BTreeMap;

use rand::seq::index;

use super::{DatastoreError, Result, TileManifest};
use crate::rng;

/// Largest-remainder (Hamilton) apportionment of `n` seats over `counts`.
///
/// Quotas are computed with exact integer arithmetic; leftover seats go to the largest
/// fractional remainders, ties broken by position (callers pass groups sorted by id).
pub fn apportion(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut quotas = Vec::with_capacity(counts.len());
    let mut remainders = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        let scaled = (n as u128) * (c as u128);
        quotas.push((scaled / total as u128) as usize);
        remainders.push((scaled % total as u128, i));
    }
    let assigned: usize = quotas.iter().sum();
    // Largest remainder first, lower index first on ties.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(n - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Draws `n` entries so that each group is represented in proportion to its share of the
/// manifest. Output keeps the manifest order of the selected entries.
pub fn stratified_sample(manifest: &TileManifest, n: usize, seed: u64) -> Result<TileManifest> {
    if n > manifest.len() {
        return Err(DatastoreError::PopulationTooSmall {
            requested: n,
            population: manifest.len(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        groups.entry(e.group.as_str()).or_default().push(i);
    }
    let counts: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = apportion(&counts, n);

    let mut chosen = Vec::with_capacity(n);
    for (g, ((name, members), &quota)) in groups.iter().zip(&quotas).enumerate() {
        if quota > members.len() {
            return Err(DatastoreError::GroupTooSmall {
                group: name.to_string(),
                quota,
                available: members.len(),
            });
        }
        let mut rng = rng::stream(seed, g as u64);
        chosen.extend(
            index::sample(&mut rng, members.len(), quota)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    chosen.sort_unstable();
    Ok(TileManifest {
        entries: chosen
            .into_iter()
            .map(|i| manifest.entries[i].clone())
            .collect(),
        schema_version: manifest.schema_version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{Split, TileRecord};
    use proptest::prelude::*;

    fn manifest(groups: &[(&str, usize)]) -> TileManifest {
        let mut entries = Vec::new();
        for (g, count) in groups {
            for i in 0..*count {
                entries.push(TileRecord {
                    tile_id: format!("{g}-{i}"),
                    slide_id: format!("s-{g}"),
                    group: g.to_string(),
                    x: 0,
                    y: 0,
                    width: 8,
                    height: 8,
                    mpp: 0.5,
                    split: Split::Train,
                });
            }
        }
        TileManifest::new(entries).unwrap()
    }

    fn group_counts(m: &TileManifest) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &m.entries {
            *out.entry(e.group.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Brute force: enumerate every allocation of `n` seats and keep those that are
    /// within one seat of the exact quota and give the extra seats to the largest remainders.
    fn enumerate_hamilton(counts: &[usize], n: usize) -> Vec<usize> {
        let total: usize = counts.iter().sum();
        let exact: Vec<f64> = counts
            .iter()
            .map(|&c| n as f64 * c as f64 / total as f64)
            .collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut alloc = vec![0usize; counts.len()];
        fn rec(
            i: usize,
            left: usize,
            alloc: &mut Vec<usize>,
            exact: &[f64],
            best: &mut Option<(Vec<usize>, f64)>,
        ) {
            if i == alloc.len() {
                if left != 0 {
                    return;
                }
                // Hamilton minimizes the sum of |alloc - exact|; ties resolved lexicographically
                // in favour of earlier groups (larger allocation first).
                let cost: f64 = alloc
                    .iter()
                    .zip(exact)
                    .map(|(&a, &e)| (a as f64 - e).abs())
                    .sum();
                let better = match best {
                    None => true,
                    Some((b, c)) => cost < *c - 1e-12 || ((cost - *c).abs() <= 1e-12 && alloc > b),
                };
                if better {
                    *best = Some((alloc.clone(), cost));
                }
                return;
            }
            for a in 0..=left {
                alloc[i] = a;
                rec(i + 1, left - a, alloc, exact, best);
            }
            alloc[i] = 0;
        }
        rec(0, n, &mut alloc, &exact, &mut best);
        best.unwrap().0
    }

    #[test]
    fn single_group() {
        let m = manifest(&[("A", 20)]);
        let s = stratified_sample(&m, 5, 1).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.entries.iter().all(|e| e.group == "A"));
    }

    #[test]
    fn sixty_forty_split() {
        let m = manifest(&[("A", 60), ("B", 40)]);
        let s = stratified_sample(&m, 10, 3).unwrap();
        let c = group_counts(&s);
        assert_eq!(c["A"], 6);
        assert_eq!(c["B"], 4);
    }

    #[test]
    fn three_way_tie_goes_to_lexicographic_first() {
        assert_eq!(enumerate_hamilton(&[1, 1, 1], 2), vec![1, 1, 0]);
        let m = manifest(&[("C", 1), ("A", 1), ("B", 1)]);
        let s = stratified_sample(&m, 2, 0).unwrap();
        let c = group_counts(&s);
        assert_eq!(c.get("A"), Some(&1));
        assert_eq!(c.get("B"), Some(&1));
        assert_eq!(c.get("C"), None);
    }

    #[test]
    fn too_many_requested() {
        let m = manifest(&[("A", 3)]);
        assert!(matches!(
            stratified_sample(&m, 4, 0),
            Err(DatastoreError::PopulationTooSmall { .. })
        ));
    }

    #[test]
    fn deterministic_for_seed_and_thread_count() {
        let m = manifest(&[("A", 50), ("B", 30), ("C", 7)]);
        let a = crate::par::with_threads(Some(1), || stratified_sample(&m, 20, 9).unwrap());
        let b = crate::par::with_threads(Some(4), || stratified_sample(&m, 20, 9).unwrap());
        assert_eq!(a, b);
        let c = stratified_sample(&m, 20, 10).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn matches_enumeration_and_bounds(
            counts in proptest::collection::vec(1usize..12, 1..5),
            frac in 0.0f64..=1.0,
        ) {
            let total: usize = counts.iter().sum();
            let n = ((total as f64) * frac).floor() as usize;
            let quotas = apportion(&counts, n);
            prop_assert_eq!(quotas.iter().sum::<usize>(), n);
            prop_assert_eq!(&quotas, &enumerate_hamilton(&counts, n));
            for (&q, &c) in quotas.iter().zip(&counts) {
                let exact = n as f64 * c as f64 / total as f64;
                prop_assert!((q as f64 - exact).abs() < 1.0);
                prop_assert!(q <= c);
            }
        }
    }
}
