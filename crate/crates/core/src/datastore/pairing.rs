use std::collections::HashMap;

use super::{DatastoreError, EmbeddingSet, Result};

/// A reference and a candidate set with an explicit candidate-row to reference-row map.
#[derive(Debug, Clone)]
pub struct PairedSets {
    reference: EmbeddingSet,
    candidate: EmbeddingSet,
    pairing: Vec<usize>,
}

impl PairedSets {
    pub fn new(
        reference: EmbeddingSet,
        candidate: EmbeddingSet,
        pairing: Vec<usize>,
    ) -> Result<Self> {
        if reference.dim() != candidate.dim() {
            return Err(DatastoreError::DimMismatch(
                reference.dim(),
                candidate.dim(),
            ));
        }
        if pairing.len() != candidate.rows() {
            return Err(DatastoreError::IdCount {
                ids: pairing.len(),
                rows: candidate.rows(),
            });
        }
        if let Some(&bad) = pairing.iter().find(|&&r| r >= reference.rows()) {
            return Err(DatastoreError::UnmatchedId(format!("reference row {bad}")));
        }
        Ok(Self {
            reference,
            candidate,
            pairing,
        })
    }

    pub fn reference(&self) -> &EmbeddingSet {
        &self.reference
    }

    pub fn candidate(&self) -> &EmbeddingSet {
        &self.candidate
    }

    /// `pairing()[i]` is the reference row paired with candidate row `i`.
    pub fn pairing(&self) -> &[usize] {
        &self.pairing
    }
}

fn index_ids(ids: &[String]) -> Result<HashMap<&str, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.as_str(), i).is_some() {
            return Err(DatastoreError::DuplicateId(id.clone()));
        }
    }
    Ok(map)
}

/// Pairs every candidate row with the reference row carrying the same id.
pub fn pair_by_id(
    reference: EmbeddingSet,
    reference_ids: &[String],
    candidate: EmbeddingSet,
    candidate_ids: &[String],
) -> Result<PairedSets> {
    if reference_ids.len() != reference.rows() {
        return Err(DatastoreError::IdCount {
            ids: reference_ids.len(),
            rows: reference.rows(),
        });
    }
    if candidate_ids.len() != candidate.rows() {
        return Err(DatastoreError::IdCount {
            ids: candidate_ids.len(),
            rows: candidate.rows(),
        });
    }
    let by_id = index_ids(reference_ids)?;
    index_ids(candidate_ids)?;
    let pairing = candidate_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| DatastoreError::UnmatchedId(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    PairedSets::new(reference, candidate, pairing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: usize) -> EmbeddingSet {
        EmbeddingSet::new(rows, 2, (0..rows * 2).map(|v| v as f32).collect(), "e", "t").unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_order_is_identity() {
        let p = pair_by_id(
            set(3),
            &ids(&["a", "b", "c"]),
            set(3),
            &ids(&["a", "b", "c"]),
        )
        .unwrap();
        assert_eq!(p.pairing(), &[0, 1, 2]);
    }

    #[test]
    fn reversed_ids_give_reversal() {
        let p = pair_by_id(
            set(3),
            &ids(&["a", "b", "c"]),
            set(3),
            &ids(&["c", "b", "a"]),
        )
        .unwrap();
        assert_eq!(p.pairing(), &[2, 1, 0]);
    }

    #[test]
    fn unknown_id_is_named() {
        let err = pair_by_id(set(2), &ids(&["a", "b"]), set(1), &ids(&["z"])).unwrap_err();
        match err {
            DatastoreError::UnmatchedId(id) => assert_eq!(id, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            pair_by_id(set(2), &ids(&["a", "a"]), set(1), &ids(&["a"])),
            Err(DatastoreError::DuplicateId(_))
        ));
        assert!(matches!(
            pair_by_id(set(2), &ids(&["a", "b"]), set(2), &ids(&["b", "b"])),
            Err(DatastoreError::DuplicateId(_))
        ));
    }

    proptest! {
        #[test]
        fn swapped_pairing_composes_to_identity(perm in Just((0..20usize).collect::<Vec<_>>()).prop_shuffle()) {
            let ref_ids: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
            let cand_ids: Vec<String> = perm.iter().map(|&i| format!("t{i}")).collect();
            let fwd = pair_by_id(set(20), &ref_ids, set(20), &cand_ids).unwrap();
            let back = pair_by_id(set(20), &cand_ids, set(20), &ref_ids).unwrap();
            // Bijection onto its image.
            let mut seen = fwd.pairing().to_vec();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), 20);
            for i in 0..20 {
                prop_assert_eq!(back.pairing()[fwd.pairing()[i]], i);
            }
        }
    }
}
