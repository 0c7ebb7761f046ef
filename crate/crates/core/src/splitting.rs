//! Fine-to-coarse candidate split point generation.
//!
//! Candidate points start dense at the model front, where pruning removes the
//! most data and small moves of the split matter, and thin out toward the
//! rear where neighboring points barely differ. The endpoints `0` (cloud
//! only) and `N + 1` (device only) are always candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing control for candidate generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub k: u32,
}

impl SplitPolicy {
    pub fn new(k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::Validation("split policy k must be >= 1".into()));
        }
        Ok(Self { k })
    }
}

/// Strictly increasing candidate split points in `[0, N + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    points: Vec<u32>,
}

impl CandidateSet {
    pub fn points(&self) -> &[u32] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, s: u32) -> bool {
        self.points.binary_search(&s).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.points.iter().copied()
    }
}

/// Generate the candidate split point set for an `N`-layer model.
///
/// Interior points follow the recurrence `s_1 = 1`,
/// `s_i = s_{i-1} + ceil(i / k)`, stopping once the next point would pass
/// `N`; a point landing exactly on `N` is kept. The endpoints `0` and `N + 1`
/// are always included.
pub fn candidate_split_points(num_layers: u32, k: u32) -> Result<CandidateSet> {
    if num_layers < 1 {
        return Err(Error::Validation("num_layers must be >= 1".into()));
    }
    if k < 1 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    let mut points = vec![0u32];
    let mut s = 1u32;
    let mut i = 1u32;
    while s <= num_layers {
        points.push(s);
        i += 1;
        s += i.div_ceil(k);
    }
    points.push(num_layers + 1);
    points.dedup();
    Ok(CandidateSet { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_layers_k3() {
        let c = candidate_split_points(12, 3).unwrap();
        assert_eq!(c.points(), &[0, 1, 2, 3, 5, 7, 9, 12, 13]);
    }

    #[test]
    fn twenty_four_layers_k5() {
        let c = candidate_split_points(24, 5).unwrap();
        assert_eq!(
            c.points(),
            &[0, 1, 2, 3, 4, 5, 7, 9, 11, 13, 15, 18, 21, 24, 25]
        );
    }

    #[test]
    fn k_at_least_n_keeps_every_layer() {
        let c = candidate_split_points(4, 4).unwrap();
        assert_eq!(c.points(), &[0, 1, 2, 3, 4, 5]);
        let c = candidate_split_points(4, 9).unwrap();
        assert_eq!(c.points(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn contains_uses_the_point_list() {
        let c = candidate_split_points(12, 3).unwrap();
        assert!(c.contains(0) && c.contains(13) && c.contains(5));
        assert!(!c.contains(4) && !c.contains(14));
    }

    proptest! {
        #[test]
        fn endpoints_always_present(n in 1u32..200, k in 1u32..40) {
            let c = candidate_split_points(n, k).unwrap();
            prop_assert!(c.contains(0));
            prop_assert!(c.contains(n + 1));
            prop_assert!(c.len() <= n as usize + 2);
        }

        // Fine-to-coarse: gaps between consecutive interior points never
        // shrink as the split moves toward the rear.
        #[test]
        fn interior_gaps_non_decreasing(n in 2u32..200, k in 1u32..40) {
            let c = candidate_split_points(n, k).unwrap();
            let interior: Vec<u32> =
                c.iter().filter(|&p| p >= 1 && p <= n).collect();
            let gaps: Vec<u32> =
                interior.windows(2).map(|w| w[1] - w[0]).collect();
            for pair in gaps.windows(2) {
                prop_assert!(pair[0] <= pair[1], "gaps {gaps:?}");
            }
        }

        #[test]
        fn points_strictly_increasing(n in 1u32..200, k in 1u32..40) {
            let c = candidate_split_points(n, k).unwrap();
            for w in c.points().windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
