use serde::{Deserialize, Serialize};

use super::{Descriptor, FeatureError, KeypointSet, DESCRIPTOR_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f32,
}

/// Mutual nearest-neighbour matches, ordered by `index_a`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

#[inline]
fn dot(a: &Descriptor, b: &Descriptor) -> f32 {
    let mut acc = [0.0f32; 8];
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    acc.iter().sum()
}

#[inline]
fn exact_distance(a: &Descriptor, b: &Descriptor) -> f32 {
    let mut s = 0.0f32;
    for k in 0..DESCRIPTOR_LEN {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// Nearest-neighbour matching with the distance-ratio test (`a → b`) and a
/// mutual cross-check (`b → a` nearest neighbour must point back).
pub fn match_descriptors(a: &KeypointSet, b: &KeypointSet, ratio: f64) -> Result<MatchSet, FeatureError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FeatureError::InvalidRatio(ratio));
    }
    if a.is_empty() || b.is_empty() {
        return Err(FeatureError::EmptySet);
    }
    let na = a.descriptors.len();
    let nb = b.descriptors.len();
    let norm_a: Vec<f32> = a.descriptors.iter().map(|d| dot(d, d)).collect();
    let norm_b: Vec<f32> = b.descriptors.iter().map(|d| dot(d, d)).collect();

    // Row-wise best/second-best and column-wise best, from one pass over the
    // squared-distance matrix.
    let mut row_best = vec![(usize::MAX, f32::INFINITY, f32::INFINITY); na];
    let mut col_best = vec![(usize::MAX, f32::INFINITY); nb];
    for (i, da) in a.descriptors.iter().enumerate() {
        let (mut bj, mut b1, mut b2) = (usize::MAX, f32::INFINITY, f32::INFINITY);
        for (j, db) in b.descriptors.iter().enumerate() {
            let d2 = (norm_a[i] + norm_b[j] - 2.0 * dot(da, db)).max(0.0);
            if d2 < b1 {
                b2 = b1;
                b1 = d2;
                bj = j;
            } else if d2 < b2 {
                b2 = d2;
            }
            if d2 < col_best[j].1 {
                col_best[j] = (i, d2);
            }
        }
        row_best[i] = (bj, b1, b2);
    }

    let r2 = (ratio * ratio) as f32;
    let matches = row_best
        .iter()
        .enumerate()
        .filter_map(|(i, &(j, d1, d2))| {
            let passes_ratio = d2.is_infinite() || d1 < r2 * d2;
            (passes_ratio && col_best[j].0 == i).then(|| Match {
                index_a: i,
                index_b: j,
                distance: exact_distance(&a.descriptors[i], &b.descriptors[j]),
            })
        })
        .collect();
    Ok(MatchSet { matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Keypoint;
    use crate::geometry::Point2;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> KeypointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = KeypointSet::default();
        for i in 0..n {
            let mut d = [0.0f32; DESCRIPTOR_LEN];
            d.iter_mut().for_each(|v| *v = rng.gen());
            let norm = dot(&d, &d).sqrt();
            d.iter_mut().for_each(|v| *v /= norm);
            set.descriptors.push(d);
            set.keypoints.push(Keypoint {
                position: Point2::new(i as f64, 0.0),
                scale: 1.6,
                orientation: 0.0,
                response: 1.0,
            });
        }
        set
    }

    #[test]
    fn self_matching_is_exact() {
        let s = random_set(50, 1);
        let m = match_descriptors(&s, &s, 0.8).unwrap();
        assert_eq!(m.len(), 50);
        for mm in &m.matches {
            assert_eq!(mm.index_a, mm.index_b);
            assert_eq!(mm.distance, 0.0);
        }
    }

    #[test]
    fn permutation_invariance() {
        let a = random_set(60, 2);
        let mut perm: Vec<usize> = (0..60).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let b = KeypointSet {
            keypoints: perm.iter().map(|&p| a.keypoints[p]).collect(),
            descriptors: perm.iter().map(|&p| a.descriptors[p]).collect(),
        };
        let m_self = match_descriptors(&a, &a, 0.75).unwrap();
        let m_perm = match_descriptors(&a, &b, 0.75).unwrap();
        let unpermuted: Vec<(usize, usize)> = m_perm.matches.iter().map(|m| (m.index_a, perm[m.index_b])).collect();
        let direct: Vec<(usize, usize)> = m_self.matches.iter().map(|m| (m.index_a, m.index_b)).collect();
        assert_eq!(unpermuted, direct);
    }

    #[test]
    fn errors() {
        let s = random_set(3, 1);
        assert_eq!(
            match_descriptors(&s, &KeypointSet::default(), 0.75),
            Err(FeatureError::EmptySet)
        );
        assert_eq!(match_descriptors(&s, &s, 1.0), Err(FeatureError::InvalidRatio(1.0)));
    }

    #[test]
    fn ambiguous_matches_fail_ratio_test() {
        let a = random_set(1, 4);
        let mut b = random_set(2, 5);
        b.descriptors[0] = a.descriptors[0];
        b.descriptors[1] = a.descriptors[0];
        b.descriptors[0][0] += 1e-2;
        b.descriptors[1][1] += 1e-2;
        let m = match_descriptors(&a, &b, 0.75).unwrap();
        assert!(m.is_empty());
    }
}
