use crate::interchange::bundle::{Keypoint, PerceptionBundle, PixelBox, Skeleton};

/// Keypoints used for features: nose, neck, right hip/knee/ankle, left
/// hip/knee/ankle.
pub const SELECTED_KEYPOINTS: [usize; 8] = [0, 1, 8, 9, 10, 11, 12, 13];
pub const MIN_PRESENT_KEYPOINTS: usize = 3;
/// A person's mask must cover more than this share of the image.
pub const MIN_SEGMENT_SHARE: f64 = 0.001;

pub type SelectedKeypoints = [Option<Keypoint>; 8];

pub fn select_keypoints(s: &Skeleton) -> SelectedKeypoints {
    SELECTED_KEYPOINTS.map(|i| s.get(i).copied())
}

pub fn present_count(kps: &SelectedKeypoints) -> usize {
    kps.iter().flatten().count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetainedPerson {
    /// Index into `bundle.persons`.
    pub person: usize,
    pub bbox: PixelBox,
    pub keypoints: SelectedKeypoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    SmallSegment,
    NoSkeleton,
    FewKeypoints,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairingOutcome {
    pub retained: Vec<RetainedPerson>,
    /// `(person index, reason)` for every dropped detection.
    pub dropped: Vec<(usize, DropReason)>,
}

/// Pairs pose skeletons with person boxes and applies the person filters.
///
/// Skeletons come from the persons' own keypoints and from
/// `bundle.skeletons`. A skeleton may pair with a box holding a strict
/// majority of its present selected keypoints; pairs are accepted greedily by
/// contained count, then by mean contained score, each box and skeleton used
/// once. Paired persons are then kept if their mask is larger than
/// [`MIN_SEGMENT_SHARE`] of the image and at least [`MIN_PRESENT_KEYPOINTS`]
/// selected keypoints are present.
pub fn pair_and_filter(bundle: &PerceptionBundle) -> PairingOutcome {
    let skeletons: Vec<SelectedKeypoints> = bundle
        .persons
        .iter()
        .map(|p| &p.keypoints)
        .chain(&bundle.skeletons)
        .filter(|s| s.any_present())
        .map(select_keypoints)
        .filter(|kps| present_count(kps) > 0)
        .collect();

    struct Candidate {
        skeleton: usize,
        person: usize,
        count: usize,
        mean_score: f64,
    }
    let mut candidates = Vec::new();
    for (s, kps) in skeletons.iter().enumerate() {
        let total = present_count(kps);
        for (p, person) in bundle.persons.iter().enumerate() {
            let inside: Vec<&Keypoint> = kps.iter().flatten().filter(|k| person.bbox.contains(k.x, k.y)).collect();
            if 2 * inside.len() > total {
                candidates.push(Candidate {
                    skeleton: s,
                    person: p,
                    count: inside.len(),
                    mean_score: inside.iter().map(|k| k.score).sum::<f64>() / inside.len() as f64,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(b.mean_score.total_cmp(&a.mean_score))
            .then(a.skeleton.cmp(&b.skeleton))
            .then(a.person.cmp(&b.person))
    });
    let mut skeleton_used = vec![false; skeletons.len()];
    let mut paired: Vec<Option<usize>> = vec![None; bundle.persons.len()];
    for c in candidates {
        if !skeleton_used[c.skeleton] && paired[c.person].is_none() {
            skeleton_used[c.skeleton] = true;
            paired[c.person] = Some(c.skeleton);
        }
    }

    let min_segment = MIN_SEGMENT_SHARE * bundle.pixel_count() as f64;
    let mut out = PairingOutcome::default();
    for (i, person) in bundle.persons.iter().enumerate() {
        let reason = if person.segment_pixel_count as f64 <= min_segment {
            Some(DropReason::SmallSegment)
        } else if paired[i].is_none() {
            Some(DropReason::NoSkeleton)
        } else if present_count(&skeletons[paired[i].unwrap_or_default()]) < MIN_PRESENT_KEYPOINTS {
            Some(DropReason::FewKeypoints)
        } else {
            None
        };
        match (reason, paired[i]) {
            (None, Some(s)) => out.retained.push(RetainedPerson {
                person: i,
                bbox: person.bbox,
                keypoints: skeletons[s],
            }),
            (Some(r), _) => out.dropped.push((i, r)),
            (None, None) => unreachable!(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::interchange::bundle::PersonDetection;
    use crate::interchange::LabelGrid;

    fn bundle(persons: Vec<PersonDetection>, skeletons: Vec<Skeleton>) -> PerceptionBundle {
        let classes = BTreeMap::from([(0, "ground".to_string()), (1, "water".to_string())]);
        PerceptionBundle {
            image_ref: "img".into(),
            width: 100,
            height: 100,
            persons,
            skeletons,
            label_map: LabelGrid::from_cells(1, 1, 100.0, 100.0, vec![0], classes).encode(),
            dedup_embedding: vec![0.0; 512],
            relevance_features: vec![],
        }
    }

    fn person(b: [f64; 4], segment: u64) -> PersonDetection {
        PersonDetection {
            bbox: PixelBox::from(b),
            segment_pixel_count: segment,
            keypoints: Skeleton::absent(),
        }
    }

    /// Skeleton with the eight selected keypoints at the given positions.
    fn skeleton(points: &[(f64, f64)]) -> Skeleton {
        let mut s = Skeleton::absent();
        for (&i, &(x, y)) in SELECTED_KEYPOINTS.iter().zip(points) {
            s.0[i] = Keypoint::new(x, y, 0.9);
        }
        s
    }

    #[test]
    fn small_segment_is_dropped() {
        let mut p = person([10.0, 10.0, 40.0, 90.0], 5);
        p.keypoints = skeleton(&[(20.0, 20.0); 8]);
        let out = pair_and_filter(&bundle(vec![p.clone()], vec![]));
        assert_eq!(out.dropped, vec![(0, DropReason::SmallSegment)]);
        p.segment_pixel_count = 11;
        let out = pair_and_filter(&bundle(vec![p], vec![]));
        assert_eq!(out.retained.len(), 1);
        assert_eq!(present_count(&out.retained[0].keypoints), 8);
    }

    #[test]
    fn majority_containment_pairs_skeleton() {
        let a = person([0.0, 0.0, 40.0, 100.0], 500);
        let b = person([50.0, 0.0, 90.0, 100.0], 500);
        let mut pts = vec![(20.0, 50.0); 6];
        pts.extend([(70.0, 50.0); 2]);
        let out = pair_and_filter(&bundle(vec![a, b], vec![skeleton(&pts)]));
        assert_eq!(out.retained.len(), 1);
        assert_eq!(out.retained[0].person, 0);
        assert_eq!(out.dropped, vec![(1, DropReason::NoSkeleton)]);
    }

    #[test]
    fn few_keypoints_and_split_skeleton() {
        let a = person([0.0, 0.0, 40.0, 100.0], 500);
        let out = pair_and_filter(&bundle(vec![a.clone()], vec![skeleton(&[(20.0, 50.0); 2])]));
        assert_eq!(out.dropped, vec![(0, DropReason::FewKeypoints)]);
        // 4 in, 4 out is not a strict majority
        let mut pts = vec![(20.0, 50.0); 4];
        pts.extend([(70.0, 50.0); 4]);
        let out = pair_and_filter(&bundle(vec![a], vec![skeleton(&pts)]));
        assert_eq!(out.dropped, vec![(0, DropReason::NoSkeleton)]);
    }

    #[test]
    fn each_box_takes_one_skeleton() {
        let a = person([0.0, 0.0, 60.0, 100.0], 500);
        let b = person([30.0, 0.0, 90.0, 100.0], 500);
        // Both skeletons lie in the overlap; the higher count goes first.
        let s1 = skeleton(&[(40.0, 50.0); 8]);
        let s2 = skeleton(&[(45.0, 50.0); 5]);
        let out = pair_and_filter(&bundle(vec![a, b], vec![s2, s1]));
        assert_eq!(out.retained.len(), 2);
        assert_eq!(present_count(&out.retained[0].keypoints), 8);
        assert_eq!(present_count(&out.retained[1].keypoints), 5);
    }
}
