use percdetect::cluster::{
    crossing_cluster_exists, label_clusters, label_clusters_oracle, level_set, max_cluster_statistic, ClusterScratch,
    LevelSide, SiteMask,
};
use percdetect::lattice::Lattice;
use percdetect::noise::ObservedImage;
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = SiteMask> {
    (1usize..=16, 0.05f64..0.95)
        .prop_flat_map(|(n, p)| proptest::collection::vec(proptest::bool::weighted(p), n * n).prop_map(move |bits| (n, bits)))
        .prop_map(|(n, bits)| SiteMask::from_fn(Lattice::new(n).unwrap(), |i| bits[i]))
}

fn image_strategy() -> impl Strategy<Value = ObservedImage> {
    (1usize..=12)
        .prop_flat_map(|n| proptest::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| (n, v)))
        .prop_map(|(n, v)| ObservedImage::new(Lattice::new(n).unwrap(), v, None).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn union_find_matches_traversal(mask in mask_strategy()) {
        let fast = label_clusters(&mask);
        let slow = label_clusters_oracle(&mask);
        prop_assert_eq!(fast.labels(), slow.labels());
        prop_assert_eq!(fast.size_multiset(), slow.size_multiset());
        prop_assert_eq!(fast.max_cluster_size(), slow.max_cluster_size());
    }

    #[test]
    fn labels_are_smallest_member_index(mask in mask_strategy()) {
        let lab = label_clusters(&mask);
        for (i, l) in lab.labels().iter().enumerate() {
            match l {
                Some(l) => {
                    prop_assert!(*l <= i);
                    prop_assert_eq!(lab.labels()[*l], Some(*l));
                }
                None => prop_assert!(!mask.is_marked_index(i)),
            }
        }
        let total: usize = lab.cluster_sizes().values().sum();
        prop_assert_eq!(total, mask.count());
    }

    #[test]
    fn scan_agrees_with_labeling(mask in mask_strategy()) {
        let mut scratch = ClusterScratch::new();
        let s = scratch.scan_mask(&mask);
        prop_assert_eq!(s.max_cluster_size, label_clusters(&mask).max_cluster_size());
        prop_assert_eq!(s.marked, mask.count());
        prop_assert_eq!(s.crossing, crossing_cluster_exists(&mask));
    }

    #[test]
    fn statistic_independent_of_route(image in image_strategy(), a in 0.0f64..2.0) {
        let mut scratch = ClusterScratch::new();
        for side in [LevelSide::Plus, LevelSide::Minus] {
            let direct = max_cluster_statistic(&image, a, side);
            let via_mask = label_clusters(&level_set(&image, a, side)).max_cluster_size();
            let scanned = scratch.scan_level(&image, a, side).max_cluster_size;
            prop_assert_eq!(direct, via_mask);
            prop_assert_eq!(direct, scanned);
        }
    }

    #[test]
    fn minus_side_is_plus_side_of_negation(image in image_strategy(), a in 0.0f64..2.0) {
        prop_assert_eq!(
            max_cluster_statistic(&image, a, LevelSide::Minus),
            max_cluster_statistic(&image.negated(), a, LevelSide::Plus)
        );
    }
}

#[test]
fn full_and_empty_masks() {
    for n in [1, 2, 7] {
        let l = Lattice::new(n).unwrap();
        let full = label_clusters(&SiteMask::full(l));
        assert_eq!(full.cluster_count(), 1);
        assert_eq!(full.max_cluster_size(), n * n);
        let empty = label_clusters(&SiteMask::empty(l));
        assert_eq!(empty.cluster_count(), 0);
        assert_eq!(empty.max_cluster_size(), 0);
    }
}

#[test]
fn checkerboard_rows_on_triangular_lattice() {
    // alternate rows: each row is a separate horizontal cluster
    let l = Lattice::new(6).unwrap();
    let mask = SiteMask::from_fn(l, |i| (i / 6) % 2 == 0);
    let lab = label_clusters(&mask);
    assert_eq!(lab.size_multiset(), vec![6, 6, 6]);
    assert!(crossing_cluster_exists(&mask));
}
