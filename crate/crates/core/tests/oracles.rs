mod common;

use epic_core::geometry::{fps, knn, normalize_unit_sphere, pairwise_knn_table, PointCloud};
use epic_core::rng::stream;
use proptest::prelude::*;

#[test]
fn knn_and_fps_match_brute_force() {
    let r = common::oracle_equivalence(500, 1);
    assert!(r.is_ok(), "{}", r.unwrap_err());
}

#[test]
fn table_rows_equal_single_queries() {
    let mut rng = stream(2);
    for n in [2, 5, 33, 64] {
        let cloud = common::random_cloud(&mut rng, n);
        let table = pairwise_knn_table(&cloud, n - 1).unwrap();
        for (q, row) in table.iter().enumerate() {
            assert_eq!(row, &knn(&cloud, q, n - 1).unwrap());
        }
    }
}

fn cloud_strategy() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..80)
}

proptest! {
    #[test]
    fn fps_is_a_permutation_prefix(pts in cloud_strategy(), start_frac in 0.0f64..1.0) {
        let cloud = PointCloud::new(pts).unwrap();
        let n = cloud.len();
        let start = ((start_frac * n as f64) as usize).min(n - 1);
        let all = fps(&cloud, n, start).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(all[0], start);
    }

    #[test]
    fn knn_distances_are_sorted(pts in cloud_strategy()) {
        let cloud = PointCloud::new(pts).unwrap();
        let p = cloud.points();
        let nn = knn(&cloud, 0, cloud.len() - 1).unwrap();
        let d: Vec<f64> = nn.iter().map(|&j| epic_core::geometry::dist2(&p[0], &p[j])).collect();
        prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(!nn.contains(&0));
    }

    #[test]
    fn normalize_is_idempotent(pts in cloud_strategy()) {
        let cloud = PointCloud::new(pts).unwrap();
        prop_assume!(normalize_unit_sphere(&cloud).is_ok());
        let once = normalize_unit_sphere(&cloud).unwrap();
        let twice = normalize_unit_sphere(&once).unwrap();
        let radius = once.points().iter().map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()).fold(0.0, f64::max);
        prop_assert!((radius - 1.0).abs() < 1e-12);
        for (a, b) in once.points().iter().zip(twice.points()) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bad_k_is_rejected() {
    let cloud = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
    assert!(knn(&cloud, 0, 0).is_err());
    assert!(knn(&cloud, 0, 3).is_err());
    assert!(fps(&cloud, 4, 0).is_err());
    assert!(fps(&cloud, 2, 3).is_err());
    assert_eq!(fps(&cloud, 3, 0).unwrap(), vec![0, 2, 1]);
}
