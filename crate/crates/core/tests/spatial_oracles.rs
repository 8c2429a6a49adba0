use proptest::prelude::*;
use rand::Rng;
use rpointhop::cloud::{random_sample_indices, Point};
use rpointhop::rng::rng_from_seed;
use rpointhop::spatial::{dist2, farthest_point_sample, KnnIndex};

fn brute_knn(points: &[Point], q: &Point, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (dist2(q, p), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

fn brute_fps(points: &[Point], m: usize, start: usize) -> Vec<usize> {
    let mut selected = vec![start];
    while selected.len() < m {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| dist2(p, &points[s]))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        selected.push(best.unwrap());
    }
    selected
}

/// Random points on a coarse grid, so exact distance ties and duplicates occur.
fn grid_points(rng: &mut impl Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(0..6) as f64 * 0.5,
                rng.random_range(0..6) as f64 * 0.5,
                rng.random_range(0..6) as f64 * 0.5,
            )
        })
        .collect()
}

fn uniform_points(rng: &mut impl Rng, n: usize) -> Vec<Point> {
    (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

#[test]
fn knn_matches_brute_force_on_200_instances() {
    let mut rng = rng_from_seed(11);
    for case in 0..200 {
        let n = rng.random_range(1..300);
        let pts = if case % 2 == 0 {
            grid_points(&mut rng, n)
        } else {
            uniform_points(&mut rng, n)
        };
        let index = KnnIndex::from_points(pts.clone()).unwrap();
        let k = rng.random_range(1..=n);
        for _ in 0..5 {
            let q = if rng.random::<bool>() {
                pts[rng.random_range(0..n)]
            } else {
                uniform_points(&mut rng, 1)[0] * 2.0
            };
            assert_eq!(index.knn_indices(&q, k).unwrap(), brute_knn(&pts, &q, k), "case {case}");
        }
    }
}

#[test]
fn fps_matches_brute_force_on_200_instances() {
    let mut rng = rng_from_seed(12);
    for case in 0..200 {
        let n = rng.random_range(1..120);
        let pts = if case % 2 == 0 {
            grid_points(&mut rng, n)
        } else {
            uniform_points(&mut rng, n)
        };
        let m = rng.random_range(1..=n);
        let start = rng.random_range(0..n);
        assert_eq!(
            farthest_point_sample(&pts, m, start).unwrap(),
            brute_fps(&pts, m, start),
            "case {case}"
        );
    }
}

#[test]
fn knn_and_fps_edge_cases() {
    let square = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(1.0, 1.0, 0.0),
    ];
    let index = KnnIndex::from_points(square.clone()).unwrap();
    assert_eq!(index.knn_indices(&square[0], 3).unwrap(), vec![0, 1, 2]);
    assert!(index.knn(&square[0], 5).is_err());
    assert!(index.knn(&square[0], 0).is_err());
    assert_eq!(farthest_point_sample(&square, 1, 2).unwrap(), vec![2]);
    assert_eq!(farthest_point_sample(&square, 2, 0).unwrap(), vec![0, 3]);
    assert!(farthest_point_sample(&square, 5, 0).is_err());
}

#[test]
fn fps_spreads_points_better_than_random_subsets() {
    let mut rng = rng_from_seed(13);
    let min_pair = |pts: &[Point], idx: &[usize]| {
        let mut best = f64::INFINITY;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                best = best.min(dist2(&pts[i], &pts[j]));
            }
        }
        best
    };
    let mut fps_d = Vec::new();
    let mut rnd_d = Vec::new();
    for t in 0..50 {
        let pts = uniform_points(&mut rng, 200);
        fps_d.push(min_pair(&pts, &farthest_point_sample(&pts, 32, 0).unwrap()));
        rnd_d.push(min_pair(&pts, &random_sample_indices(200, 32, t).unwrap()));
    }
    fps_d.sort_by(f64::total_cmp);
    rnd_d.sort_by(f64::total_cmp);
    assert!(fps_d[25] >= rnd_d[25]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_is_sorted_and_exact(coords in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..80),
                               q in (-6.0f64..6.0, -6.0f64..6.0, -6.0f64..6.0),
                               k_frac in 0.0f64..1.0) {
        let pts: Vec<Point> = coords.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
        let q = Point::new(q.0, q.1, q.2);
        let k = 1 + ((pts.len() - 1) as f64 * k_frac) as usize;
        let index = KnnIndex::from_points(pts.clone()).unwrap();
        let found = index.knn(&q, k).unwrap();
        prop_assert_eq!(found.iter().map(|n| n.index).collect::<Vec<_>>(), brute_knn(&pts, &q, k));
        prop_assert!(found.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn fps_indices_are_distinct(coords in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..60),
                                m_frac in 0.0f64..1.0) {
        let pts: Vec<Point> = coords.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
        let m = 1 + ((pts.len() - 1) as f64 * m_frac) as usize;
        let mut idx = farthest_point_sample(&pts, m, 0).unwrap();
        prop_assert_eq!(idx[0], 0);
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), m);
    }

    #[test]
    fn random_sampling_is_sorted_distinct_and_seeded(n in 1usize..500, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = 1 + ((n - 1) as f64 * frac) as usize;
        let a = random_sample_indices(n, m, seed).unwrap();
        prop_assert_eq!(&a, &random_sample_indices(n, m, seed).unwrap());
        prop_assert_eq!(a.len(), m);
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.iter().all(|&i| i < n));
    }
}
