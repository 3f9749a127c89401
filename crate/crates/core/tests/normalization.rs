mod common;

use proptest::prelude::*;
use xlalign_core::normalize::{
    normalize, normalize_backward, normalize_matrix, normalize_streamed, tile_ranges, Normalizer,
    PoolStatistics,
};
use xlalign_core::similarity::score_tile;
use xlalign_core::synthetic::{generate_synthetic_pair, SyntheticCorpusSpec};
use xlalign_core::{Matrix, NormScope, NormalizationConfig, ScoreMode};

fn matrix(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(|(m, n)| {
        prop::collection::vec(-10.0f64..10.0, m * n)
            .prop_map(move |d| Matrix::from_vec(m, n, d).unwrap())
    })
}

#[test]
fn worked_example() {
    let f = Matrix::identity(2);
    let s = normalize(&f, &NormalizationConfig::pool(0.75)).unwrap();
    let expected = Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]).unwrap();
    assert!(s.normalized.max_abs_diff(&expected) < 1e-15);
    assert_eq!(s.row_means, [0.5, 0.5]);
    assert_eq!(s.grand_mean, 0.5);
}

#[test]
fn constant_matrix_vanishes() {
    let f = Matrix::from_vec(3, 4, vec![2.5; 12]).unwrap();
    for alpha in [0.0, 0.3, 0.75, 1.0] {
        let s = normalize(&f, &NormalizationConfig::pool(alpha)).unwrap();
        assert!(s.normalized.as_slice().iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn disabled_is_identity() {
    let f = Matrix::from_rows(&[[1.0, 2.0], [3.0, 5.0]]).unwrap();
    assert_eq!(
        normalize_matrix(&f, &NormalizationConfig::disabled()).unwrap(),
        f
    );
}

#[test]
fn tiles_cover_without_singletons() {
    assert_eq!(tile_ranges(10, 4).unwrap(), [0..4, 4..8, 8..10]);
    assert_eq!(tile_ranges(9, 4).unwrap(), [0..4, 4..9]);
    let single = tile_ranges(3, 256).unwrap();
    assert_eq!((single.len(), single[0].clone()), (1, 0..3));
    assert!(tile_ranges(10, 1).is_err());
}

#[test]
fn tile_scope_agrees_with_pool_on_large_pools() {
    // 512 × 512 synthetic pool scored at once, normalized in 256-wide tiles.
    let spec = SyntheticCorpusSpec {
        num_pairs: 512,
        noise_sigma: 0.2,
        ..Default::default()
    };
    let pair = generate_synthetic_pair(&spec).unwrap();
    let f = score_tile(
        pair.src.entries(),
        pair.tgt.entries(),
        ScoreMode::EvalCosine,
        None,
    )
    .unwrap();
    let pool = normalize_matrix(&f, &NormalizationConfig::pool(0.75)).unwrap();
    let tile = normalize_matrix(&f, &NormalizationConfig::tile(0.75, 256)).unwrap();
    let best = |m: &Matrix, i: usize| xlalign_core::linalg::argmax(m.row(i)).unwrap();
    let agree = (0..512)
        .filter(|&i| best(&pool, i) == best(&tile, i))
        .count();
    assert!(agree as f64 / 512.0 >= 0.95, "{agree}/512");
}

proptest! {
    #[test]
    fn matches_entrywise_oracle(f in matrix(1..9, 1..9), alpha in 0.0f64..=1.0) {
        let s = normalize(&f, &NormalizationConfig::pool(alpha)).unwrap();
        prop_assert!(s.normalized.max_abs_diff(&common::oracle_normalize(&f, alpha)) < 1e-12);
    }

    #[test]
    fn banded_statistics_match_full(f in matrix(2..12, 2..12), band in 1usize..5, alpha in 0.0f64..=1.0) {
        let config = NormalizationConfig::pool(alpha);
        let mut stats = PoolStatistics::new(f.rows(), f.cols());
        let mut first = 0;
        while first < f.rows() {
            let end = (first + band).min(f.rows());
            let rows: Vec<&[f64]> = (first..end).map(|i| f.row(i)).collect();
            stats.accumulate(first, &Matrix::from_rows(&rows).unwrap()).unwrap();
            first = end;
        }
        prop_assert!(stats.is_complete());
        let normalizer = Normalizer::from_statistics(&stats, &config);
        let full = normalize(&f, &config).unwrap().normalized;
        for i in 0..f.rows() {
            for j in 0..f.cols() {
                prop_assert!((normalizer.apply(f[(i, j)], i, j) - full[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn streamed_tiles_normalize_independently(f in matrix(2..20, 2..20), size in 2usize..8) {
        let config = NormalizationConfig::tile(0.75, size);
        let tiles = normalize_streamed(&f, &config).unwrap();
        let joined = normalize_matrix(&f, &config).unwrap();
        for t in &tiles {
            prop_assert!(t.normalized.mean().abs() < 1e-9);
            for i in 0..t.raw.rows() {
                for j in 0..t.raw.cols() {
                    prop_assert_eq!(t.raw[(i, j)], f[(t.row_offset + i, t.col_offset + j)]);
                    prop_assert_eq!(t.normalized[(i, j)], joined[(t.row_offset + i, t.col_offset + j)]);
                }
            }
        }
        prop_assert_eq!(config.scope, NormScope::Tile);
    }

    #[test]
    fn backward_is_the_adjoint(f in matrix(1..7, 1..7), alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        // <N(x), g> == <x, N*(g)> for the linear map N.
        let config = NormalizationConfig::pool(alpha);
        let mut rng = common::rng(seed);
        let g = common::random_matrix(&mut rng, f.rows(), f.cols(), 1.0);
        let forward = normalize(&f, &config).unwrap().normalized;
        let back = normalize_backward(&g, &config);
        let lhs: f64 = forward.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.as_slice().iter().zip(back.as_slice()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }
}
