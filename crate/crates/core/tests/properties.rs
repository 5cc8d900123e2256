use megp::cluster::{cluster_with_fitter, MegpConfig};
use megp::data::{clean, write_csv, CleaningRules, Table};
use megp::eval::{improvement_percent, rolling_splits, wilcoxon_rank_sum};
use megp::expr::random_expression;
use megp::predict::{combine, distance, normalize_distances, DistanceMeasure, DistanceNorm, PredictionApproach};
use megp::{Dataset, Expression, FitResult, GpConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        let v = || prop::collection::vec(-1e3..1e3f64, d);
        (v(), v(), v())
    })
}

fn fixed_fit(expression: Expression) -> FitResult {
    FitResult { expression, train_mae: 0.0, train_rmse: 0.0, generations_run: 0, seed: 0 }
}

proptest! {
    #[test]
    fn distance_axioms((p, q, r) in vec_pair(8)) {
        for m in DistanceMeasure::ALL {
            let dpq = distance(&p, &q, m).unwrap();
            prop_assert!(dpq >= 0.0);
            prop_assert!(distance(&p, &p, m).unwrap().abs() < 1e-12);
            prop_assert_eq!(dpq, distance(&q, &p, m).unwrap());
            if m != DistanceMeasure::Cosine {
                let bound = distance(&p, &r, m).unwrap() + distance(&r, &q, m).unwrap();
                prop_assert!(dpq <= bound * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn normalized_distances_lie_in_unit_interval(raw in prop::collection::vec(0.0..1e6f64, 1..10)) {
        for norm in [DistanceNorm::Max, DistanceNorm::MinMax, DistanceNorm::Sum] {
            let d = normalize_distances(&raw, norm);
            prop_assert_eq!(d.len(), raw.len());
            prop_assert!(d.iter().all(|v| (0.0..=1.0).contains(v)), "{:?} {:?}", norm, d);
        }
    }

    #[test]
    fn combination_is_convex(
        rows in prop::collection::vec((-1e4..1e4f64, 1usize..1000, 0.0..100.0f64), 1..9),
        norm in prop_oneof![Just(DistanceNorm::Max), Just(DistanceNorm::MinMax), Just(DistanceNorm::Sum)],
    ) {
        let p: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let n: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let raw: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let d = normalize_distances(&raw, norm);
        let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * hi.abs().max(lo.abs()).max(1.0);
        for a in PredictionApproach::ALL {
            let y = combine(&p, &n, &d, 0, a);
            prop_assert!(y >= lo - tol && y <= hi + tol, "{} gave {} outside [{}, {}]", a, y, lo, hi);
        }
    }

    #[test]
    fn rolling_splits_partition(k in 1usize..30, extra in 0usize..3000) {
        let n = 2 * (k + 1) + extra;
        let splits = rolling_splits(n, k).unwrap();
        prop_assert_eq!(splits.len(), k);
        for w in splits.windows(2) {
            prop_assert_eq!(w[0].test_range.end, w[1].test_range.start);
            prop_assert!(w[1].train_range.end > w[0].train_range.end);
        }
        for s in &splits {
            prop_assert_eq!(s.train_range.start, 0);
            prop_assert_eq!(s.train_range.end, s.test_range.start);
        }
        prop_assert_eq!(splits[k - 1].test_range.end, n);
    }

    #[test]
    fn improvement_of_equal_errors_is_zero(v in 1e-6..1e6f64) {
        prop_assert_eq!(improvement_percent(v, v).unwrap(), 0.0);
    }

    #[test]
    fn rank_sum_is_symmetric(
        a in prop::collection::vec(0.0..10.0f64, 1..25),
        b in prop::collection::vec(0.0..10.0f64, 1..25),
    ) {
        let ab = wilcoxon_rank_sum(&a, &b).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn expressions_round_trip_and_evaluate_consistently(seed in any::<u64>(), x in prop::collection::vec(-50.0..50.0f64, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_expression(&GpConfig::default(), 3, &mut rng);
        let parsed: Expression = e.to_string().parse().unwrap();
        prop_assert_eq!(&parsed, &e);
        let columns: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
        let by_column = e.evaluate_columns(&columns, 1)[0];
        prop_assert_eq!(by_column.to_bits(), e.evaluate(&x).to_bits());
        prop_assert!(by_column.is_finite());
    }

    #[test]
    fn clusters_partition_data(
        targets in prop::collection::vec(-100.0..100.0f64, 4..80),
        guess in -50.0..50.0f64,
    ) {
        let n = targets.len();
        let features: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let data = Dataset::new(vec!["x0".into()], "y", features, targets).unwrap();
        let model = cluster_with_fitter(&data, &MegpConfig::default(), |_, it| {
            Ok(fixed_fit(Expression::constant(guess + it as f64)))
        })
        .unwrap();
        let mut seen = vec![false; n];
        for c in &model.clusters {
            for &r in &c.member_rows {
                prop_assert!(!seen[r]);
                seen[r] = true;
                prop_assert!((data.targets()[r] - c.equation.evaluate(&data.features()[r])).abs() < c.epsilon);
            }
        }
        prop_assert_eq!(seen.iter().filter(|s| **s).count() + model.leftover_count, n);
    }

    #[test]
    fn clean_is_idempotent_with_frozen_fences(values in prop::collection::vec(-10.0..200.0f64, 5..60)) {
        let n = values.len();
        let features: Vec<Vec<f64>> = values.iter().map(|v| vec![*v, v * 0.5]).collect();
        let data = Dataset::new(vec!["speed".into(), "water".into()], "power", features, values.clone()).unwrap();
        let rules = CleaningRules {
            nonnegative_columns: vec!["speed".into()],
            percent_columns: vec!["water".into()],
            outlier_column: Some("power".into()),
            ..CleaningRules::default()
        };
        let (once, report) = clean(&data, &rules).unwrap();
        prop_assert_eq!(report.input_rows, n);
        let frozen = CleaningRules { fences: report.fences, ..rules };
        let (twice, second) = clean(&once, &frozen).unwrap();
        prop_assert_eq!(second.output_rows, second.input_rows);
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec((any::<f64>(), -1e300..1e300f64), 1..30)) {
        let rows: Vec<(f64, f64)> = rows.into_iter().filter(|r| r.0.is_finite()).collect();
        prop_assume!(!rows.is_empty());
        let data = Dataset::new(
            vec!["a".into()],
            "y",
            rows.iter().map(|r| vec![r.0]).collect(),
            rows.iter().map(|r| r.1).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let back = Table::read(buf.as_slice()).unwrap().into_dataset("y", None).unwrap();
        prop_assert_eq!(back, data);
    }
}
