use std::path::Path;

use mcma::classifiers::ClassifierKind;
use mcma::cli::{ingest_csv, ingest_jsonl, to_csv, to_jsonl};
use mcma::eval::{abs_error, binary_auc, f1_macro};
use mcma::factor::{posterior_mean, FactorModel};
use mcma::pipeline::{run_basic, run_mcma, screen_correlated, PipelineConfig};
use mcma::synthgen::generate_synthetic;
use mcma::{BiasMatrix, McmaError, Simplex3, SyntheticParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn simplex() -> impl Strategy<Value = Simplex3> {
    prop::array::uniform3(0.0f64..1.0)
        .prop_filter("non-zero", |w| w.iter().sum::<f64>() > 1e-6)
        .prop_map(Simplex3::from_weights)
}

fn bias_rows(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    (2..=max_n, 2..=max_d)
        .prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(0u8..=1, d), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn from_weights_is_a_simplex(w in prop::array::uniform3(0.0f64..10.0)) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let s = Simplex3::from_weights(w);
        prop_assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(Simplex3::new(s.probs()).is_ok());
    }

    #[test]
    fn abs_error_symmetric_and_triangular(a in simplex(), b in simplex(), c in simplex()) {
        let ab = abs_error(&a, &b);
        prop_assert_eq!(ab, abs_error(&b, &a));
        let (ac, cb) = (abs_error(&a, &c), abs_error(&c, &b));
        for k in 0..3 {
            prop_assert!(ab[k] <= ac[k] + cb[k] + 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab[k]));
        }
    }

    #[test]
    fn auc_invariant_to_monotone_transforms(
        pairs in prop::collection::vec((any::<bool>(), -5.0f64..5.0), 2..40),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let pos: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let base = binary_auc(&pos, &s);
        let affine: Vec<f64> = s.iter().map(|v| scale * v + shift).collect();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        prop_assert_eq!(base, binary_auc(&pos, &affine));
        prop_assert_eq!(base, binary_auc(&pos, &exp));
        if let Some(a) = base {
            prop_assert!((0.0..=1.0).contains(&a));
            let flipped: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((binary_auc(&pos, &flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_bounds_and_perfect_score(pairs in prop::collection::vec((0u8..3, 0u8..3), 1..50)) {
        let y: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let f = f1_macro(&y, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let all_present = (0..3).all(|c| y.contains(&c));
        if all_present {
            prop_assert_eq!(f == 1.0, y == p);
            prop_assert_eq!(f1_macro(&y, &y).unwrap(), 1.0);
        }
    }

    #[test]
    fn dataset_files_round_trip(rows in bias_rows(20, 8), seed in any::<u64>()) {
        let n = rows.len();
        let labels: Vec<i64> = (0..n).map(|i| ((seed >> (i % 60)) % 3) as i64).collect();
        let raw: Vec<Vec<i64>> = rows.iter().map(|r| r.iter().map(|&v| i64::from(v)).collect()).collect();
        let ds = mcma::data::validate_dataset(&raw, &labels).unwrap();
        let here = Path::new("mem");
        let back = ingest_csv(&to_csv(&ds).unwrap(), None, here).unwrap();
        prop_assert_eq!(&back.bias, &ds.bias);
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert_eq!(&back.study_ids, &ds.study_ids);
        let back = ingest_jsonl(&to_jsonl(&ds).unwrap(), None, here).unwrap();
        prop_assert_eq!(&back.bias, &ds.bias);
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert_eq!(&back.study_ids, &ds.study_ids);
    }

    #[test]
    fn screening_partitions_columns(rows in bias_rows(30, 8), threshold in 0.3f64..=1.0) {
        let bias = BiasMatrix::with_default_names(rows).unwrap();
        match screen_correlated(&bias, threshold) {
            Ok((screened, report)) => {
                prop_assert!(report.kept.len() >= 2);
                prop_assert!(report.kept.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(screened.d(), report.kept.len());
                let mut all: Vec<usize> = report.kept.iter().copied().chain(report.dropped.iter().map(|p| p.dropped)).collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..bias.d()).collect::<Vec<_>>());
                for p in &report.dropped {
                    prop_assert!(p.kept <= p.dropped);
                    prop_assert!(p.correlation.abs() >= threshold);
                }
            }
            Err(McmaError::AllDropped { kept }) => prop_assert!(kept < 2),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn posterior_mean_is_affine(
        w in prop::collection::vec(-2.0f64..2.0, 4),
        a in prop::collection::vec(0.0f64..1.0, 4),
        b in prop::collection::vec(0.0f64..1.0, 4),
        sigma2 in 0.01f64..5.0,
    ) {
        let model = FactorModel::new(DMatrix::from_column_slice(4, 1, &w), DVector::from_element(4, 0.5), sigma2).unwrap();
        let z = |x: &[f64]| posterior_mean(&model, x).unwrap()[0];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!((z(&sum) - (z(&a) + z(&b) - z(&[0.0; 4]))).abs() < 1e-9);
    }

    #[test]
    fn synthetic_rows_have_a_high_risk(n in 1usize..200, d in 1usize..12, w_u in 0.0f64..3.0, seed in any::<u64>()) {
        let p = SyntheticParams { n, d, w_u, seed };
        let (ds, truth) = generate_synthetic(&p).unwrap();
        prop_assert!(ds.bias.rows().all(|r| r.contains(&1)));
        prop_assert!(truth.u.iter().all(|u| *u > 0.0 && *u < 1.0));
        prop_assert_eq!(generate_synthetic(&p).unwrap().0, ds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn summaries_are_simplices(seed in 0u64..1000, kind_idx in 0usize..5) {
        let (ds, _) = generate_synthetic(&SyntheticParams { n: 60, d: 5, w_u: 2.0, seed }).unwrap();
        let cfg = PipelineConfig { force: true, check_replications: 10, seed, ..Default::default() };
        let kind = ClassifierKind::ALL[kind_idx];
        for r in [run_basic(&ds, kind, &cfg).unwrap(), run_mcma(&ds, kind, &cfg).unwrap()] {
            prop_assert!(Simplex3::new(r.summary.probs()).is_ok());
            prop_assert_eq!(r.per_rct_probs.len(), 60);
        }
    }
}

#[test]
fn zero_confounders_reduce_to_basic() {
    let (ds, _) = generate_synthetic(&SyntheticParams {
        n: 300,
        d: 6,
        w_u: 2.0,
        seed: 3,
    })
    .unwrap();
    let cfg = PipelineConfig {
        force: true,
        check_replications: 10,
        zero_confounders: true,
        ..Default::default()
    };
    for kind in [
        ClassifierKind::MnLogit,
        ClassifierKind::GaussianNb,
        ClassifierKind::Gbt,
    ] {
        let mcma = run_mcma(&ds, kind, &cfg).unwrap();
        assert_eq!(mcma.screen.as_ref().unwrap().kept.len(), 6);
        let basic = run_basic(&ds, kind, &cfg).unwrap();
        for k in 0..3 {
            assert!(
                (mcma.summary.get(k) - basic.summary.get(k)).abs() < 1e-8,
                "{kind}: {:?} vs {:?}",
                mcma.summary,
                basic.summary
            );
        }
    }
}
