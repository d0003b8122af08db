use std::f64::consts::TAU;

use mdfeat_bench::config::{ExperimentConfig, Learner, Task};
use mdfeat_bench::dataset::{generate_split, zone_quotas, Dataset, DatasetHeader, Sample, Setup, Split};
use mdfeat_bench::experiment::{
    classification_rate, confusion, evaluate_cell, read_predictions, rmse, write_predictions, PredictionRow,
};
use mdfeat_bench::selection::{run_size_selection, Replay, EXAMPLE1};
use mdfeat_bench::zones::ZoneLayout;
use mdfeat_core::channel::Location;
use mdfeat_core::features::Scheme;
use mdfeat_core::select::SelectionConfig;
use mdfeat_core::PdpVector;
use mdfeat_nn::Branches;
use proptest::prelude::*;

fn small(d_train: usize, d_test: usize) -> ExperimentConfig {
    ExperimentConfig { d_train, d_test, repeats: 1, calibration_targets: 2000, ..Default::default() }
}

proptest! {
    #[test]
    fn rotation_by_one_sector_moves_one_zone(
        n_a in 1usize..12, n_r in 1usize..5, frac in 0.01f64..0.99, r in 0.01f64..9.99, k in 0usize..12,
    ) {
        let l = ZoneLayout::new(n_a, n_r, 10.0).unwrap();
        let width = TAU / n_a as f64;
        let theta = (k % n_a) as f64 * width + frac * width;
        let p = Location::new(r * theta.cos(), r * theta.sin(), 0.3);
        let q = Location::new(r * (theta + width).cos(), r * (theta + width).sin(), -0.3);
        let (a, b) = (l.split(l.zone_of(&p).unwrap()), l.split(l.zone_of(&q).unwrap()));
        prop_assert_eq!(b.0, (a.0 + 1) % n_a);
        prop_assert_eq!(a.1, b.1);
        prop_assert_eq!(a.1, ((r / 10.0) * n_r as f64) as usize);
    }

    #[test]
    fn zones_cover_the_cylinder(n_a in 1usize..12, n_r in 1usize..5, x in -7.0f64..7.0, y in -7.0f64..7.0) {
        let l = ZoneLayout::new(n_a, n_r, 10.0).unwrap();
        prop_assert!(l.zone_of(&Location::new(x, y, 0.0)).unwrap() < l.num_zones());
    }

    #[test]
    fn quotas_are_balanced(count in 0usize..5000, zones in 1usize..40) {
        let q = zone_quotas(count, zones);
        prop_assert_eq!(q.iter().sum::<usize>(), count);
        prop_assert!(q.iter().all(|&n| n.abs_diff(count / zones) <= 1));
    }
}

#[test]
fn dataset_is_balanced_labelled_and_reproducible() {
    let cfg = small(800, 16);
    let setup = Setup::new(&cfg, 15.0).unwrap();
    let a = generate_split(&setup, Split::Train, 800, 3).unwrap();
    let mut counts = vec![0; 8];
    for s in &a.samples {
        counts[s.zone] += 1;
        let p = Location::new(s.location[0], s.location[1], s.location[2]);
        assert_eq!(setup.layout.zone_of(&p).unwrap(), s.zone);
        assert!(setup.geometry.is_target_location(&p));
        assert_eq!(s.pdps.len(), 12);
        assert!(s.pdps.iter().all(|p| p.len() == 100));
    }
    assert_eq!(counts, vec![100; 8]);

    let mut bytes = Vec::new();
    a.write(&mut bytes).unwrap();
    let mut again = Vec::new();
    generate_split(&setup, Split::Train, 800, 3).unwrap().write(&mut again).unwrap();
    assert_eq!(bytes, again);
    assert!(Dataset::read(bytes.as_slice()).unwrap() == a, "container round trip");

    let test = generate_split(&setup, Split::Test, 800, 3).unwrap();
    assert!(a.samples.iter().zip(&test.samples).all(|(x, y)| x.location != y.location));
}

#[test]
fn corrupted_containers_are_rejected() {
    let cfg = small(16, 16);
    let ds = generate_split(&Setup::new(&cfg, 15.0).unwrap(), Split::Test, 16, 1).unwrap();
    let mut bytes = Vec::new();
    ds.write(&mut bytes).unwrap();
    assert!(Dataset::read(&bytes[..bytes.len() - 8]).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(Dataset::read(longer.as_slice()).is_err());
    bytes[0] ^= 1;
    assert!(Dataset::read(bytes.as_slice()).is_err());
}

#[test]
fn learner_seed_leaves_data_alone() {
    let a = small(40, 16);
    let b = ExperimentConfig { model_seed: 99, ..a.clone() };
    let (sa, _) = mdfeat_bench::experiment::repeat_seeds(&a, 0);
    let (sb, mb) = mdfeat_bench::experiment::repeat_seeds(&b, 0);
    assert_eq!(sa, sb);
    assert_ne!(mdfeat_bench::experiment::repeat_seeds(&a, 0).1, mb);
}

/// Two zones, each with a single strong bin at a zone-specific position.
fn two_zone_fixture(count: usize, seed: u64) -> Dataset {
    let cfg = ExperimentConfig { n_angular: 2, n_radial: 1, ..small(count, count) };
    let setup = Setup::new(&cfg, 15.0).unwrap();
    let samples = (0..count)
        .map(|i| {
            let zone = i % 2;
            let pdps = (0..12)
                .map(|m| {
                    let mut e = vec![1e-3 * (1 + (i * 7 + m * 3 + seed as usize) % 5) as f64; 100];
                    e[10 + 50 * zone + m] = 1.0 + 0.1 * ((i + m) % 3) as f64;
                    PdpVector::new(e).unwrap()
                })
                .collect();
            let y = if zone == 0 { 5.0 } else { -5.0 };
            Sample { id: i as u64, zone, location: [0.0, y, 0.0], pdps }
        })
        .collect();
    let header = DatasetHeader { split: Split::Train, seed, setup, sensors: 12, bins: 100, count };
    Dataset { header, samples }
}

#[test]
fn knn_separates_a_trivial_fixture() {
    let cfg = ExperimentConfig { n_angular: 2, n_radial: 1, learner: Learner::Knn, ..small(60, 20) };
    let (train, test) = (two_zone_fixture(60, 1), two_zone_fixture(20, 2));
    let out = evaluate_cell(&cfg, &train, &test, Branches::ALL, 0).unwrap();
    assert_eq!(out.metrics.classification_rate, 1.0);
    assert_eq!(out.metrics.confusion, vec![vec![10, 0], vec![0, 10]]);
}

#[test]
fn metrics_follow_from_the_predictions_file() {
    let cfg = ExperimentConfig {
        learner: Learner::Fcl,
        training: mdfeat_nn::TrainConfig { epochs: 3, ..Default::default() },
        ..small(80, 40)
    };
    let setup = Setup::new(&cfg, 15.0).unwrap();
    let (train, test) =
        (generate_split(&setup, Split::Train, 80, 5).unwrap(), generate_split(&setup, Split::Test, 40, 5).unwrap());
    let out = evaluate_cell(&cfg, &train, &test, Branches::ALL, 0).unwrap();
    let mut csv = Vec::new();
    write_predictions(&mut csv, &out.predictions).unwrap();
    let rows = read_predictions(std::str::from_utf8(&csv).unwrap()).unwrap();
    assert_eq!(classification_rate(&rows), out.metrics.classification_rate);
    let conf = confusion(&rows, 8);
    assert_eq!(conf, out.metrics.confusion);
    for (z, row) in conf.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), test.samples.iter().filter(|s| s.zone == z).count());
    }
    assert_eq!(conf.iter().flatten().sum::<usize>(), 40);
}

#[test]
fn rmse_is_root_mean_squared_position_error() {
    let row = |loc: [f64; 3], est: [f64; 3]| PredictionRow {
        id: 0,
        zone: 0,
        predicted: 0,
        location: loc,
        estimate: Some(est),
    };
    // squared errors 9 + 16 = 25 and 1 + 0 + 4 = 5, mean 15
    let rows = vec![row([0.0, 0.0, 0.0], [3.0, 4.0, 0.0]), row([1.0, 1.0, 1.0], [2.0, 1.0, -1.0])];
    assert!((rmse(&rows).unwrap() - 15f64.sqrt()).abs() < 1e-15);
    let mut csv = Vec::new();
    write_predictions(&mut csv, &rows).unwrap();
    assert_eq!(read_predictions(std::str::from_utf8(&csv).unwrap()).unwrap(), rows);
}

#[test]
fn regression_head_reports_rmse() {
    let cfg = ExperimentConfig {
        learner: Learner::Fcl,
        task: Task::Regression,
        training: mdfeat_nn::TrainConfig { epochs: 20, ..Default::default() },
        ..small(200, 40)
    };
    let setup = Setup::new(&cfg, 15.0).unwrap();
    let (train, test) =
        (generate_split(&setup, Split::Train, 200, 8).unwrap(), generate_split(&setup, Split::Test, 40, 8).unwrap());
    let out = evaluate_cell(&cfg, &train, &test, Branches::ALL, 0).unwrap();
    let e = out.metrics.rmse.unwrap();
    // a constant guess at the centre is off by about the rms radius, ~7 m
    assert!(e.is_finite() && e < 7.5, "{e}");
    assert!(out.predictions.iter().all(|p| p.estimate.is_some() && p.predicted < 8));
}

#[test]
fn single_candidate_range_selects_itself() {
    let cfg = small(400, 16);
    let train = generate_split(&Setup::new(&cfg, 15.0).unwrap(), Split::Train, 400, 2).unwrap();
    for f in [4, 7] {
        let sel = SelectionConfig { f_min: f, f_max: f, weight: 0.8, neighbors: 30 };
        assert_eq!(run_size_selection(&train, &sel).unwrap().f_star, Some(f));
    }
    let default = cfg.selection();
    assert_eq!((default.f_min, default.f_max, default.neighbors), (4, 10, 30));
    let rep = run_size_selection(&train, &default).unwrap();
    assert_eq!(rep.rows.len(), 7);
    assert!((4..=10).contains(&rep.f_star.unwrap()));
    // 50 samples per zone cannot support u = 60
    let sel = SelectionConfig { neighbors: 60, ..default };
    assert!(run_size_selection(&train, &sel).is_err());
}

#[test]
fn replay_selects_five() {
    let rep = Replay::from_toml(EXAMPLE1).unwrap().run().unwrap();
    assert_eq!(rep.f_star, Some(5));
    let mut bad = EXAMPLE1.replace("kl = [0.921, 0.990, 1.0, 0.979, 0.952, 0.926]", "kl = [1.0]");
    assert!(Replay::from_toml(&bad).unwrap().run().is_err());
    bad.push_str("extra = 1\n");
    assert!(Replay::from_toml(&bad).is_err());
}

#[test]
fn schemes_share_the_data() {
    let cfg = ExperimentConfig { learner: Learner::Knn, ..small(80, 24) };
    let setup = Setup::new(&cfg, 15.0).unwrap();
    let (train, test) =
        (generate_split(&setup, Split::Train, 80, 4).unwrap(), generate_split(&setup, Split::Test, 24, 4).unwrap());
    let first =
        evaluate_cell(&ExperimentConfig { scheme: Scheme::FirstF, ..cfg.clone() }, &train, &test, Branches::ALL, 0)
            .unwrap();
    let random =
        evaluate_cell(&ExperimentConfig { scheme: Scheme::RandomF, ..cfg.clone() }, &train, &test, Branches::ALL, 0)
            .unwrap();
    assert_eq!(first.metrics.d_test, random.metrics.d_test);
    let again =
        evaluate_cell(&ExperimentConfig { scheme: Scheme::RandomF, ..cfg }, &train, &test, Branches::ALL, 0).unwrap();
    assert_eq!(random.predictions, again.predictions);
}

#[test]
fn ablation_reports_every_variant_on_shared_splits() {
    let mut cfg = small(32, 16);
    cfg.repeats = 2;
    cfg.training = mdfeat_nn::TrainConfig { epochs: 1, batch_size: 16, ..Default::default() };
    let rep = mdfeat_bench::ablation(&cfg, 15.0, &mdfeat_bench::ablation::VARIANTS).unwrap();
    let labels: Vec<&str> = rep.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(labels, ["DP", "SI", "DP+SI", "SI+SA", "DP+SI+SA"]);
    assert!(rep.rows.iter().all(|r| r.rates.len() == 2 && (0.0..=1.0).contains(&r.mean)));
    assert_eq!(rep.feature_sizes, vec![5, 5]);
    assert_eq!(
        mdfeat_bench::ablation(&cfg, 15.0, &mdfeat_bench::ablation::VARIANTS[..1]).unwrap().rows[0],
        rep.rows[0]
    );
}
