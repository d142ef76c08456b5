//! Loop, report and persistence behaviour of the experiment harness.

use crc_core::harness::{
    decision_boundary_grid, emit_report, persist_run, read_records, run_assl, write_grid_csv, Bounds, Checkpoint,
    ExperimentConfig, PhaseTiming, RoundRecord, RunRecord, SCHEMA_VERSION,
};
use crc_core::nn::{init_network, NetworkSpec};

fn small(strategy: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "n = 120\narms = 2\nhidden_widths = 16\nbias = true\nstep_size = 0.02\nmax_steps = 60\n\
         trace_every = 20\nquery_size = 2\nnum_acquisitions = 2\nstrategy = {strategy}\n{extra}"
    ))
    .unwrap()
}

fn record(strategy: &str, accs: &[(usize, f64)]) -> RunRecord {
    let round = |(k, &(labeled_size, test_acc)): (usize, &(usize, f64))| RoundRecord {
        round: k,
        labeled_size,
        network_seed: 0,
        steps: 0,
        train_loss: 0.0,
        train_acc: 1.0,
        test_acc,
        test_loss: 1.0 - test_acc,
        epochs_to_convergence: 0,
        labeled_lambda_min: None,
        selected: Vec::new(),
        scores: Vec::new(),
        selected_lambda_min: None,
        hidden_label_reads: 0,
        timing: PhaseTiming::default(),
    };
    RunRecord {
        schema_version: SCHEMA_VERSION,
        config_hash: String::new(),
        strategy: strategy.into(),
        seed: 0,
        transfer_reseed: false,
        initial_labeled: Vec::new(),
        rounds: accs.iter().enumerate().map(round).collect(),
    }
}

#[test]
fn report_aggregates_mean_and_population_std() {
    let recs = [record("crc", &[(4, 0.8)]), record("crc", &[(4, 0.9)]), record("random", &[(4, 0.5)])];
    let mut buf = Vec::new();
    let rows = emit_report(&recs, &mut buf).unwrap();
    assert_eq!(rows.len(), 2);
    assert!((rows[0].mean_test_acc - 0.85).abs() < 1e-12);
    assert!((rows[0].std_test_acc - 0.05).abs() < 1e-12);
    assert_eq!(rows[1].std_test_acc, 0.0);
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("strategy,labeled_size,runs,mean_test_acc,std_test_acc,mean_test_loss\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn empty_report_is_an_error() {
    assert!(emit_report(&[], Vec::new()).is_err());
}

#[test]
fn grid_has_r_squared_rows_and_valid_probabilities() {
    let spec = NetworkSpec::new(2, vec![8], 3).with_bias(true);
    let params = init_network(&spec, 1).unwrap();
    let bounds: Bounds = "-1,1,0,2".parse().unwrap();
    let grid = decision_boundary_grid(&params, &spec, bounds, 5).unwrap();
    assert_eq!(grid.len(), 25);
    assert_eq!((grid[0].x, grid[0].y), (-1.0, 0.0));
    assert_eq!((grid[1].x, grid[1].y), (-0.5, 0.0));
    assert_eq!((grid[24].x, grid[24].y), (1.0, 2.0));
    assert!(grid.iter().all(|g| g.class < 3 && g.max_softmax >= 1.0 / 3.0 && g.max_softmax <= 1.0));
    let mut buf = Vec::new();
    write_grid_csv(&grid, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 26);
    assert!("1,0,0,1".parse::<Bounds>().is_err());
    assert!(decision_boundary_grid(&params, &spec, bounds, 1).is_err());
}

#[test]
fn runs_are_reproducible_and_grow_the_labeled_set() {
    let cfg = small("crc", "");
    let a = run_assl(&cfg, 3).unwrap();
    let b = run_assl(&cfg, 3).unwrap();
    assert_eq!(a.record.without_timing(), b.record.without_timing());
    let sizes: Vec<usize> = a.record.rounds.iter().map(|r| r.labeled_size).collect();
    assert_eq!(sizes, vec![2, 4, 6]);
    assert_eq!(a.pool.labeled().len(), 6);
    assert!(a.record.final_round().selected.is_empty());
    assert_eq!(a.traces.len(), 3);
}

#[test]
fn zero_acquisitions_trains_once() {
    let cfg = small("random", "");
    let cfg = ExperimentConfig { num_acquisitions: 0, ..cfg };
    let out = run_assl(&cfg, 1).unwrap();
    assert_eq!(out.record.rounds.len(), 1);
    assert!(out.record.rounds[0].selected.is_empty());
}

#[test]
fn strategies_share_the_initial_pool() {
    let a = run_assl(&small("crc", ""), 7).unwrap();
    let b = run_assl(&small("random", ""), 7).unwrap();
    let c = run_assl(&small("entropy", ""), 7).unwrap();
    assert_eq!(a.record.initial_labeled, b.record.initial_labeled);
    assert_eq!(a.record.initial_labeled, c.record.initial_labeled);
    assert_eq!(a.record.rounds[0].test_acc, b.record.rounds[0].test_acc);
}

#[test]
fn persisted_runs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_assl(&small("confidence", ""), 2).unwrap();
    let path = persist_run(&out, dir.path(), true).unwrap();
    assert!(path.ends_with("confidence_seed2.json"));
    assert!(dir.path().join("confidence_seed2_round2.csv").exists());
    let recs = read_records(dir.path()).unwrap();
    assert_eq!(recs, vec![out.record.clone()]);
    let ck = Checkpoint::read(&dir.path().join("confidence_seed2_model.json")).unwrap();
    assert_eq!(ck, out.checkpoint);
    let trace = std::fs::read_to_string(dir.path().join("confidence_seed2_round0.csv")).unwrap();
    assert!(trace.starts_with("step,loss,lambda_min,xi,eps,residual,train_acc,test_acc,grad_sq,test_loss,identity_residual\n"));
}

#[test]
fn transfer_reseed_changes_the_reported_model_only() {
    let plain = run_assl(&small("crc", ""), 5).unwrap();
    let reseeded = run_assl(&small("crc", "transfer_reseed = true"), 5).unwrap();
    let sel = |o: &crc_core::harness::RunOutput| o.record.rounds.iter().map(|r| r.selected.clone()).collect::<Vec<_>>();
    assert_eq!(sel(&plain), sel(&reseeded));
    assert_ne!(plain.record.rounds[0].network_seed, reseeded.record.rounds[0].network_seed);
}
