mod common;

use std::path::Path;

use wirehop::baseline::BasicGains;
use wirehop::config::Config;
use wirehop::env::{EnvConfig, Layout};
use wirehop::harness::*;
use wirehop::ppo::checkpoint;
use wirehop::ppo::net::ActorCritic;
use wirehop::rewards::reward_total;
use wirehop::Error;

fn clean(max_steps: u64) -> EnvConfig {
    eval_env_config(&EnvConfig::default(), Layout::Ours1, NoiseMode::Clean, max_steps)
}

#[test]
fn zero_torque_stands_until_the_step_limit() {
    let r = run_episode(&mut ZeroTorque, &clean(10_000), 3, None).unwrap();
    assert_eq!(r.survival_steps, 10_000);
    assert_eq!(r.n_jumps, 0);
    assert_eq!(r.termination, "step_limit");
}

#[test]
fn dumps_are_reproducible_and_replay_through_the_reward() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eval_env_config(&EnvConfig::default(), Layout::Ours1, NoiseMode::Muscle, 400);
    let paths = [dir.path().join("a.jsonl"), dir.path().join("b.jsonl")];
    let results: Vec<_> = paths
        .iter()
        .map(|p| {
            let mut agent = BasicAgent(wirehop::baseline::BasicController::new(BasicGains::default()));
            run_episode(&mut agent, &cfg, 12, Some(p)).unwrap()
        })
        .collect();
    assert_eq!(results[0], results[1]);
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());

    let recs = read_dump(&paths[0]).unwrap();
    assert_eq!(recs.len() as u64, results[0].survival_steps + 1);
    for r in &recs {
        let replay = reward_total(&cfg.reward, &r.reward_inputs);
        assert_eq!(replay.total.to_bits(), r.reward.total.to_bits());
    }
}

fn write_checkpoints(dir: &Path) {
    let mut rng = common::rng(30);
    for (name, layout) in [("o1.bin", Layout::Ours1), ("o2.bin", Layout::Ours2)] {
        let net = ActorCritic::new(layout.obs_dim(), &[8], 0.0, &mut rng);
        checkpoint::save(&net, &dir.join(name)).unwrap();
    }
}

fn write_spec(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("spec.txt");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn comparison_grid_has_recomputable_summaries() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoints(dir.path());
    let spec_path = write_spec(
        dir.path(),
        "ours1_checkpoint = o1.bin\nours2_checkpoint = o2.bin\nseeds = 4, 2, 9\ntrials = 3\nmax_steps = 150\n",
    );
    let spec = ExperimentSpec::from_file(&spec_path).unwrap();
    let rows = run_comparison(&spec, &EnvConfig::default(), &BasicGains::default()).unwrap();
    assert_eq!(rows.len(), 3 * 2 * (3 + 1));
    let csv = dir.path().join("out.csv");
    write_csv(&csv, &rows).unwrap();
    let back = read_csv(&csv).unwrap();
    assert_eq!(back, rows);
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with(
        "schema_version,row_type,controller,noise,seed,survival_steps,n_jumps,termination,mean_reward,survival_mean,survival_var\n"
    ));

    for cell in rows.chunks(4) {
        let trials = &cell[..3];
        let summary = &cell[3];
        assert_eq!(summary.row_type, "summary");
        let seeds: Vec<_> = trials.iter().map(|t| t.seed.unwrap()).collect();
        assert_eq!(seeds, vec![2, 4, 9]);
        let xs: Vec<f64> = trials.iter().map(|t| t.survival_steps.unwrap() as f64).collect();
        let mean = xs.iter().sum::<f64>() / 3.0;
        assert_eq!(summary.survival_mean, Some(mean));
        assert!((summary.survival_var.unwrap() - common::sample_var(&xs)).abs() < 1e-9);
        for t in trials {
            assert!(t.survival_steps.unwrap() <= 150);
            assert_eq!((&t.controller, &t.noise), (&summary.controller, &summary.noise));
        }
    }

    let net = checkpoint::load(&dir.path().join("o2.bin")).unwrap();
    let again = || {
        run_cell(ControllerKind::Ours2, NoiseMode::Muscle, &EnvConfig::default(), &BasicGains::default(), Some(&net), &[2, 4, 9], 150, None)
            .unwrap()
    };
    assert_eq!(again(), again());
}

#[test]
fn spec_faults_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoints(dir.path());
    let bad_trials = write_spec(dir.path(), "ours1_checkpoint = o1.bin\nours2_checkpoint = o2.bin\nseeds = 1, 2\ntrials = 5\n");
    assert!(ExperimentSpec::from_file(&bad_trials).is_err());

    let missing = write_spec(dir.path(), "ours1_checkpoint = nope.bin\nours2_checkpoint = o2.bin\nseeds = 1\n");
    let spec = ExperimentSpec::from_file(&missing).unwrap();
    let err = run_comparison(&spec, &EnvConfig::default(), &BasicGains::default()).unwrap_err();
    assert!(matches!(err, Error::MissingCheckpoint(_)));

    let swapped = write_spec(dir.path(), "ours1_checkpoint = o2.bin\nours2_checkpoint = o1.bin\nseeds = 1\nmax_steps = 10\n");
    let spec = ExperimentSpec::from_file(&swapped).unwrap();
    assert!(matches!(
        run_comparison(&spec, &EnvConfig::default(), &BasicGains::default()),
        Err(Error::Checkpoint(_))
    ));

    let typo = write_spec(dir.path(), "ours1_checkpoint = o1.bin\nours2_checkpoint = o2.bin\nseeds = 1\nmax_step = 10\n");
    assert!(ExperimentSpec::from_file(&typo).is_err());
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let mut cfg = Config::default();
    cfg.basic.k_energy = 12.5;
    cfg.ppo.total_steps = 200_000;
    cfg.env.layout = Layout::Ours2;
    let text = cfg.to_kv_string();
    assert_eq!(Config::parse(&text).unwrap(), cfg);
    assert!(Config::parse("basic.k_enrgy = 3\n").is_err());
    assert!(Config::parse("ppo.batch_size = 1000\n").is_err());
}

#[test]
fn tuning_returns_the_best_candidate() {
    let grid = TuningGrid {
        k_energy: vec![40.0],
        e_target: vec![80.0],
        q_s_flight: vec![0.35],
        kp_slide: vec![300.0, 800.0],
        kp_posture: vec![400.0],
    };
    let (gains, r) = tune_basic(&grid, &BasicGains::default(), &EnvConfig::default(), 0, 1_000).unwrap();
    assert_eq!(gains.kp_slide, 300.0);
    assert_eq!(r.survival_steps, 1_000);
}
