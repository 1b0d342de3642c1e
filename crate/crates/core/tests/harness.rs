use std::fs;
use std::path::Path;

use ppt_core::envs::{make_env, MazeConfig, MazeGeometry, TaskKind};
use ppt_core::harness::{
    load_agent, prior_for, run_matrix, train, Agent, EpisodeOptions, RunConfig, RunManifest, Runner, Variant,
};
use ppt_core::harness::rollout::action_dim;
use ppt_core::PptError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(task: TaskKind, variant: Variant) -> RunConfig {
    let mut cfg = RunConfig::defaults(task, variant);
    cfg.ppo.episodes = 1;
    cfg.ppo.hidden = vec![16, 16];
    cfg.num_envs = 2;
    cfg.eval.episodes = 2;
    cfg.eval.export_episodes = 1;
    cfg
}

fn same_file(a: &Path, b: &Path) -> bool {
    fs::read(a).unwrap() == fs::read(b).unwrap()
}

#[test]
fn same_seed_same_artifacts() {
    let cfg = tiny(TaskKind::Pushing, Variant::PPT);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ma = train(&cfg, 3, &a).unwrap();
    let mb = train(&cfg, 3, &b).unwrap();
    assert_eq!(ma, mb);
    for f in ["manifest.json", "curve.csv", "ppo_stats.csv", "checkpoints/final.ckpt"] {
        assert!(same_file(&a.join(f), &b.join(f)), "{f} differs");
    }
    assert_eq!(RunManifest::load(&a.join("manifest.json")).unwrap(), ma);
}

#[test]
fn different_seeds_differ() {
    let cfg = tiny(TaskKind::Pushing, Variant::PPT);
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, 1, &dir.path().join("a")).unwrap();
    train(&cfg, 2, &dir.path().join("b")).unwrap();
    assert!(!same_file(&dir.path().join("a/checkpoints/final.ckpt"), &dir.path().join("b/checkpoints/final.ckpt")));
}

#[test]
fn gated_equals_ungated_when_tank_never_binds() {
    let mut ppt = tiny(TaskKind::Pushing, Variant::PPT);
    ppt.env.power_budget = 1e9;
    ppt.tank.e_max = 1e12;
    ppt.tank.e_0 = 1e12;
    let pp = ppt.clone().with_variant(Variant::PP);
    let prior = prior_for(&ppt).unwrap();
    let dim = action_dim(&ppt, prior.as_ref()).unwrap();
    let agent = Agent::new(&ppt, dim, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let run = |cfg: &RunConfig| {
        let runner = Runner::new(cfg, prior.clone()).unwrap();
        let mut env = make_env(&cfg.env).unwrap();
        let mut agent = agent.clone();
        let opts = EpisodeOptions { record: true, ..EpisodeOptions::training() };
        runner.run_episode(env.as_mut(), &mut agent, 11, opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    };
    let (a, b) = (run(&ppt), run(&pp));
    assert!(!a.tank.rows.is_empty() && a.tank.rows.iter().all(|r| r.gamma == 1.0));
    assert_eq!(a.trajectory.len(), b.trajectory.len());
    for (x, y) in a.trajectory.iter().zip(&b.trajectory) {
        assert_eq!((x.x, x.y, x.z, x.yaw, x.body_x, x.body_y), (y.x, y.y, y.z, y.yaw, y.body_x, y.body_y));
    }
    assert_eq!(a.episode_return, b.episode_return);
}

#[test]
fn checkpoint_mismatch_is_reported() {
    let cfg = tiny(TaskKind::Pushing, Variant::PPT);
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, 0, dir.path()).unwrap();
    let ckpt = dir.path().join("checkpoints/final.ckpt");
    let prior = prior_for(&cfg).unwrap();
    assert!(load_agent(&ckpt, &cfg, prior.as_ref()).is_ok());

    let servo = cfg.clone().with_variant(Variant::ST);
    assert!(matches!(load_agent(&ckpt, &servo, None), Err(PptError::Checkpoint(_))));

    let mut wider = cfg.clone();
    wider.primitive.num_basis += 2;
    let wider_prior = prior_for(&wider).unwrap();
    assert!(matches!(
        load_agent(&ckpt, &wider, wider_prior.as_ref()),
        Err(PptError::DimensionMismatch { .. })
    ));

    fs::write(&ckpt, b"not a checkpoint").unwrap();
    assert!(load_agent(&ckpt, &cfg, prior.as_ref()).is_err());
}

#[test]
fn impossible_maze_is_infeasible() {
    let cfg = MazeConfig {
        length: [0.1, 0.1],
        ..MazeConfig::default()
    };
    cfg.validate().unwrap();
    assert!(matches!(MazeGeometry::generate(&cfg, 0), Err(PptError::InfeasibleGeometry { .. })));
}

#[test]
fn matrix_output_contract() {
    let cfg = tiny(TaskKind::Pushing, Variant::PPT);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let r = run_matrix(&cfg, &Variant::ALL, &[0], &a).unwrap();
    run_matrix(&cfg, &Variant::ALL, &[0], &b).unwrap();
    assert_eq!(r.manifest.curves.len(), 4);
    assert!(r.manifest.cells.iter().all(|c| c.ok));
    let mut files: Vec<String> = r.manifest.curves.clone();
    files.extend(["table.csv".into(), "table_se.csv".into(), "matrix.json".into()]);
    for f in &files {
        assert!(same_file(&a.join(f), &b.join(f)), "{f} differs");
    }
    let table = fs::read_to_string(a.join("table.csv")).unwrap();
    let header = table.lines().next().unwrap();
    for v in Variant::ALL {
        assert!(header.contains(&v.to_string()), "{header}");
    }
    for cell in &r.manifest.cells {
        assert!(a.join(&cell.run_dir).join("manifest.json").is_file());
    }
}
