use hfpinn::config::TrainConfig;
use hfpinn::geometry::BoundaryMode;
use hfpinn::oracle::{build_grid, export_supervision, solve, BoundarySet, SolverParams};
use hfpinn::trainer::{checkpoint_load, checkpoint_save, predict, train};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coarse_supervision(cfg: &TrainConfig) -> hfpinn::sampling::SampleSet {
    let grid = build_grid(&cfg.geometry, 1e-3).unwrap();
    let bc = BoundarySet::monoblock(cfg.mode, cfg.geometry.convective);
    let series = solve(&grid, &bc, 2.0, SolverParams { dt: 0.05, ..Default::default() }, 30.0, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    export_supervision(&grid, &series, &cfg.supervision_budget(), &mut rng).unwrap()
}

#[test]
fn smoke_run_halves_total_loss_within_fifty_epochs() {
    let mut cfg = TrainConfig::desk(BoundaryMode::Constant);
    cfg.train.epochs = 200;
    cfg.train.log_every = 0;
    let sup = coarse_supervision(&cfg);
    let out = train(&cfg, &sup).unwrap();
    assert_eq!(out.log.len(), 200);
    let first = out.log[0].total;
    let at_50 = out.log[49].total;
    eprintln!("total loss: epoch 0 {first:.3e}, epoch 49 {at_50:.3e}");
    assert!(at_50 <= 0.5 * first, "{first:e} -> {at_50:e}");
}

#[test]
fn fixed_seed_reproduces_loss_curve_and_checkpoint() {
    let mut cfg = TrainConfig::desk(BoundaryMode::Gaussian);
    cfg.network.widths = vec![4, 16, 16, 1];
    cfg.train.epochs = 20;
    cfg.train.log_every = 0;
    let sup = coarse_supervision(&cfg);
    let a = train(&cfg, &sup).unwrap();
    let b = train(&cfg, &sup).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.ensemble, b.ensemble);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    checkpoint_save(&a.ensemble, &path).unwrap();
    let back = checkpoint_load(&path).unwrap();
    assert_eq!(back, a.ensemble);
    let pts: Vec<_> = sup.points.iter().map(|p| (p.pos, p.t)).collect();
    assert_eq!(
        predict(&back, &cfg.geometry, &pts).unwrap().values,
        predict(&a.ensemble, &cfg.geometry, &pts).unwrap().values
    );
}
