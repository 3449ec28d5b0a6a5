//! Training loop, batched prediction and checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::{MonoblockGeometry, Point3};
use crate::losses::{compute_bundle, LossContext, LossKind};
use crate::metrics::MetricReport;
use crate::network::{Activation, Ensemble, SubNetwork};
use crate::optimizer::{adam_step, config_combine, cosine_lr, sum_gradients, AdamState, LrSchedule};
use crate::sampling::{
    perturb_region, sample_collocation, Category, NormalizationSpec, SampleSet, TrustRegionState,
};

pub const CHECKPOINT_VERSION: u32 = 1;

const PREDICT_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub values: [f64; 8],
    pub total: f64,
    pub lr: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last update.
    pub ensemble: Ensemble,
    /// Parameters with the lowest total loss seen during training.
    pub best: Ensemble,
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub train_seconds: f64,
}

/// Summary written next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_log: PathBuf,
    pub checkpoint: PathBuf,
    pub epochs: usize,
    /// Lowest-total-loss parameters, saved alongside the final ones.
    pub best_checkpoint: PathBuf,
    pub best_epoch: Option<usize>,
    pub best_total: Option<f64>,
    pub train_seconds: f64,
    pub metrics: Option<MetricReport>,
}

/// The untrained ensemble `train` starts from.
pub fn initial_ensemble(cfg: &TrainConfig) -> Result<Ensemble> {
    let norm = NormalizationSpec::for_domain(&cfg.geometry, cfg.sampling.t_range)?;
    Ensemble::init(&cfg.network, norm, cfg.train.use_multidomain, cfg.seed)
}

/// Draws about `size` collocation points stratified by category so every
/// loss keeps at least one point. Supervision points are always kept.
fn minibatch(set: &SampleSet, size: usize, rng: &mut ChaCha8Rng) -> SampleSet {
    let pool = set.points.iter().filter(|p| p.category != Category::Supervision).count();
    if size >= pool {
        return set.clone();
    }
    let mut points = Vec::with_capacity(size + set.count(Category::Supervision));
    for cat in Category::ALL {
        let members: Vec<_> = set.of(cat).copied().collect();
        if members.is_empty() {
            continue;
        }
        let take = if cat == Category::Supervision {
            members.len()
        } else {
            ((size * members.len()).div_ceil(pool)).clamp(1, members.len())
        };
        if take == members.len() {
            points.extend(members);
        } else {
            points.extend(sample_indices(rng, members.len(), take).into_iter().map(|i| members[i]));
        }
    }
    SampleSet { points }
}

/// Runs the full training loop.
///
/// Each epoch perturbs the collocation set (when region optimization is
/// on), evaluates the eight weighted losses, combines their gradients and
/// takes one Adam step. The combined gradient feeds the trust-region width.
pub fn train(cfg: &TrainConfig, supervision: &SampleSet) -> Result<TrainOutcome> {
    train_observed(cfg, supervision, |_, _| {})
}

/// [`train`] calling `observe(epoch, ensemble)` before every update.
pub fn train_observed<F>(cfg: &TrainConfig, supervision: &SampleSet, mut observe: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &Ensemble),
{
    cfg.validate()?;
    let settings = &cfg.train;
    let use_data = settings.use_data_loss && cfg.weights.get(LossKind::Data) > 0.0;
    if use_data && supervision.count(Category::Supervision) == 0 {
        return Err(Error::EmptySupervision);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ensemble = initial_ensemble(cfg)?;
    let norm = ensemble.norm;
    let ctx = LossContext { geometry: cfg.geometry, mode: cfg.mode, t_init: cfg.data.oracle.t_init };

    let mut base = sample_collocation(
        &cfg.geometry,
        &cfg.sampling.budget,
        cfg.sampling.t_range,
        cfg.sampling.top_bias_fraction,
        &mut rng,
    )?;
    if use_data {
        base.extend(SampleSet { points: supervision.of(Category::Supervision).copied().collect() });
    }

    let mut region = TrustRegionState::new(&cfg.sampling.trust_region);
    let mut params = ensemble.params_flat();
    let mut adam = AdamState::new(params.len(), &cfg.optim);
    let sched = LrSchedule { lr_max: cfg.optim.lr_max, lr_min: cfg.optim.lr_min, t_max: settings.epochs };
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut log = Vec::with_capacity(settings.epochs);
    let mut current = base.clone();

    for epoch in 0..settings.epochs {
        if settings.use_region_opt && epoch % settings.region_every == 0 {
            current = perturb_region(&base, &region, &cfg.geometry, &norm, &mut rng);
        }
        let batch = match settings.batch_size {
            Some(size) => minibatch(&current, size, &mut rng),
            None => current.clone(),
        };
        observe(epoch, &ensemble);
        let bundle = compute_bundle(&ensemble, &ctx, &batch, use_data)?;
        let total = bundle.total(&cfg.weights);
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, breakdown: bundle.breakdown() });
        }
        let lr = cosine_lr(epoch, &sched);
        log.push(EpochRecord { epoch, values: bundle.values, total, lr, sigma: region.sigma });
        if best.as_ref().is_none_or(|(_, b, _)| total < *b) {
            best = Some((epoch, total, params.clone()));
        }
        if let Some(every) = std::num::NonZeroUsize::new(settings.log_every) {
            if epoch % every.get() == 0 {
                log::info!("epoch {epoch} total {total:.4e} lr {lr:.3e} sigma {:.3e}", region.sigma);
                log::debug!("{}", bundle.breakdown());
            }
        }

        let grads = bundle.weighted_grads(&cfg.weights);
        let step = if cfg.optim.config {
            match config_combine(&grads) {
                Ok(c) => c.grad,
                Err(Error::AllZeroGradients) => sum_gradients(&grads),
                Err(e) => return Err(e),
            }
        } else {
            sum_gradients(&grads)
        };
        if settings.use_region_opt {
            region.update(&step)?;
        }
        adam_step(&mut params, &step, &mut adam, lr)?;
        ensemble.set_params_flat(&params);
    }

    let best_epoch = best.as_ref().map(|(e, _, _)| *e);
    let mut best_ens = ensemble.clone();
    if let Some((_, _, p)) = best {
        best_ens.set_params_flat(&p);
    }
    Ok(TrainOutcome { ensemble, best: best_ens, log, best_epoch, train_seconds: start.elapsed().as_secs_f64() })
}

pub fn write_loss_log<W: Write>(log: &[EpochRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8", "total", "lr", "sigma_t"])?;
    for r in log {
        let mut row = vec![r.epoch.to_string()];
        row.extend(r.values.iter().map(|v| format!("{v:?}")));
        row.extend([r.total, r.lr, r.sigma].iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub seconds: f64,
}

/// Temperatures at `(position, time)` pairs, each evaluated by the network
/// that owns the point's material.
pub fn predict(ens: &Ensemble, g: &MonoblockGeometry, points: &[(Point3, f64)]) -> Result<Prediction> {
    let start = Instant::now();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ens.nets.len()];
    for (i, (p, _)) in points.iter().enumerate() {
        groups[ens.net_for_point(g, *p)?].push(i);
    }
    let mut values = vec![0.0; points.len()];
    for (net, idx) in ens.nets.iter().zip(&groups) {
        for chunk in idx.chunks(PREDICT_CHUNK) {
            let inputs: Vec<[f64; 4]> = chunk.iter().map(|&i| ens.norm.normalize(points[i].0, points[i].1)).collect();
            let out = net.predict_normalized(&inputs);
            for (&i, v) in chunk.iter().zip(out) {
                values[i] = v;
            }
        }
    }
    Ok(Prediction { values, seconds: start.elapsed().as_secs_f64() })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredNet {
    material: Option<crate::geometry::MaterialId>,
    widths: Vec<usize>,
    activation: Activation,
    omega0: f64,
    seed: u64,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredEnsemble {
    format_version: u32,
    norm: NormalizationSpec,
    nets: Vec<StoredNet>,
}

pub fn checkpoint_to_string(ens: &Ensemble) -> String {
    let stored = StoredEnsemble {
        format_version: CHECKPOINT_VERSION,
        norm: ens.norm,
        nets: ens
            .nets
            .iter()
            .map(|n| StoredNet {
                material: n.material,
                widths: n.widths.clone(),
                activation: n.activation,
                omega0: n.omega0,
                seed: n.seed,
                params: n.params.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&stored).expect("checkpoint serializes")
}

pub fn checkpoint_from_str(text: &str) -> Result<Ensemble> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptFile("missing format_version".into()))?;
    if found != CHECKPOINT_VERSION as u64 {
        return Err(Error::VersionMismatch { found: found as u32, expected: CHECKPOINT_VERSION });
    }
    let stored: StoredEnsemble = serde_json::from_value(value).map_err(|e| Error::CorruptFile(e.to_string()))?;
    if stored.nets.is_empty() {
        return Err(Error::CorruptFile("no networks".into()));
    }
    let nets = stored
        .nets
        .into_iter()
        .map(|n| SubNetwork::from_parts(n.material, n.widths, n.activation, n.omega0, n.seed, n.params))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::CorruptFile(e.to_string()))?;
    let norm = NormalizationSpec::new(stored.norm.min, stored.norm.max).map_err(|e| Error::CorruptFile(e.to_string()))?;
    Ok(Ensemble { nets, norm })
}

pub fn checkpoint_save(ens: &Ensemble, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(ens))?;
    Ok(())
}

pub fn checkpoint_load(path: &Path) -> Result<Ensemble> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryMode, MaterialId};
    use crate::sampling::SamplingBudget;
    use rand::Rng;

    fn tiny(mode: BoundaryMode) -> TrainConfig {
        let mut cfg = TrainConfig::desk(mode);
        cfg.network.widths = vec![4, 8, 8, 1];
        cfg.sampling.budget = SamplingBudget {
            cucrzr: 6,
            cu: 6,
            w: 6,
            adiabatic: 6,
            top: 6,
            convective: 6,
            iface_cucrzr_cu: 6,
            iface_cu_w: 6,
            initial: 6,
        };
        cfg.train.batch_size = None;
        cfg.train.epochs = 5;
        cfg.train.log_every = 0;
        cfg
    }

    #[test]
    fn zero_epochs_returns_initial_ensemble() {
        let mut cfg = tiny(BoundaryMode::Constant);
        cfg.train.epochs = 0;
        cfg.train.use_data_loss = false;
        let out = train(&cfg, &SampleSet::default()).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.best_epoch, None);
        assert_eq!(out.ensemble, initial_ensemble(&cfg).unwrap());
        assert_eq!(out.best, out.ensemble);
    }

    #[test]
    fn missing_supervision_is_rejected() {
        let cfg = tiny(BoundaryMode::Constant);
        assert!(matches!(train(&cfg, &SampleSet::default()), Err(Error::EmptySupervision)));
    }

    #[test]
    fn deterministic_loss_curve() {
        let mut cfg = tiny(BoundaryMode::Gaussian);
        cfg.train.use_data_loss = false;
        let a = train(&cfg, &SampleSet::default()).unwrap();
        let b = train(&cfg, &SampleSet::default()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.ensemble, b.ensemble);
    }

    #[test]
    fn single_network_ablation() {
        let mut cfg = tiny(BoundaryMode::Constant);
        cfg.train.use_multidomain = false;
        cfg.train.use_data_loss = false;
        let out = train(&cfg, &SampleSet::default()).unwrap();
        assert_eq!(out.ensemble.nets.len(), 1);
    }

    #[test]
    fn overflow_aborts_with_breakdown() {
        let mut cfg = tiny(BoundaryMode::Constant);
        cfg.train.use_data_loss = false;
        cfg.network.output_bias_init = 1e300;
        match train(&cfg, &SampleSet::default()) {
            Err(Error::NonFiniteLoss { epoch: 0, breakdown }) => assert!(breakdown.contains("constant=")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minibatch_keeps_every_category() {
        let g = MonoblockGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = sample_collocation(&g, &SamplingBudget::default(), [0.0, 10.0], 0.0, &mut rng).unwrap();
        let batch = minibatch(&set, 500, &mut rng);
        assert!(batch.len() >= 500 && batch.len() < 520, "{}", batch.len());
        for cat in Category::ALL {
            if cat != Category::Supervision {
                assert!(batch.count(cat) >= 1, "{cat:?}");
            }
        }
    }

    #[test]
    fn predict_routes_by_material() {
        let cfg = tiny(BoundaryMode::Constant);
        let ens = initial_ensemble(&cfg).unwrap();
        let g = cfg.geometry;
        let cu = [0.015 + 0.009, 0.014, 0.006];
        let p = predict(&ens, &g, &[(cu, 2.0)]).unwrap();
        let own = ens.nets[ens.net_for(MaterialId::Cu)].predict_normalized(&[ens.norm.normalize(cu, 2.0)]);
        assert_eq!(p.values, own);
        assert!(matches!(predict(&ens, &g, &[([0.015, 0.014, 0.006], 1.0)]), Err(Error::PointOutsideDomain(_))));
        let again = predict(&ens, &g, &[(cu, 2.0)]).unwrap();
        assert_eq!(again.values, p.values);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut cfg = tiny(BoundaryMode::Constant);
        cfg.network.activation = Activation::Tanh;
        let ens = initial_ensemble(&cfg).unwrap();
        let back = checkpoint_from_str(&checkpoint_to_string(&ens)).unwrap();
        assert_eq!(back, ens);
        let g = cfg.geometry;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        while pts.len() < 100 {
            let p = [rng.gen_range(0.0..g.length_x), rng.gen_range(0.0..g.width_y), rng.gen_range(0.0..g.height_z)];
            if g.classify_material(p).material().is_some() {
                pts.push((p, rng.gen_range(0.0..10.0)));
            }
        }
        assert_eq!(predict(&back, &g, &pts).unwrap().values, predict(&ens, &g, &pts).unwrap().values);
    }

    #[test]
    fn checkpoint_errors() {
        let ens = initial_ensemble(&tiny(BoundaryMode::Constant)).unwrap();
        let text = checkpoint_to_string(&ens);
        assert!(matches!(checkpoint_from_str(&text[..text.len() / 2]), Err(Error::CorruptFile(_))));
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(checkpoint_from_str(&bumped), Err(Error::VersionMismatch { found: 2, expected: 1 })));
    }

    #[test]
    fn loss_log_header() {
        let rec = EpochRecord { epoch: 0, values: [1.0; 8], total: 8.0, lr: 1e-3, sigma: 1.0 };
        let mut buf = Vec::new();
        write_loss_log(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,L1,L2,L3,L4,L5,L6,L7,L8,total,lr,sigma_t\n0,1.0,"));
    }
}
