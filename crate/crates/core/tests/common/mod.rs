//! Independent finite-difference and brute-force references shared by the
//! integration suites.
#![allow(dead_code)]

use hfpinn::geometry::{BoundaryMode, MaterialId, MonoblockGeometry};
use hfpinn::losses::{compute_bundle, LossContext};
use hfpinn::network::{Activation, Ensemble, JetOrder, NetworkConfig, SubNetwork};
use hfpinn::sampling::{sample_collocation, NormalizationSpec, SampleSet, SamplingBudget};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ACTIVATIONS: [Activation; 4] = [Activation::Swish, Activation::Tanh, Activation::Gelu, Activation::Sine];

/// Relative error with a floor so that near-zero entries compare absolutely.
pub fn rel_err(approx: f64, exact: f64, floor: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(floor)
}

/// Central differences of the network value in normalized input space.
/// Returns `[Tx, Ty, Tz, Tt, Txx, Tyy, Tzz]`.
pub fn fd_jet(net: &SubNetwork, x: [f64; 4], h: f64) -> [f64; 7] {
    let f = |q: [f64; 4]| net.predict_normalized(&[q])[0];
    let f0 = f(x);
    let mut out = [0.0; 7];
    for axis in 0..4 {
        let mut p = x;
        let mut m = x;
        p[axis] += h;
        m[axis] -= h;
        let (fp, fm) = (f(p), f(m));
        out[axis] = (fp - fm) / (2.0 * h);
        if axis < 3 {
            out[4 + axis] = (fp - 2.0 * f0 + fm) / (h * h);
        }
    }
    out
}

/// Worst relative disagreement between propagated and differenced jets
/// over `configs` random networks and points.
pub fn jet_fd_worst(configs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..configs {
        let act = ACTIVATIONS[c % ACTIVATIONS.len()];
        let width = rng.gen_range(4..24);
        let depth = rng.gen_range(1..4);
        let mut widths = vec![4];
        widths.extend(std::iter::repeat_n(width, depth + 1));
        widths.push(1);
        let cfg = NetworkConfig { widths, activation: act, omega0: rng.gen_range(0.5..2.0), output_bias_init: 0.0 };
        let net = SubNetwork::init(None, &cfg, rng.gen()).unwrap();
        let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let tape = net.forward(&[x], JetOrder::Full);
        let exact: [f64; 7] = std::array::from_fn(|i| tape.output(i + 1, 0));
        let fd = fd_jet(&net, x, 1e-4);
        let floor = exact.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3) * 1e-2;
        for i in 0..7 {
            worst = worst.max(rel_err(fd[i], exact[i], floor));
        }
    }
    worst
}

pub fn small_training_set(g: &MonoblockGeometry, seed: u64, supervision: bool) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = SamplingBudget {
        cucrzr: 6,
        cu: 6,
        w: 6,
        adiabatic: 6,
        top: 6,
        convective: 5,
        iface_cucrzr_cu: 5,
        iface_cu_w: 5,
        initial: 5,
    };
    let mut set = sample_collocation(g, &budget, [0.0, 10.0], 0.0, &mut rng).unwrap();
    if supervision {
        for _ in 0..6 {
            let p = loop {
                let p = [rng.gen_range(0.0..0.03), rng.gen_range(0.0..0.028), rng.gen_range(0.0..0.012)];
                if g.classify_material(p).material().is_some() {
                    break p;
                }
            };
            set.points.push(hfpinn::sampling::SamplePoint {
                t_data: Some(rng.gen_range(20.0..100.0)),
                ..hfpinn::sampling::SamplePoint::new(p, rng.gen_range(0.0..10.0), hfpinn::sampling::Category::Supervision)
            });
        }
    }
    set
}

/// Worst relative mismatch between `<grad L, v>` and the central
/// difference of `L` along random `v`, over every loss term.
pub fn param_fd_worst(configs: usize, seed: u64) -> f64 {
    let g = MonoblockGeometry::default();
    let norm = NormalizationSpec::for_domain(&g, [0.0, 10.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..configs {
        let act = ACTIVATIONS[c % ACTIVATIONS.len()];
        let width = rng.gen_range(4..12);
        let cfg = NetworkConfig { widths: vec![4, width, width, 1], activation: act, omega0: 1.0, output_bias_init: 20.0 };
        let mut ens = Ensemble::init(&cfg, norm, c % 5 != 4, rng.gen()).unwrap();
        let set = small_training_set(&g, rng.gen(), true);
        let mode = if c % 2 == 0 { BoundaryMode::Constant } else { BoundaryMode::Gaussian };
        let ctx = LossContext { geometry: g, mode, t_init: 30.0 };
        let bundle = compute_bundle(&ens, &ctx, &set, true).unwrap();
        let theta = ens.params_flat();
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|x| x / vn).collect();
        let eps = 1e-5;
        let shifted = |ens: &mut Ensemble, s: f64| {
            let t: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            ens.set_params_flat(&t);
            compute_bundle(ens, &ctx, &set, true).unwrap().values
        };
        let plus = shifted(&mut ens, eps);
        let minus = shifted(&mut ens, -eps);
        for k in 0..8 {
            let fd = (plus[k] - minus[k]) / (2.0 * eps);
            let exact: f64 = bundle.grads[k].iter().zip(&v).map(|(a, b)| a * b).sum();
            let gnorm = bundle.grads[k].iter().map(|x| x * x).sum::<f64>().sqrt();
            if gnorm == 0.0 {
                continue;
            }
            worst = worst.max(rel_err(fd, exact, 1e-3 * gnorm));
        }
    }
    worst
}

pub fn material_of(g: &MonoblockGeometry, p: [f64; 3]) -> Option<MaterialId> {
    g.classify_material(p).material()
}
