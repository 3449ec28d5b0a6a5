//! The eight residual losses and their parameter gradients.
//!
//! Every loss is the batch mean of a squared pointwise residual. Residuals
//! are written against physical-unit jets; the adjoint of each residual is
//! pushed back through the owning sub-network(s).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{material_props, top_temperature, BoundaryMode, MaterialId, MonoblockGeometry};
use crate::network::{scatter_adjoint, Ensemble, EvalJet, JetAdjoint, JetOrder};
use crate::sampling::{Category, SamplePoint, SampleSet};

/// Number of points per forward/backward chunk.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    Constant,
    Adiabatic,
    Convective,
    Heat,
    Consistency,
    Flux,
    Init,
    Data,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Constant,
        LossKind::Adiabatic,
        LossKind::Convective,
        LossKind::Heat,
        LossKind::Consistency,
        LossKind::Flux,
        LossKind::Init,
        LossKind::Data,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Constant => "constant",
            LossKind::Adiabatic => "adiabatic",
            LossKind::Convective => "convective",
            LossKind::Heat => "heat",
            LossKind::Consistency => "consistency",
            LossKind::Flux => "flux",
            LossKind::Init => "init",
            LossKind::Data => "data",
        }
    }
}

/// Fixed loss weights, in [`LossKind::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossWeights(pub [f64; 8]);

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights([1.0, 1.0, 1.0, 1.0, 5.0, 1.0, 1.0, 10.0])
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn get(&self, kind: LossKind) -> f64 {
        self.0[kind.index()]
    }
}

/// Problem data every loss may need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossContext {
    pub geometry: MonoblockGeometry,
    pub mode: BoundaryMode,
    pub t_init: f64,
}

/// One loss value with its gradient over all ensemble parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBundle {
    pub values: [f64; 8],
    pub grads: Vec<Vec<f64>>,
}

impl LossBundle {
    pub fn get(&self, kind: LossKind) -> f64 {
        self.values[kind.index()]
    }

    pub fn total(&self, weights: &LossWeights) -> f64 {
        total_loss(&self.values, weights)
    }

    /// Gradients scaled by their weights.
    pub fn weighted_grads(&self, weights: &LossWeights) -> Vec<Vec<f64>> {
        self.grads
            .iter()
            .zip(weights.0)
            .map(|(g, w)| g.iter().map(|v| v * w).collect())
            .collect()
    }

    pub fn breakdown(&self) -> String {
        LossKind::ALL
            .iter()
            .map(|k| format!("{}={:e}", k.name(), self.get(*k)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn total_loss(values: &[f64; 8], weights: &LossWeights) -> f64 {
    values.iter().zip(weights.0).map(|(v, w)| v * w).sum()
}

// Pointwise residuals. Each returns the residual and its derivative with
// respect to the jet entries it reads.

pub fn residual_constant(jet: &EvalJet, target: f64) -> (f64, JetAdjoint) {
    (jet.value - target, JetAdjoint { value: 1.0, ..Default::default() })
}

pub fn residual_adiabatic(jet: &EvalJet, n: [f64; 3]) -> (f64, JetAdjoint) {
    (jet.normal_derivative(n), JetAdjoint { dx: n[0], dy: n[1], dz: n[2], ..Default::default() })
}

/// `-k dT/dn - h (T - T_f)` with `n` pointing out of the solid.
pub fn residual_convective(jet: &EvalJet, n: [f64; 3], k: f64, h: f64, t_fluid: f64) -> (f64, JetAdjoint) {
    let r = -k * jet.normal_derivative(n) - h * (jet.value - t_fluid);
    (r, JetAdjoint { value: -h, dx: -k * n[0], dy: -k * n[1], dz: -k * n[2], ..Default::default() })
}

/// `rho cp dT/dt - k (Txx + Tyy + Tzz)`.
pub fn residual_heat(jet: &EvalJet, m: MaterialId) -> (f64, JetAdjoint) {
    let p = material_props(m);
    let c = p.heat_capacity();
    let r = c * jet.dt - p.k * jet.laplacian();
    (r, JetAdjoint { dt: c, dxx: -p.k, dyy: -p.k, dzz: -p.k, ..Default::default() })
}

pub fn residual_consistency(inner: &EvalJet, outer: &EvalJet) -> (f64, JetAdjoint, JetAdjoint) {
    let one = |s: f64| JetAdjoint { value: s, ..Default::default() };
    (inner.value - outer.value, one(1.0), one(-1.0))
}

/// `k_i dT_i/dn - k_o dT_o/dn` across an interface with normal `n`.
pub fn residual_flux(
    inner: &EvalJet,
    outer: &EvalJet,
    n: [f64; 3],
    k_inner: f64,
    k_outer: f64,
) -> (f64, JetAdjoint, JetAdjoint) {
    let r = k_inner * inner.normal_derivative(n) - k_outer * outer.normal_derivative(n);
    let adj = |s: f64| JetAdjoint { dx: s * n[0], dy: s * n[1], dz: s * n[2], ..Default::default() };
    (r, adj(k_inner), adj(-k_outer))
}

/// Squared-mean loss over single-network residuals.
///
/// `items` pairs every point with the network that owns it and the order
/// its residual needs; `residual` maps (point, jet) to residual and jet
/// derivative.
fn mean_square<F>(ens: &Ensemble, items: &[(usize, &SamplePoint)], order: JetOrder, residual: F) -> Result<LossTerm>
where
    F: Fn(&SamplePoint, &EvalJet) -> (f64, JetAdjoint),
{
    let mut grad = vec![0.0; ens.param_count()];
    let offsets = ens.offsets();
    let scale = ens.norm.scale();
    let count = items.len() as f64;
    let mut sum = 0.0;
    for net_idx in 0..ens.nets.len() {
        let mine: Vec<&SamplePoint> = items.iter().filter(|(n, _)| *n == net_idx).map(|(_, p)| *p).collect();
        let net = &ens.nets[net_idx];
        let slice = &mut grad[offsets[net_idx]..offsets[net_idx] + net.param_count()];
        for chunk in mine.chunks(CHUNK) {
            let inputs: Vec<[f64; 4]> = chunk.iter().map(|p| ens.norm.normalize(p.pos, p.t)).collect();
            let tape = net.forward(&inputs, order);
            let n = chunk.len();
            let mut adj = vec![0.0; order.channels() * n];
            for (i, p) in chunk.iter().enumerate() {
                let (r, dr) = residual(p, &tape.jet(i, scale));
                sum += r * r;
                let s = 2.0 * r / count;
                scatter_adjoint(&mut adj, n, i, order, scale, scaled(dr, s));
            }
            net.backward(&tape, &adj, slice);
        }
    }
    finish(sum / count, grad)
}

fn scaled(a: JetAdjoint, s: f64) -> JetAdjoint {
    JetAdjoint {
        value: a.value * s,
        dt: a.dt * s,
        dx: a.dx * s,
        dy: a.dy * s,
        dz: a.dz * s,
        dxx: a.dxx * s,
        dyy: a.dyy * s,
        dzz: a.dzz * s,
    }
}

fn finish(value: f64, grad: Vec<f64>) -> Result<LossTerm> {
    if !value.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss gradient"));
    }
    Ok(LossTerm { value, grad })
}

fn routed<'a>(ens: &Ensemble, g: &MonoblockGeometry, pts: &[&'a SamplePoint]) -> Result<Vec<(usize, &'a SamplePoint)>> {
    pts.iter().map(|p| Ok((ens.net_for_point(g, p.pos)?, *p))).collect()
}

fn nonempty<'a>(pts: &'a [&'a SamplePoint], name: &'static str) -> Result<&'a [&'a SamplePoint]> {
    if pts.is_empty() {
        Err(Error::EmptyBatch(name))
    } else {
        Ok(pts)
    }
}

pub fn loss_constant(ens: &Ensemble, ctx: &LossContext, pts: &[&SamplePoint]) -> Result<LossTerm> {
    let items = routed(ens, &ctx.geometry, nonempty(pts, "constant")?)?;
    mean_square(ens, &items, JetOrder::Value, |p, j| residual_constant(j, top_temperature(p.pos, ctx.mode)))
}

pub fn loss_adiabatic(ens: &Ensemble, ctx: &LossContext, pts: &[&SamplePoint]) -> Result<LossTerm> {
    let items = routed(ens, &ctx.geometry, nonempty(pts, "adiabatic")?)?;
    mean_square(ens, &items, JetOrder::Spatial, |p, j| residual_adiabatic(j, normal_of(p)))
}

pub fn loss_convective(ens: &Ensemble, ctx: &LossContext, pts: &[&SamplePoint]) -> Result<LossTerm> {
    let pts = nonempty(pts, "convective")?;
    let net = ens.net_for(MaterialId::CuCrZr);
    let items: Vec<_> = pts.iter().map(|p| (net, *p)).collect();
    let k = material_props(MaterialId::CuCrZr).k;
    let conv = ctx.geometry.convective;
    mean_square(ens, &items, JetOrder::Spatial, |p, j| residual_convective(j, normal_of(p), k, conv.h, conv.t_fluid))
}

/// Interior points carry their material in the category.
pub fn loss_heat(ens: &Ensemble, pts: &[&SamplePoint]) -> Result<LossTerm> {
    let pts = nonempty(pts, "heat")?;
    let items = pts
        .iter()
        .map(|p| {
            let m = p.category.interior_material().ok_or(Error::PointOutsideDomain(p.pos))?;
            Ok((ens.net_for(m), *p))
        })
        .collect::<Result<Vec<_>>>()?;
    mean_square(ens, &items, JetOrder::Full, |p, j| {
        residual_heat(j, p.category.interior_material().expect("interior point"))
    })
}

pub fn loss_init(ens: &Ensemble, ctx: &LossContext, pts: &[&SamplePoint]) -> Result<LossTerm> {
    let items = routed(ens, &ctx.geometry, nonempty(pts, "init")?)?;
    mean_square(ens, &items, JetOrder::Value, |_, j| residual_constant(j, ctx.t_init))
}

pub fn loss_data(ens: &Ensemble, ctx: &LossContext, pts: &[&SamplePoint]) -> Result<LossTerm> {
    if pts.is_empty() {
        return Err(Error::EmptySupervision);
    }
    let items = routed(ens, &ctx.geometry, pts)?;
    mean_square(ens, &items, JetOrder::Value, |p, j| residual_constant(j, p.t_data.unwrap_or(f64::NAN)))
}

fn normal_of(p: &SamplePoint) -> [f64; 3] {
    p.normal.unwrap_or([0.0; 3])
}

/// Consistency and flux losses from one pair of passes over the interface
/// points.
pub fn loss_interfaces(ens: &Ensemble, pts: &[&SamplePoint]) -> Result<(LossTerm, LossTerm)> {
    let pts = nonempty(pts, "interface")?;
    let count = pts.len() as f64;
    let scale = ens.norm.scale();
    let offsets = ens.offsets();
    let mut grad_c = vec![0.0; ens.param_count()];
    let mut grad_f = vec![0.0; ens.param_count()];
    let (mut sum_c, mut sum_f) = (0.0, 0.0);
    let order = JetOrder::Spatial;
    for category in [Category::IfaceCuCrZrCu, Category::IfaceCuW] {
        let (mi, mo) = category.interface_pair().expect("interface category");
        let (ni, no) = (ens.net_for(mi), ens.net_for(mo));
        let (ki, ko) = (material_props(mi).k, material_props(mo).k);
        let mine: Vec<&SamplePoint> = pts.iter().filter(|p| p.category == category).copied().collect();
        for chunk in mine.chunks(CHUNK) {
            let n = chunk.len();
            let inputs: Vec<[f64; 4]> = chunk.iter().map(|p| ens.norm.normalize(p.pos, p.t)).collect();
            let ti = ens.nets[ni].forward(&inputs, order);
            let to = ens.nets[no].forward(&inputs, order);
            let buf = || vec![0.0; order.channels() * n];
            let (mut ci, mut co, mut fi, mut fo) = (buf(), buf(), buf(), buf());
            for (i, p) in chunk.iter().enumerate() {
                let (ji, jo) = (ti.jet(i, scale), to.jet(i, scale));
                let (r, ai, ao) = residual_consistency(&ji, &jo);
                sum_c += r * r;
                scatter_adjoint(&mut ci, n, i, order, scale, scaled(ai, 2.0 * r / count));
                scatter_adjoint(&mut co, n, i, order, scale, scaled(ao, 2.0 * r / count));
                let (r, ai, ao) = residual_flux(&ji, &jo, normal_of(p), ki, ko);
                sum_f += r * r;
                scatter_adjoint(&mut fi, n, i, order, scale, scaled(ai, 2.0 * r / count));
                scatter_adjoint(&mut fo, n, i, order, scale, scaled(ao, 2.0 * r / count));
            }
            for (net_idx, tape, ac, af) in [(ni, &ti, &ci, &fi), (no, &to, &co, &fo)] {
                let net = &ens.nets[net_idx];
                let range = offsets[net_idx]..offsets[net_idx] + net.param_count();
                net.backward(tape, ac, &mut grad_c[range.clone()]);
                net.backward(tape, af, &mut grad_f[range]);
            }
        }
    }
    Ok((finish(sum_c / count, grad_c)?, finish(sum_f / count, grad_f)?))
}

/// All eight losses over a training set. With `use_data` false the data
/// term is zero with a zero gradient. A term that overflows is reported as
/// NaN with a zero gradient so callers can dump the whole breakdown.
pub fn compute_bundle(ens: &Ensemble, ctx: &LossContext, set: &SampleSet, use_data: bool) -> Result<LossBundle> {
    let pick = |cats: &[Category]| -> Vec<&SamplePoint> {
        set.points.iter().filter(|p| cats.contains(&p.category)).collect()
    };
    let top = pick(&[Category::TopBC]);
    let adiabatic = pick(&[Category::AdiabaticBC]);
    let convective = pick(&[Category::ConvectiveBC]);
    let interior = pick(&[Category::InteriorW, Category::InteriorCu, Category::InteriorCuCrZr]);
    let interfaces = pick(&[Category::IfaceCuCrZrCu, Category::IfaceCuW]);
    let initial = pick(&[Category::Initial]);
    let data = pick(&[Category::Supervision]);

    let zero = || LossTerm { value: 0.0, grad: vec![0.0; ens.param_count()] };
    let nan = || LossTerm { value: f64::NAN, grad: vec![0.0; ens.param_count()] };
    let keep_nan = |r: Result<LossTerm>| match r {
        Err(Error::NonFinite(_)) => Ok(nan()),
        other => other,
    };
    let l1 = keep_nan(loss_constant(ens, ctx, &top))?;
    let l2 = keep_nan(loss_adiabatic(ens, ctx, &adiabatic))?;
    let l3 = keep_nan(loss_convective(ens, ctx, &convective))?;
    let l4 = keep_nan(loss_heat(ens, &interior))?;
    let (l5, l6) = match loss_interfaces(ens, &interfaces) {
        Err(Error::NonFinite(_)) => (nan(), nan()),
        other => other?,
    };
    let l7 = keep_nan(loss_init(ens, ctx, &initial))?;
    let l8 = if use_data { keep_nan(loss_data(ens, ctx, &data))? } else { zero() };
    let terms = [l1, l2, l3, l4, l5, l6, l7, l8];
    let values = std::array::from_fn(|i| terms[i].value);
    Ok(LossBundle { values, grads: terms.into_iter().map(|t| t.grad).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetworkConfig, SubNetwork};
    use crate::sampling::NormalizationSpec;

    fn constant_net(m: Option<MaterialId>, value: f64) -> SubNetwork {
        let cfg = NetworkConfig { widths: vec![4, 8, 8, 1], ..Default::default() };
        let mut net = SubNetwork::init(m, &cfg, 0).unwrap();
        // zero the output weights so only the bias remains
        let n = net.params.len();
        for v in &mut net.params[n - 9..n - 1] {
            *v = 0.0;
        }
        net.params[n - 1] = value;
        net
    }

    fn constant_ensemble(values: [f64; 3]) -> Ensemble {
        let g = MonoblockGeometry::default();
        let norm = NormalizationSpec::for_domain(&g, [0.0, 10.0]).unwrap();
        let nets = MaterialId::ALL.iter().zip(values).map(|(m, v)| constant_net(Some(*m), v)).collect();
        Ensemble { nets, norm }
    }

    fn ctx(mode: BoundaryMode) -> LossContext {
        LossContext { geometry: MonoblockGeometry::default(), mode, t_init: 30.0 }
    }

    fn jet(value: f64) -> EvalJet {
        EvalJet { value, ..Default::default() }
    }

    #[test]
    fn constant_loss_examples() {
        let ens = constant_ensemble([90.0; 3]);
        let p = SamplePoint::new([0.002, 0.002, 0.012], 1.0, Category::TopBC);
        let l = loss_constant(&ens, &ctx(BoundaryMode::Constant), &[&p]).unwrap();
        assert!((l.value - 100.0).abs() < 1e-12);
        let ens = constant_ensemble([0.0; 3]);
        let peak = SamplePoint::new([0.014, 0.001, 0.012], 1.0, Category::TopBC);
        let l = loss_constant(&ens, &ctx(BoundaryMode::Gaussian), &[&peak]).unwrap();
        assert!((l.value - 90000.0).abs() < 1e-9);
        let ens = constant_ensemble([100.0; 3]);
        let l = loss_constant(&ens, &ctx(BoundaryMode::Constant), &[&p]).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(matches!(loss_constant(&ens, &ctx(BoundaryMode::Constant), &[]), Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn adiabatic_residuals() {
        let n = [1.0, 0.0, 0.0];
        assert_eq!(residual_adiabatic(&jet(5.0), n).0, 0.0);
        let tx = EvalJet { dx: 1.0, ..jet(0.0) };
        assert_eq!(residual_adiabatic(&tx, n).0.powi(2), 1.0);
        let ty = EvalJet { dy: 1.0, ..jet(0.0) };
        assert_eq!(residual_adiabatic(&ty, n).0, 0.0);
    }

    #[test]
    fn convective_residuals() {
        let n = [-1.0, 0.0, 0.0];
        assert_eq!(residual_convective(&jet(22.0), n, 318.0, 1e5, 22.0).0, 0.0);
        let (r, _) = residual_convective(&jet(23.0), n, 318.0, 1e5, 22.0);
        assert!((r * r - 1e10).abs() < 1e-3);
        // solid at 23 degC cooling into the pipe: temperature rises away
        // from the wall, so dT/dn (into the coolant) is negative
        let h = 1e5;
        let k = 318.0;
        let slope = -h * (23.0 - 22.0) / k;
        let j = EvalJet { value: 23.0, dx: -slope, ..Default::default() };
        assert!(residual_convective(&j, n, k, h, 22.0).0.abs() < 1e-9);
    }

    #[test]
    fn heat_residuals() {
        let linear = EvalJet { value: 3.0, dx: 2.0, ..Default::default() };
        assert_eq!(residual_heat(&linear, MaterialId::W).0, 0.0);
        let quad = EvalJet { dxx: 2.0, ..Default::default() };
        assert_eq!(residual_heat(&quad, MaterialId::W).0.powi(2), 119716.0);
        let heating = EvalJet { dt: 1.0, ..Default::default() };
        assert_eq!(residual_heat(&heating, MaterialId::W).0.powi(2), (19298.0f64 * 129.0).powi(2));
    }

    #[test]
    fn interface_residuals() {
        assert_eq!(residual_consistency(&jet(30.0), &jet(30.0)).0, 0.0);
        assert_eq!(residual_consistency(&jet(30.0), &jet(40.0)).0.powi(2), 100.0);
        let n = [1.0, 0.0, 0.0];
        let inner = EvalJet { dx: 1.0, ..Default::default() };
        let outer = EvalJet { dx: 318.0 / 403.0, ..Default::default() };
        assert!(residual_flux(&inner, &outer, n, 318.0, 403.0).0.abs() < 1e-12);
        let (r, _, _) = residual_flux(&inner, &inner, n, 318.0, 403.0);
        assert_eq!(r * r, 7225.0);
        assert_eq!(residual_flux(&jet(1.0), &jet(2.0), n, 318.0, 403.0).0, 0.0);
    }

    #[test]
    fn init_and_data_examples() {
        let c = ctx(BoundaryMode::Constant);
        let ens = constant_ensemble([22.0; 3]);
        let p = SamplePoint::new([0.002, 0.002, 0.006], 0.0, Category::Initial);
        assert!((loss_init(&ens, &c, &[&p]).unwrap().value - 64.0).abs() < 1e-12);
        let ens = constant_ensemble([30.0; 3]);
        assert_eq!(loss_init(&ens, &c, &[&p]).unwrap().value, 0.0);
        let ens = constant_ensemble([95.0; 3]);
        let d = SamplePoint { t_data: Some(100.0), ..SamplePoint::new([0.002, 0.002, 0.006], 1.0, Category::Supervision) };
        assert!((loss_data(&ens, &c, &[&d]).unwrap().value - 25.0).abs() < 1e-12);
        assert!(matches!(loss_data(&ens, &c, &[]), Err(Error::EmptySupervision)));
    }

    #[test]
    fn interface_loss_touches_both_networks() {
        let mut ens = constant_ensemble([30.0, 40.0, 30.0]);
        // give the nets nonzero hidden-to-output weights so gradients flow
        let cfg = NetworkConfig { widths: vec![4, 8, 8, 1], activation: Activation::Tanh, ..Default::default() };
        for (i, net) in ens.nets.iter_mut().enumerate() {
            *net = SubNetwork::init(net.material, &cfg, 10 + i as u64).unwrap();
        }
        let g = MonoblockGeometry::default();
        let p = SamplePoint {
            normal: Some([1.0, 0.0, 0.0]),
            ..SamplePoint::new([g.pipe_axis_xy[0] + g.r_cu_outer, g.pipe_axis_xy[1], 0.005], 2.0, Category::IfaceCuW)
        };
        let (c, _) = loss_interfaces(&ens, &[&p]).unwrap();
        let offs = ens.offsets();
        let block = |i: usize| &c.grad[offs[i]..offs[i] + ens.nets[i].param_count()];
        assert!(block(MaterialId::W.index()).iter().any(|v| *v != 0.0));
        assert!(block(MaterialId::Cu.index()).iter().any(|v| *v != 0.0));
        assert!(block(MaterialId::CuCrZr.index()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_interfaces_give_value_gap() {
        let ens = constant_ensemble([30.0, 40.0, 30.0]);
        let g = MonoblockGeometry::default();
        let p = SamplePoint {
            normal: Some([1.0, 0.0, 0.0]),
            ..SamplePoint::new([g.pipe_axis_xy[0] + g.r_cu_outer, g.pipe_axis_xy[1], 0.005], 2.0, Category::IfaceCuW)
        };
        let (c, f) = loss_interfaces(&ens, &[&p]).unwrap();
        assert!((c.value - 100.0).abs() < 1e-12);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn uniform_field_detects_trivial_solution() {
        let ens = constant_ensemble([30.0; 3]);
        let g = MonoblockGeometry::default();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let budget = crate::sampling::SamplingBudget { cucrzr: 20, cu: 20, w: 20, adiabatic: 20, initial: 20, ..crate::sampling::SamplingBudget::zero() };
        let set = crate::sampling::sample_collocation(&g, &budget, [0.0, 10.0], 0.0, &mut rng).unwrap();
        let c = ctx(BoundaryMode::Constant);
        let interior: Vec<_> = set.points.iter().filter(|p| p.category.interior_material().is_some()).collect();
        let adiabatic: Vec<_> = set.of(Category::AdiabaticBC).collect();
        let initial: Vec<_> = set.of(Category::Initial).collect();
        assert_eq!(loss_heat(&ens, &interior).unwrap().value, 0.0);
        assert_eq!(loss_adiabatic(&ens, &c, &adiabatic).unwrap().value, 0.0);
        assert_eq!(loss_init(&ens, &c, &initial).unwrap().value, 0.0);
    }

    #[test]
    fn two_material_steady_profile() {
        // T_i = a x + b inside, T_o = c x + d outside, matched at x0
        let (ki, ko) = (material_props(MaterialId::CuCrZr).k, material_props(MaterialId::Cu).k);
        let x0 = 0.0075;
        let a = 1234.5;
        let c = a * ki / ko;
        let b = 40.0;
        let d = a * x0 + b - c * x0;
        let inner = EvalJet { value: a * x0 + b, dx: a, ..Default::default() };
        let outer = EvalJet { value: c * x0 + d, dx: c, ..Default::default() };
        let n = [1.0, 0.0, 0.0];
        assert!(residual_heat(&inner, MaterialId::CuCrZr).0.abs() < 1e-10);
        assert!(residual_heat(&outer, MaterialId::Cu).0.abs() < 1e-10);
        assert!(residual_consistency(&inner, &outer).0.abs() < 1e-10);
        assert!(residual_flux(&inner, &outer, n, ki, ko).0.abs() < 1e-10);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&[1.0; 8], &w), 21.0);
        assert_eq!(total_loss(&[3.0; 8], &LossWeights([0.0; 8])), 0.0);
        let mut v = [0.0; 8];
        v[4] = 2.0;
        assert_eq!(total_loss(&v, &w), 10.0);
    }

    #[test]
    fn losses_are_permutation_invariant() {
        let cfg = NetworkConfig { widths: vec![4, 6, 6, 1], ..Default::default() };
        let g = MonoblockGeometry::default();
        let norm = NormalizationSpec::for_domain(&g, [0.0, 10.0]).unwrap();
        let ens = Ensemble::init(&cfg, norm, true, 5).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
        let budget = crate::sampling::SamplingBudget { w: 30, ..crate::sampling::SamplingBudget::zero() };
        let set = crate::sampling::sample_collocation(&g, &budget, [0.0, 10.0], 0.0, &mut rng).unwrap();
        let fwd: Vec<_> = set.points.iter().collect();
        let rev: Vec<_> = set.points.iter().rev().collect();
        let a = loss_heat(&ens, &fwd).unwrap().value;
        let b = loss_heat(&ens, &rev).unwrap().value;
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}
