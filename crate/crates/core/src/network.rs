//! Sine-mapped multilayer perceptrons with exact input derivatives.
//!
//! A batch is pushed through the network as a stack of channels: the value,
//! the four first derivatives with respect to the normalized inputs
//! (x, y, z, t) and the three diagonal spatial second derivatives. Each
//! linear layer acts on every channel with one GEMM; activations mix the
//! channels by the chain rule. The reverse pass runs the same recurrence
//! backwards to give exact parameter gradients of any loss written in terms
//! of the output channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MaterialId, Point3};
use crate::sampling::NormalizationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Swish,
    Tanh,
    /// Second and third derivatives are taken as zero.
    Relu,
    Gelu,
    /// `sin` as hidden activation.
    Sine,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Swish => "swish",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Sine => "sine",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Activation::Swish, Activation::Tanh, Activation::Relu, Activation::Gelu, Activation::Sine]
            .into_iter()
            .find(|a| a.name() == s)
    }

    /// Value alone; agrees with `eval(z)[0]`.
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Swish => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sine => z.sin(),
            Activation::Gelu => self.eval(z)[0],
        }
    }

    /// Value and first three derivatives at `z`.
    #[inline]
    pub fn eval(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Swish => {
                let s = 1.0 / (1.0 + (-z).exp());
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s);
                [z * s, s + z * s1, 2.0 * s1 + z * s2, 3.0 * s2 + z * s3]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                let d3 = -2.0 * (d1 * d1 + t * d2);
                [t, d1, d2, d3]
            }
            Activation::Relu => {
                if z > 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 0.0]
                }
            }
            Activation::Gelu => {
                const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
                let pdf = INV_SQRT_2PI * (-0.5 * z * z).exp();
                let cdf = 0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2));
                [z * cdf, cdf + z * pdf, pdf * (2.0 - z * z), pdf * (z * z * z - 4.0 * z)]
            }
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
        }
    }
}

/// How many derivative channels a forward pass carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JetOrder {
    /// `[T]`
    Value,
    /// `[T, Tx, Ty, Tz]`
    Spatial,
    /// `[T, Tx, Ty, Tz, Tt, Txx, Tyy, Tzz]`
    Full,
}

impl JetOrder {
    pub fn channels(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Spatial => 4,
            JetOrder::Full => 8,
        }
    }

    /// Number of first-derivative channels (inputs differentiated).
    fn first(self) -> usize {
        match self {
            JetOrder::Value => 0,
            JetOrder::Spatial => 3,
            JetOrder::Full => 4,
        }
    }

    /// Number of second-derivative channels.
    fn second(self) -> usize {
        match self {
            JetOrder::Full => 3,
            _ => 0,
        }
    }

    /// Physical-over-normalized factor for each channel.
    pub fn channel_scales(self, scale: [f64; 4]) -> Vec<f64> {
        let all = [1.0, scale[0], scale[1], scale[2], scale[3], scale[0].powi(2), scale[1].powi(2), scale[2].powi(2)];
        all[..self.channels()].to_vec()
    }
}

/// Temperature and the derivatives the heat equation and boundary
/// conditions need, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalJet {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dxx: f64,
    pub dyy: f64,
    pub dzz: f64,
}

impl EvalJet {
    pub fn grad(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn laplacian(&self) -> f64 {
        self.dxx + self.dyy + self.dzz
    }

    pub fn normal_derivative(&self, n: [f64; 3]) -> f64 {
        self.dx * n[0] + self.dy * n[1] + self.dz * n[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Layer widths from input (4) to output (1).
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Frequency multiplier of the sine input layer.
    pub omega0: f64,
    /// Initial value of the output bias, deg C.
    pub output_bias_init: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            widths: vec![4, 256, 256, 256, 256, 1],
            activation: Activation::Swish,
            omega0: 1.0,
            output_bias_init: 0.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if w.len() < 3 || w[0] != 4 || *w.last().unwrap() != 1 || w.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "network widths must run from 4 inputs through at least one hidden layer to 1 output, got {w:?}"
            )));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::InvalidConfig("omega0 must be positive".into()));
        }
        if self.activation == Activation::Relu {
            log::warn!("relu has zero second derivative almost everywhere; heat residuals lose their diffusion term");
        }
        Ok(())
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    assert!(m == 0 || k == 0 || a.0.len() > (m - 1) * a.1 + (k - 1) * a.2);
    assert!(k == 0 || n == 0 || b.0.len() > (k - 1) * b.1 + (n - 1) * b.2);
    assert!(m == 0 || n == 0 || c.len() >= (m - 1) * rsc + n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Intermediate values of one forward pass, kept for the reverse pass.
///
/// Every stacked buffer holds `channels` blocks of `n x width`, row-major.
pub struct Tape {
    n: usize,
    order: JetOrder,
    inputs: Vec<[f64; 4]>,
    /// Pre-activations of each activated layer.
    pre: Vec<Vec<f64>>,
    /// Post-activations of each activated layer.
    post: Vec<Vec<f64>>,
    /// Output channels, `channels x n`.
    output: Vec<f64>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    /// Output channel `c` (normalized-input derivatives) at point `i`.
    pub fn output(&self, c: usize, i: usize) -> f64 {
        self.output[c * self.n + i]
    }

    /// Point `i` as a physical-unit jet. Channels absent from the pass are 0.
    pub fn jet(&self, i: usize, scale: [f64; 4]) -> EvalJet {
        let g = |c: usize| if c < self.order.channels() { self.output(c, i) } else { 0.0 };
        let mut jet = EvalJet { value: g(0), dx: g(1) * scale[0], dy: g(2) * scale[1], dz: g(3) * scale[2], ..Default::default() };
        if self.order == JetOrder::Full {
            jet.dt = g(4) * scale[3];
            jet.dxx = g(5) * scale[0] * scale[0];
            jet.dyy = g(6) * scale[1] * scale[1];
            jet.dzz = g(7) * scale[2] * scale[2];
        }
        jet
    }
}

/// Adjoint of a loss with respect to the physical jet of one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JetAdjoint {
    pub value: f64,
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dxx: f64,
    pub dyy: f64,
    pub dzz: f64,
}

impl JetAdjoint {
    /// Adjoint of the normalized output channels for a pass of `order`.
    fn to_channels(self, order: JetOrder, scale: [f64; 4]) -> [f64; 8] {
        let mut a = [
            self.value,
            self.dx * scale[0],
            self.dy * scale[1],
            self.dz * scale[2],
            self.dt * scale[3],
            self.dxx * scale[0] * scale[0],
            self.dyy * scale[1] * scale[1],
            self.dzz * scale[2] * scale[2],
        ];
        for v in a.iter_mut().skip(order.channels()) {
            *v = 0.0;
        }
        a
    }
}

/// One fully connected network: a sine feature layer followed by dense
/// layers with a common activation and a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNetwork {
    /// `None` for a single network covering every material.
    pub material: Option<MaterialId>,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub omega0: f64,
    pub seed: u64,
    /// Flat parameters: per layer, row-major weights (in x out) then biases.
    pub params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(widths: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(widths.len());
    let mut acc = 0;
    for l in 0..widths.len() - 1 {
        off.push(acc);
        acc += widths[l] * widths[l + 1] + widths[l + 1];
    }
    off.push(acc);
    off
}

impl SubNetwork {
    /// Uniform fan-in initialization `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero hidden biases.
    pub fn init(material: Option<MaterialId>, cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let offsets = layer_offsets(&cfg.widths);
        let mut params = vec![0.0; *offsets.last().unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..cfg.widths.len() - 1 {
            let (fan_in, fan_out) = (cfg.widths[l], cfg.widths[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = &mut params[offsets[l]..offsets[l] + fan_in * fan_out];
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        let last = params.len() - 1;
        params[last] = cfg.output_bias_init;
        Ok(SubNetwork {
            material,
            widths: cfg.widths.clone(),
            activation: cfg.activation,
            omega0: cfg.omega0,
            seed,
            params,
            offsets,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_parts(
        material: Option<MaterialId>,
        widths: Vec<usize>,
        activation: Activation,
        omega0: f64,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        NetworkConfig { widths: widths.clone(), activation, omega0, output_bias_init: 0.0 }.validate()?;
        let offsets = layer_offsets(&widths);
        if params.len() != *offsets.last().unwrap() {
            return Err(Error::LengthMismatch(params.len(), *offsets.last().unwrap()));
        }
        Ok(SubNetwork { material, widths, activation, omega0, seed, params, offsets })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn weights(&self, l: usize) -> &[f64] {
        &self.params[self.offsets[l]..self.offsets[l] + self.widths[l] * self.widths[l + 1]]
    }

    fn bias(&self, l: usize) -> &[f64] {
        let start = self.offsets[l] + self.widths[l] * self.widths[l + 1];
        &self.params[start..start + self.widths[l + 1]]
    }

    /// Forward pass over normalized inputs carrying `order` channels.
    pub fn forward(&self, inputs: &[[f64; 4]], order: JetOrder) -> Tape {
        let n = inputs.len();
        let ch = order.channels();
        let layers = self.layers();
        let mut pre = Vec::with_capacity(layers - 1);
        let mut post = Vec::with_capacity(layers - 1);

        // sine feature layer; derivative channels of the pre-activation are
        // the (scaled) weight rows, second derivatives vanish
        let w1 = self.widths[1];
        let (w0, b0) = (self.weights(0), self.bias(0));
        let om = self.omega0;
        let mut z = vec![0.0; ch * n * w1];
        for (i, x) in inputs.iter().enumerate() {
            let row = &mut z[i * w1..(i + 1) * w1];
            for k in 0..w1 {
                let mut acc = b0[k];
                for j in 0..4 {
                    acc += x[j] * w0[j * w1 + k];
                }
                row[k] = om * acc;
            }
        }
        for c in 0..order.first() {
            let block = &mut z[(1 + c) * n * w1..(2 + c) * n * w1];
            for i in 0..n {
                for k in 0..w1 {
                    block[i * w1 + k] = om * w0[c * w1 + k];
                }
            }
        }
        let mut a = vec![0.0; ch * n * w1];
        activate(Activation::Sine, order, n * w1, &z, &mut a);
        pre.push(z);
        post.push(a);

        for l in 1..layers {
            let (wi, wo) = (self.widths[l], self.widths[l + 1]);
            let input = post.last().unwrap();
            let mut z = vec![0.0; ch * n * wo];
            let b = self.bias(l);
            for i in 0..n {
                z[i * wo..(i + 1) * wo].copy_from_slice(b);
            }
            gemm(ch * n, wi, wo, (input, wi, 1), (self.weights(l), wo, 1), 1.0, &mut z, wo);
            if l + 1 == layers {
                return Tape { n, order, inputs: inputs.to_vec(), pre, post, output: z };
            }
            let mut a = vec![0.0; ch * n * wo];
            activate(self.activation, order, n * wo, &z, &mut a);
            pre.push(z);
            post.push(a);
        }
        unreachable!("networks have at least one hidden layer")
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// adjoint with respect to output channel `c` at point `i` is
    /// `out_adj[c * n + i]`.
    pub fn backward(&self, tape: &Tape, out_adj: &[f64], grad: &mut [f64]) {
        let n = tape.n;
        let order = tape.order;
        let ch = order.channels();
        assert_eq!(out_adj.len(), ch * n);
        assert_eq!(grad.len(), self.params.len());
        if n == 0 {
            return;
        }
        let layers = self.layers();
        let mut adj = out_adj.to_vec();
        for l in (1..layers).rev() {
            let (wi, wo) = (self.widths[l], self.widths[l + 1]);
            let input = &tape.post[l - 1];
            let w_start = self.offsets[l];
            let b_start = w_start + wi * wo;
            {
                let (gw, gb) = grad[w_start..b_start + wo].split_at_mut(wi * wo);
                // dW += input^T adj over all channels
                gemm(wi, ch * n, wo, (input, 1, wi), (&adj, wo, 1), 1.0, gw, wo);
                for i in 0..n {
                    for k in 0..wo {
                        gb[k] += adj[i * wo + k];
                    }
                }
            }
            let mut adj_in = vec![0.0; ch * n * wi];
            gemm(ch * n, wo, wi, (&adj, wo, 1), (self.weights(l), 1, wo), 0.0, &mut adj_in, wi);
            let act = if l == 1 { Activation::Sine } else { self.activation };
            let mut zbar = vec![0.0; ch * n * wi];
            activate_backward(act, order, n * wi, &tape.pre[l - 1], &adj_in, &mut zbar);
            adj = zbar;
        }
        // sine layer: z = om (x W0 + b0), z_c = om W0[c, :]
        let w1 = self.widths[1];
        let om = self.omega0;
        let (gw, gb) = grad[..4 * w1 + w1].split_at_mut(4 * w1);
        for (i, x) in tape.inputs.iter().enumerate() {
            let row = &adj[i * w1..(i + 1) * w1];
            for k in 0..w1 {
                let r = om * row[k];
                gb[k] += r;
                for j in 0..4 {
                    gw[j * w1 + k] += x[j] * r;
                }
            }
        }
        for c in 0..order.first() {
            let block = &adj[(1 + c) * n * w1..(2 + c) * n * w1];
            for i in 0..n {
                for k in 0..w1 {
                    gw[c * w1 + k] += om * block[i * w1 + k];
                }
            }
        }
    }

    /// Single-point physical jet.
    pub fn eval_jet(&self, p: Point3, t: f64, norm: &NormalizationSpec) -> Result<EvalJet> {
        let tape = self.forward(&[norm.normalize(p, t)], JetOrder::Full);
        let jet = tape.jet(0, norm.scale());
        let vals = [jet.value, jet.dt, jet.dx, jet.dy, jet.dz, jet.dxx, jet.dyy, jet.dzz];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network jet"));
        }
        Ok(jet)
    }

    /// Values at normalized inputs. Skips derivative channels and keeps no
    /// tape.
    pub fn predict_normalized(&self, inputs: &[[f64; 4]]) -> Vec<f64> {
        let n = inputs.len();
        let layers = self.layers();
        let w1 = self.widths[1];
        let (w0, b0) = (self.weights(0), self.bias(0));
        let mut a = vec![0.0; n * w1];
        for (i, x) in inputs.iter().enumerate() {
            for k in 0..w1 {
                let mut acc = b0[k];
                for j in 0..4 {
                    acc += x[j] * w0[j * w1 + k];
                }
                a[i * w1 + k] = (self.omega0 * acc).sin();
            }
        }
        for l in 1..layers {
            let (wi, wo) = (self.widths[l], self.widths[l + 1]);
            let mut z = vec![0.0; n * wo];
            let b = self.bias(l);
            for i in 0..n {
                z[i * wo..(i + 1) * wo].copy_from_slice(b);
            }
            gemm(n, wi, wo, (&a, wi, 1), (self.weights(l), wo, 1), 1.0, &mut z, wo);
            if l + 1 < layers {
                for v in &mut z {
                    *v = self.activation.value(*v);
                }
            }
            a = z;
        }
        a
    }
}

/// Applies the activation to every channel of a stacked pre-activation.
fn activate(act: Activation, order: JetOrder, block: usize, z: &[f64], a: &mut [f64]) {
    let (first, second) = (order.first(), order.second());
    for e in 0..block {
        let [f0, f1, f2, _] = act.eval(z[e]);
        a[e] = f0;
        for c in 0..first {
            a[(1 + c) * block + e] = f1 * z[(1 + c) * block + e];
        }
        for c in 0..second {
            let zi = z[(1 + c) * block + e];
            a[(1 + first + c) * block + e] = f2 * zi * zi + f1 * z[(1 + first + c) * block + e];
        }
    }
}

fn activate_backward(act: Activation, order: JetOrder, block: usize, z: &[f64], abar: &[f64], zbar: &mut [f64]) {
    let (first, second) = (order.first(), order.second());
    for e in 0..block {
        let [_, f1, f2, f3] = act.eval(z[e]);
        let mut z0 = abar[e] * f1;
        for c in 0..first {
            let idx = (1 + c) * block + e;
            let zi = z[idx];
            z0 += abar[idx] * f2 * zi;
            let mut zib = abar[idx] * f1;
            if c < second {
                let jdx = (1 + first + c) * block + e;
                let ab = abar[jdx];
                z0 += ab * (f3 * zi * zi + f2 * z[jdx]);
                zib += ab * f2 * 2.0 * zi;
                zbar[jdx] = ab * f1;
            }
            zbar[idx] = zib;
        }
        zbar[e] = z0;
    }
}

/// Per-material networks sharing one input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub nets: Vec<SubNetwork>,
    pub norm: NormalizationSpec,
}

impl Ensemble {
    /// Three material networks, or one shared network when
    /// `multidomain` is false. Seeds are derived from `seed`.
    pub fn init(cfg: &NetworkConfig, norm: NormalizationSpec, multidomain: bool, seed: u64) -> Result<Self> {
        let nets = if multidomain {
            MaterialId::ALL
                .iter()
                .enumerate()
                .map(|(i, &m)| SubNetwork::init(Some(m), cfg, seed.wrapping_add(1 + i as u64)))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![SubNetwork::init(None, cfg, seed.wrapping_add(1))?]
        };
        Ok(Ensemble { nets, norm })
    }

    pub fn is_multidomain(&self) -> bool {
        self.nets.len() > 1
    }

    /// Index of the network that owns material `m`.
    pub fn net_for(&self, m: MaterialId) -> usize {
        if self.is_multidomain() {
            m.index()
        } else {
            0
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(SubNetwork::param_count).sum()
    }

    /// Start of each network's block in the flat parameter vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.nets
            .iter()
            .map(|n| {
                let o = acc;
                acc += n.param_count();
                o
            })
            .collect()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params.iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut start = 0;
        for net in &mut self.nets {
            let end = start + net.params.len();
            net.params.copy_from_slice(&flat[start..end]);
            start = end;
        }
    }

    pub fn net_for_point(&self, g: &crate::geometry::MonoblockGeometry, p: Point3) -> Result<usize> {
        g.classify_material(p).material().map(|m| self.net_for(m)).ok_or(Error::PointOutsideDomain(p))
    }
}

/// Evaluates a loss and its gradient over all ensemble parameters.
///
/// `evaluate` receives one tape per requested `(network, inputs, order)`
/// batch and returns the loss together with the adjoint of every output
/// channel (same layout as the tape outputs).
pub fn loss_gradient<F>(
    ens: &Ensemble,
    batches: &[(usize, Vec<[f64; 4]>, JetOrder)],
    evaluate: F,
) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Tape]) -> (f64, Vec<Vec<f64>>),
{
    let tapes: Vec<Tape> = batches.iter().map(|(net, x, order)| ens.nets[*net].forward(x, *order)).collect();
    let (loss, adjoints) = evaluate(&tapes);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let offsets = ens.offsets();
    let mut grad = vec![0.0; ens.param_count()];
    for ((batch, tape), adj) in batches.iter().zip(&tapes).zip(&adjoints) {
        let net = &ens.nets[batch.0];
        let start = offsets[batch.0];
        net.backward(tape, adj, &mut grad[start..start + net.param_count()]);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((loss, grad))
}

/// Writes the adjoint `adj` of point `i` into a channel-major buffer.
pub fn scatter_adjoint(buf: &mut [f64], n: usize, i: usize, order: JetOrder, scale: [f64; 4], adj: JetAdjoint) {
    let ch = adj.to_channels(order, scale);
    for c in 0..order.channels() {
        buf[c * n + i] += ch[c];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MonoblockGeometry;

    fn small_cfg(act: Activation) -> NetworkConfig {
        NetworkConfig { widths: vec![4, 12, 10, 1], activation: act, omega0: 1.0, output_bias_init: 0.0 }
    }

    fn norm() -> NormalizationSpec {
        NormalizationSpec::for_domain(&MonoblockGeometry::default(), [0.0, 10.0]).unwrap()
    }

    #[test]
    fn parameter_count_of_default_architecture() {
        let net = SubNetwork::init(Some(MaterialId::W), &NetworkConfig::default(), 0).unwrap();
        // 4*256+256 + 3*(256*256+256) + 256+1
        assert_eq!(net.param_count(), 198_913);
        assert_eq!(net.widths, vec![4, 256, 256, 256, 256, 1]);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = small_cfg(Activation::Swish);
        let a = SubNetwork::init(None, &cfg, 42).unwrap();
        let b = SubNetwork::init(None, &cfg, 42).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, SubNetwork::init(None, &cfg, 43).unwrap().params);
    }

    #[test]
    fn zero_output_layer_is_constant() {
        let cfg = small_cfg(Activation::Tanh);
        let mut net = SubNetwork::init(None, &cfg, 1).unwrap();
        let n = net.params.len();
        for v in &mut net.params[n - 11..n - 1] {
            *v = 0.0;
        }
        net.params[n - 1] = 12.5;
        let j = net.eval_jet([0.01, 0.02, 0.003], 4.0, &norm()).unwrap();
        assert_eq!(j, EvalJet { value: 12.5, ..Default::default() });
    }

    #[test]
    fn single_sine_neuron_closed_form() {
        // T = sin(x_hat): one hidden unit, identity readout
        let widths = vec![4, 1, 1];
        let mut params = vec![0.0; 4 + 1 + 1 + 1];
        params[0] = 1.0; // W0[x, 0]
        params[5] = 1.0; // readout weight
        let net = SubNetwork::from_parts(None, widths, Activation::Sine, 1.0, 0, params).unwrap();
        let spec = norm();
        let p = [0.021, 0.01, 0.004];
        let xh = spec.normalize(p, 3.0)[0];
        let j = net.eval_jet(p, 3.0, &spec).unwrap();
        let s = spec.scale()[0];
        assert!((j.value - xh.sin()).abs() < 1e-15);
        assert!((j.dx - s * xh.cos()).abs() < 1e-12);
        assert!((j.dxx + s * s * xh.sin()).abs() < 1e-9);
        assert_eq!(j.dy, 0.0);
        assert_eq!(j.dt, 0.0);

        // doubling the x-range halves dT/dx and quarters d2T/dx2 for the
        // same normalized-space function
        let wide = NormalizationSpec::new([spec.min[0], spec.min[1], spec.min[2], spec.min[3]],
            [2.0 * spec.max[0], spec.max[1], spec.max[2], spec.max[3]]).unwrap();
        let p2 = wide.denormalize(spec.normalize(p, 3.0)).0;
        let j2 = net.eval_jet(p2, 3.0, &wide).unwrap();
        assert!((j2.dx - 0.5 * j.dx).abs() < 1e-12 * j.dx.abs().max(1.0));
        assert!((j2.dxx - 0.25 * j.dxx).abs() < 1e-9 * j.dxx.abs().max(1.0));
    }

    #[test]
    fn eval_jet_is_pure() {
        let net = SubNetwork::init(None, &small_cfg(Activation::Gelu), 9).unwrap();
        let spec = norm();
        let a = net.eval_jet([0.01, 0.01, 0.01], 1.0, &spec).unwrap();
        let b = net.eval_jet([0.01, 0.01, 0.01], 1.0, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn activation_derivatives_match_differences() {
        let h = 1e-5;
        for act in [Activation::Swish, Activation::Tanh, Activation::Gelu, Activation::Sine] {
            for z in [-2.3, -0.4, 0.0, 0.7, 1.9] {
                let d = act.eval(z);
                for k in 0..3 {
                    let fd = (act.eval(z + h)[k] - act.eval(z - h)[k]) / (2.0 * h);
                    assert!((fd - d[k + 1]).abs() < 1e-7, "{act:?} order {k} at {z}: {fd} vs {}", d[k + 1]);
                }
            }
        }
    }

    #[test]
    fn batch_and_single_point_agree() {
        let net = SubNetwork::init(None, &small_cfg(Activation::Swish), 4).unwrap();
        let xs = [[0.1, -0.2, 0.3, -0.9], [0.5, 0.5, -0.5, 0.0], [-1.0, 1.0, 0.2, 0.8]];
        let batch = net.forward(&xs, JetOrder::Full);
        for (i, x) in xs.iter().enumerate() {
            let single = net.forward(&[*x], JetOrder::Full);
            for c in 0..8 {
                assert!((batch.output(c, i) - single.output(c, 0)).abs() < 1e-13);
            }
            let v = net.forward(&[*x], JetOrder::Value);
            assert!((v.output(0, 0) - single.output(0, 0)).abs() < 1e-13);
        }
    }

    #[test]
    fn lean_prediction_matches_tape() {
        let xs = [[0.1, -0.2, 0.3, -0.9], [0.5, 0.5, -0.5, 0.0], [-1.0, 1.0, 0.2, 0.8]];
        for act in [Activation::Swish, Activation::Tanh, Activation::Relu, Activation::Gelu, Activation::Sine] {
            let net = SubNetwork::init(None, &small_cfg(act), 5).unwrap();
            let tape = net.forward(&xs, JetOrder::Value);
            for (i, v) in net.predict_normalized(&xs).into_iter().enumerate() {
                assert!((v - tape.output(0, i)).abs() < 1e-13, "{act:?}");
            }
        }
    }
}
