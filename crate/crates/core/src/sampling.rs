//! Collocation point generation, input normalization and the region
//! (trust-region) perturbation of training points.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MaterialId, MonoblockGeometry, Point3, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    InteriorW,
    InteriorCu,
    InteriorCuCrZr,
    TopBC,
    AdiabaticBC,
    ConvectiveBC,
    IfaceCuCrZrCu,
    IfaceCuW,
    Supervision,
    Initial,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::InteriorW,
        Category::InteriorCu,
        Category::InteriorCuCrZr,
        Category::TopBC,
        Category::AdiabaticBC,
        Category::ConvectiveBC,
        Category::IfaceCuCrZrCu,
        Category::IfaceCuW,
        Category::Supervision,
        Category::Initial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::InteriorW => "InteriorW",
            Category::InteriorCu => "InteriorCu",
            Category::InteriorCuCrZr => "InteriorCuCrZr",
            Category::TopBC => "TopBC",
            Category::AdiabaticBC => "AdiabaticBC",
            Category::ConvectiveBC => "ConvectiveBC",
            Category::IfaceCuCrZrCu => "IfaceCuCrZrCu",
            Category::IfaceCuW => "IfaceCuW",
            Category::Supervision => "Supervision",
            Category::Initial => "Initial",
        }
    }

    pub fn interior(m: MaterialId) -> Category {
        match m {
            MaterialId::W => Category::InteriorW,
            MaterialId::Cu => Category::InteriorCu,
            MaterialId::CuCrZr => Category::InteriorCuCrZr,
        }
    }

    pub fn interior_material(self) -> Option<MaterialId> {
        match self {
            Category::InteriorW => Some(MaterialId::W),
            Category::InteriorCu => Some(MaterialId::Cu),
            Category::InteriorCuCrZr => Some(MaterialId::CuCrZr),
            _ => None,
        }
    }

    /// Inner and outer material of an interface category.
    pub fn interface_pair(self) -> Option<(MaterialId, MaterialId)> {
        match self {
            Category::IfaceCuCrZrCu => Some((MaterialId::CuCrZr, MaterialId::Cu)),
            Category::IfaceCuW => Some((MaterialId::Cu, MaterialId::W)),
            _ => None,
        }
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sample category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub pos: Point3,
    pub t: f64,
    pub category: Category,
    pub normal: Option<[f64; 3]>,
    pub t_data: Option<f64>,
}

impl SamplePoint {
    pub fn new(pos: Point3, t: f64, category: Category) -> Self {
        SamplePoint { pos, t, category, normal: None, t_data: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub points: Vec<SamplePoint>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, category: Category) -> usize {
        self.points.iter().filter(|p| p.category == category).count()
    }

    pub fn of(&self, category: Category) -> impl Iterator<Item = &SamplePoint> + '_ {
        self.points.iter().filter(move |p| p.category == category)
    }

    pub fn extend(&mut self, other: SampleSet) {
        self.points.extend(other.points);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["category", "x", "y", "z", "t", "nx", "ny", "nz", "T_data"])?;
        for p in &self.points {
            let mut row = vec![
                p.category.name().to_string(),
                fmt_f64(p.pos[0]),
                fmt_f64(p.pos[1]),
                fmt_f64(p.pos[2]),
                fmt_f64(p.t),
            ];
            match p.normal {
                Some(n) => row.extend(n.iter().map(|v| fmt_f64(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
            row.push(p.t_data.map(fmt_f64).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<SampleSet> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != ["category", "x", "y", "z", "t", "nx", "ny", "nz", "T_data"] {
            return Err(Error::InvalidConfig(format!("unexpected sample CSV header {header:?}")));
        }
        let mut points = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<Option<f64>> {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>().map(Some).map_err(|_| {
                    Error::InvalidConfig(format!("line {}: bad number `{s}`", line + 2))
                })
            };
            let required = |i: usize| -> Result<f64> {
                field(i)?.ok_or_else(|| {
                    Error::InvalidConfig(format!("line {}: missing column {i}", line + 2))
                })
            };
            let category: Category = rec.get(0).unwrap_or("").parse()?;
            let normal = match (field(5)?, field(6)?, field(7)?) {
                (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                _ => None,
            };
            points.push(SamplePoint {
                pos: [required(1)?, required(2)?, required(3)?],
                t: required(4)?,
                category,
                normal,
                t_data: field(8)?,
            });
        }
        Ok(SampleSet { points })
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Number of points per collocation category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingBudget {
    pub cucrzr: usize,
    pub cu: usize,
    pub w: usize,
    pub adiabatic: usize,
    pub top: usize,
    pub convective: usize,
    pub iface_cucrzr_cu: usize,
    pub iface_cu_w: usize,
    /// Interior points pinned at t = 0 for the initial condition.
    pub initial: usize,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        SamplingBudget {
            cucrzr: 1845,
            cu: 5160,
            w: 6500,
            adiabatic: 1000,
            top: 2500,
            convective: 250,
            iface_cucrzr_cu: 170,
            iface_cu_w: 290,
            initial: 2000,
        }
    }
}

impl SamplingBudget {
    pub fn zero() -> Self {
        SamplingBudget {
            cucrzr: 0,
            cu: 0,
            w: 0,
            adiabatic: 0,
            top: 0,
            convective: 0,
            iface_cucrzr_cu: 0,
            iface_cu_w: 0,
            initial: 0,
        }
    }

    pub fn interior(&self, m: MaterialId) -> usize {
        match m {
            MaterialId::W => self.w,
            MaterialId::Cu => self.cu,
            MaterialId::CuCrZr => self.cucrzr,
        }
    }
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Draws every collocation category of `budget`. Interior points use
/// rejection sampling in the region's bounding box; surfaces are sampled
/// uniformly by area; times are uniform in `t_range` (except `Initial`).
pub fn sample_collocation(
    g: &MonoblockGeometry,
    budget: &SamplingBudget,
    t_range: [f64; 2],
    top_bias_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampleSet> {
    if !(t_range[1] > t_range[0]) {
        return Err(Error::InvalidConfig(format!("empty time range {t_range:?}")));
    }
    if !(0.0..=1.0).contains(&top_bias_fraction) {
        return Err(Error::InvalidConfig("top_bias_fraction must lie in [0, 1]".into()));
    }
    let mut out = Vec::new();
    let time = |rng: &mut ChaCha8Rng| rng.gen_range(t_range[0]..=t_range[1]);

    for m in [MaterialId::CuCrZr, MaterialId::Cu, MaterialId::W] {
        let n = budget.interior(m);
        let biased = (n as f64 * top_bias_fraction).round() as usize;
        for i in 0..n {
            let z_lo = if i < biased { 0.75 * g.height_z } else { 0.0 };
            let pos = sample_in_material(g, m, z_lo, rng)?;
            out.push(SamplePoint::new(pos, time(rng), Category::interior(m)));
        }
    }
    for _ in 0..budget.adiabatic {
        let (pos, n) = sample_adiabatic(g, rng)?;
        out.push(SamplePoint { normal: Some(n), ..SamplePoint::new(pos, time(rng), Category::AdiabaticBC) });
    }
    for _ in 0..budget.top {
        let pos = sample_annulus_face(g, g.height_z, rng)?;
        out.push(SamplePoint {
            normal: Some([0.0, 0.0, 1.0]),
            ..SamplePoint::new(pos, time(rng), Category::TopBC)
        });
    }
    let cylinders = [
        (budget.convective, g.r_coolant, Category::ConvectiveBC, -1.0),
        (budget.iface_cucrzr_cu, g.r_cucrzr_outer, Category::IfaceCuCrZrCu, 1.0),
        (budget.iface_cu_w, g.r_cu_outer, Category::IfaceCuW, 1.0),
    ];
    for (n, radius, category, sign) in cylinders {
        for _ in 0..n {
            let theta = rng.gen_range(0.0..TAU);
            let z = rng.gen_range(0.0..=g.height_z);
            let (pos, normal) = cylinder_point(g, radius, theta, z, sign);
            out.push(SamplePoint { normal: Some(normal), ..SamplePoint::new(pos, time(rng), category) });
        }
    }
    for _ in 0..budget.initial {
        let pos = sample_in_solid(g, rng)?;
        out.push(SamplePoint::new(pos, t_range[0], Category::Initial));
    }
    Ok(SampleSet { points: out })
}

fn cylinder_point(g: &MonoblockGeometry, radius: f64, theta: f64, z: f64, sign: f64) -> (Point3, [f64; 3]) {
    let (s, c) = theta.sin_cos();
    let pos = [g.pipe_axis_xy[0] + radius * c, g.pipe_axis_xy[1] + radius * s, z];
    (pos, [sign * c, sign * s, 0.0])
}

fn sample_in_material(
    g: &MonoblockGeometry,
    m: MaterialId,
    z_lo: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Point3> {
    // cylinder shells only need their bounding square
    let (lo, hi) = match m {
        MaterialId::W => ([0.0, 0.0], [g.length_x, g.width_y]),
        MaterialId::Cu | MaterialId::CuCrZr => {
            let r = if m == MaterialId::Cu { g.r_cu_outer } else { g.r_cucrzr_outer };
            let [ax, ay] = g.pipe_axis_xy;
            ([ax - r, ay - r], [ax + r, ay + r])
        }
    };
    for _ in 0..MAX_REJECTIONS {
        let p = [
            rng.gen_range(lo[0]..hi[0]),
            rng.gen_range(lo[1]..hi[1]),
            rng.gen_range(z_lo..=g.height_z),
        ];
        if g.classify_material(p) == Region::Solid(m) {
            return Ok(p);
        }
    }
    Err(Error::BudgetInfeasible(format!("{} region has no measurable volume", m.name())))
}

fn sample_in_solid(g: &MonoblockGeometry, rng: &mut ChaCha8Rng) -> Result<Point3> {
    for _ in 0..MAX_REJECTIONS {
        let p = [
            rng.gen_range(0.0..g.length_x),
            rng.gen_range(0.0..g.width_y),
            rng.gen_range(0.0..=g.height_z),
        ];
        if let Region::Solid(_) = g.classify_material(p) {
            return Ok(p);
        }
    }
    Err(Error::BudgetInfeasible("solid region has no measurable volume".into()))
}

/// Uniform point on the plane `z = z_face` restricted to solid material.
fn sample_annulus_face(g: &MonoblockGeometry, z_face: f64, rng: &mut ChaCha8Rng) -> Result<Point3> {
    for _ in 0..MAX_REJECTIONS {
        let p = [rng.gen_range(0.0..=g.length_x), rng.gen_range(0.0..=g.width_y), z_face];
        if g.radial_distance(p) >= g.r_coolant {
            return Ok(p);
        }
    }
    Err(Error::BudgetInfeasible("face fully covered by coolant".into()))
}

/// Uniform by area over the bottom face (minus the pipe) and the four sides.
fn sample_adiabatic(g: &MonoblockGeometry, rng: &mut ChaCha8Rng) -> Result<(Point3, [f64; 3])> {
    let (lx, ly, lz) = (g.length_x, g.width_y, g.height_z);
    let areas = [lx * ly, ly * lz, ly * lz, lx * lz, lx * lz];
    let total: f64 = areas.iter().sum();
    for _ in 0..MAX_REJECTIONS {
        let mut pick = rng.gen_range(0.0..total);
        let mut face = 0;
        while face < 4 && pick >= areas[face] {
            pick -= areas[face];
            face += 1;
        }
        let (a, b) = (rng.gen::<f64>(), rng.gen::<f64>());
        let (p, n) = match face {
            0 => ([a * lx, b * ly, 0.0], [0.0, 0.0, -1.0]),
            1 => ([0.0, a * ly, b * lz], [-1.0, 0.0, 0.0]),
            2 => ([lx, a * ly, b * lz], [1.0, 0.0, 0.0]),
            3 => ([a * lx, 0.0, b * lz], [0.0, -1.0, 0.0]),
            _ => ([a * lx, ly, b * lz], [0.0, 1.0, 0.0]),
        };
        if g.radial_distance(p) >= g.r_coolant {
            return Ok((p, n));
        }
    }
    Err(Error::BudgetInfeasible("adiabatic faces have no solid area".into()))
}

/// Affine map of (x, y, z, t) onto `[-1, 1]^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl NormalizationSpec {
    pub fn new(min: [f64; 4], max: [f64; 4]) -> Result<Self> {
        for i in 0..4 {
            if !(max[i] > min[i]) {
                return Err(Error::DegenerateAxis(i));
            }
        }
        Ok(NormalizationSpec { min, max })
    }

    /// Bounds covering the monoblock box and the training time window.
    pub fn for_domain(g: &MonoblockGeometry, t_range: [f64; 2]) -> Result<Self> {
        NormalizationSpec::new(
            [0.0, 0.0, 0.0, t_range[0]],
            [g.length_x, g.width_y, g.height_z, t_range[1]],
        )
    }

    pub fn normalize(&self, pos: Point3, t: f64) -> [f64; 4] {
        let v = [pos[0], pos[1], pos[2], t];
        std::array::from_fn(|i| 2.0 * (v[i] - self.min[i]) / (self.max[i] - self.min[i]) - 1.0)
    }

    pub fn denormalize(&self, q: [f64; 4]) -> (Point3, f64) {
        let v: [f64; 4] =
            std::array::from_fn(|i| self.min[i] + (q[i] + 1.0) * 0.5 * (self.max[i] - self.min[i]));
        ([v[0], v[1], v[2]], v[3])
    }

    /// d(normalized)/d(physical) per axis.
    pub fn scale(&self) -> [f64; 4] {
        std::array::from_fn(|i| 2.0 / (self.max[i] - self.min[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustRegionParams {
    /// Region size in normalized units.
    pub r: f64,
    pub buffer_capacity: usize,
    pub sigma_floor: f64,
    pub sigma_init: f64,
}

impl Default for TrustRegionParams {
    fn default() -> Self {
        TrustRegionParams { r: 1e-3, buffer_capacity: 10, sigma_floor: 1e-2, sigma_init: 1.0 }
    }
}

/// Region width calibration from the spread of recent parameter gradients.
#[derive(Debug, Clone)]
pub struct TrustRegionState {
    pub r: f64,
    pub sigma: f64,
    pub sigma_floor: f64,
    pub buffer_capacity: usize,
    grad_buffer: VecDeque<Vec<f64>>,
}

impl TrustRegionState {
    pub fn new(params: &TrustRegionParams) -> Self {
        TrustRegionState {
            r: params.r,
            sigma: params.sigma_init.max(params.sigma_floor),
            sigma_floor: params.sigma_floor,
            buffer_capacity: params.buffer_capacity.max(1),
            grad_buffer: VecDeque::new(),
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.grad_buffer.len()
    }

    /// Current upper bound of each perturbation component.
    pub fn width(&self) -> f64 {
        self.r / self.sigma
    }

    /// Records `grad` and recomputes sigma as the L1 norm of the elementwise
    /// population standard deviation over the buffer.
    pub fn update(&mut self, grad: &[f64]) -> Result<()> {
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        if let Some(front) = self.grad_buffer.front() {
            if front.len() != grad.len() {
                return Err(Error::LengthMismatch(front.len(), grad.len()));
            }
        }
        if self.grad_buffer.len() == self.buffer_capacity {
            let mut recycled = self.grad_buffer.pop_front().expect("capacity >= 1");
            recycled.copy_from_slice(grad);
            self.grad_buffer.push_back(recycled);
        } else {
            self.grad_buffer.push_back(grad.to_vec());
        }
        let n = self.grad_buffer.len() as f64;
        let mut l1 = 0.0;
        for j in 0..grad.len() {
            let mean = self.grad_buffer.iter().map(|g| g[j]).sum::<f64>() / n;
            let var = self.grad_buffer.iter().map(|g| (g[j] - mean).powi(2)).sum::<f64>() / n;
            l1 += var.sqrt();
        }
        self.sigma = l1.max(self.sigma_floor);
        Ok(())
    }
}

/// Shifts every point by a one-sided uniform offset in normalized space.
///
/// Interior and initial points that would leave their material keep their
/// original location; box-face points move only within their face; points
/// on cylinders are re-projected onto their radius. Supervision points are
/// returned unchanged.
pub fn perturb_region(
    points: &SampleSet,
    state: &TrustRegionState,
    g: &MonoblockGeometry,
    norm: &NormalizationSpec,
    rng: &mut ChaCha8Rng,
) -> SampleSet {
    let width = state.width();
    if width <= 0.0 {
        return points.clone();
    }
    let out = points
        .points
        .iter()
        .map(|p| {
            if p.category == Category::Supervision {
                return *p;
            }
            let xi: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..=width));
            perturb_point(p, xi, g, norm)
        })
        .collect();
    SampleSet { points: out }
}

fn shift(norm: &NormalizationSpec, p: &SamplePoint, xi: [f64; 4], mask: [bool; 4]) -> (Point3, f64) {
    let q = norm.normalize(p.pos, p.t);
    let moved: [f64; 4] =
        std::array::from_fn(|i| if mask[i] { (q[i] + xi[i]).clamp(-1.0, 1.0) } else { q[i] });
    let (mut pos, mut t) = norm.denormalize(moved);
    // keep untouched coordinates bit-exact
    for i in 0..3 {
        if !mask[i] {
            pos[i] = p.pos[i];
        }
    }
    if !mask[3] {
        t = p.t;
    }
    (pos, t)
}

fn perturb_point(p: &SamplePoint, xi: [f64; 4], g: &MonoblockGeometry, norm: &NormalizationSpec) -> SamplePoint {
    match p.category {
        Category::InteriorW | Category::InteriorCu | Category::InteriorCuCrZr | Category::Initial => {
            let moves_time = p.category != Category::Initial;
            let (pos, t) = shift(norm, p, xi, [true, true, true, moves_time]);
            if g.classify_material(pos) == g.classify_material(p.pos) {
                SamplePoint { pos, t, ..*p }
            } else {
                SamplePoint { t, ..*p }
            }
        }
        Category::TopBC | Category::AdiabaticBC => {
            let n = p.normal.unwrap_or([0.0, 0.0, 1.0]);
            let fixed = (0..3).find(|&i| n[i] != 0.0).unwrap_or(2);
            let mut mask = [true; 4];
            mask[fixed] = false;
            let (pos, t) = shift(norm, p, xi, mask);
            if g.radial_distance(pos) >= g.r_coolant {
                SamplePoint { pos, t, ..*p }
            } else {
                SamplePoint { t, ..*p }
            }
        }
        Category::ConvectiveBC | Category::IfaceCuCrZrCu | Category::IfaceCuW => {
            let radius = g.radial_distance(p.pos);
            let (moved, t) = shift(norm, p, xi, [true; 4]);
            let dx = moved[0] - g.pipe_axis_xy[0];
            let dy = moved[1] - g.pipe_axis_xy[1];
            let d = dx.hypot(dy);
            if d == 0.0 {
                return SamplePoint { t, ..*p };
            }
            let (c, s) = (dx / d, dy / d);
            let pos = [g.pipe_axis_xy[0] + radius * c, g.pipe_axis_xy[1] + radius * s, moved[2]];
            let sign = if p.category == Category::ConvectiveBC { -1.0 } else { 1.0 };
            SamplePoint { pos, t, normal: Some([sign * c, sign * s, 0.0]), ..*p }
        }
        Category::Supervision => *p,
    }
}
