//! Spatial model of the monoblock: box extents, coaxial material shells around
//! the cooling pipe, boundary classification and material constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in physical space, meters.
pub type Point3 = [f64; 3];

/// Solid materials of the monoblock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialId {
    W,
    Cu,
    CuCrZr,
}

impl MaterialId {
    pub const ALL: [MaterialId; 3] = [MaterialId::W, MaterialId::Cu, MaterialId::CuCrZr];

    /// Position in [`MaterialId::ALL`]; used to index per-material arrays.
    pub fn index(self) -> usize {
        match self {
            MaterialId::W => 0,
            MaterialId::Cu => 1,
            MaterialId::CuCrZr => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaterialId::W => "W",
            MaterialId::Cu => "Cu",
            MaterialId::CuCrZr => "CuCrZr",
        }
    }
}

/// Result of a point-in-region query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Solid(MaterialId),
    Coolant,
    Outside,
}

impl Region {
    pub fn material(self) -> Option<MaterialId> {
        match self {
            Region::Solid(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProps {
    /// Thermal conductivity, W/(m K).
    pub k: f64,
    /// Density, kg/m^3.
    pub rho: f64,
    /// Specific heat, J/(kg K).
    pub cp: f64,
}

impl MaterialProps {
    /// Volumetric heat capacity rho * cp.
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cp
    }

    pub fn diffusivity(&self) -> f64 {
        self.k / (self.rho * self.cp)
    }
}

pub fn material_props(m: MaterialId) -> MaterialProps {
    match m {
        MaterialId::W => MaterialProps { k: 173.0, rho: 19298.0, cp: 129.0 },
        MaterialId::Cu => MaterialProps { k: 403.0, rho: 8960.0, cp: 390.0 },
        MaterialId::CuCrZr => MaterialProps { k: 318.0, rho: 8920.0, cp: 388.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    TopConstantTemp,
    Adiabatic,
    CoolantConvective,
    InterfaceCuCrZrCu,
    InterfaceCuW,
}

/// Heated top surface condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Constant,
    Gaussian,
}

/// Robin condition at the coolant wall: `-k dT/dn = h (T - T_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvectiveSpec {
    /// Heat transfer coefficient, W/(m^2 K).
    pub h: f64,
    /// Coolant temperature, deg C.
    pub t_fluid: f64,
}

impl Default for ConvectiveSpec {
    fn default() -> Self {
        ConvectiveSpec { h: 1.0e5, t_fluid: 22.0 }
    }
}

/// Temperature imposed on the heated top face.
pub fn top_temperature(p: Point3, mode: BoundaryMode) -> f64 {
    match mode {
        BoundaryMode::Constant => 100.0,
        BoundaryMode::Gaussian => {
            let dx = p[0] - 0.014;
            300.0 * (-(dx * dx) / (0.006 * 0.006)).exp()
        }
    }
}

/// Box `[0, length_x] x [0, width_y] x [0, height_z]` pierced along z by a
/// cooling pipe surrounded by a CuCrZr tube and an OFHC-Cu interlayer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonoblockGeometry {
    pub length_x: f64,
    pub width_y: f64,
    pub height_z: f64,
    pub pipe_axis_xy: [f64; 2],
    pub r_coolant: f64,
    pub r_cucrzr_outer: f64,
    pub r_cu_outer: f64,
    pub convective: ConvectiveSpec,
}

impl Default for MonoblockGeometry {
    fn default() -> Self {
        MonoblockGeometry {
            length_x: 0.030,
            width_y: 0.028,
            height_z: 0.012,
            pipe_axis_xy: [0.015, 0.014],
            r_coolant: 0.006,
            r_cucrzr_outer: 0.0075,
            r_cu_outer: 0.0105,
            convective: ConvectiveSpec::default(),
        }
    }
}

/// Default analytic surface-membership tolerance, meters.
pub const SURFACE_TOL: f64 = 1e-9;

impl MonoblockGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.length_x, self.width_y, self.height_z, self.r_coolant];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("geometry extents and radii must be positive".into()));
        }
        if !(self.r_coolant < self.r_cucrzr_outer && self.r_cucrzr_outer < self.r_cu_outer) {
            return Err(Error::InvalidConfig(
                "radii must satisfy r_coolant < r_cucrzr_outer < r_cu_outer".into(),
            ));
        }
        let [ax, ay] = self.pipe_axis_xy;
        let clearance = ax.min(self.length_x - ax).min(ay).min(self.width_y - ay);
        if self.r_cu_outer >= clearance {
            return Err(Error::InvalidConfig("outer Cu shell must fit inside the box".into()));
        }
        if !(self.convective.h > 0.0) {
            return Err(Error::InvalidConfig("convective h must be positive".into()));
        }
        Ok(())
    }

    pub fn extents(&self) -> [f64; 3] {
        [self.length_x, self.width_y, self.height_z]
    }

    /// Distance from the pipe axis in the xy-plane.
    pub fn radial_distance(&self, p: Point3) -> f64 {
        (p[0] - self.pipe_axis_xy[0]).hypot(p[1] - self.pipe_axis_xy[1])
    }

    pub fn inside_box(&self, p: Point3) -> bool {
        let e = self.extents();
        (0..3).all(|i| p[i] >= 0.0 && p[i] <= e[i])
    }

    pub fn classify_material(&self, p: Point3) -> Region {
        if !self.inside_box(p) {
            return Region::Outside;
        }
        let d = self.radial_distance(p);
        if d < self.r_coolant {
            Region::Coolant
        } else if d < self.r_cucrzr_outer {
            Region::Solid(MaterialId::CuCrZr)
        } else if d < self.r_cu_outer {
            Region::Solid(MaterialId::Cu)
        } else {
            Region::Solid(MaterialId::W)
        }
    }

    /// Radial unit vector from the pipe axis through `p` (xy only).
    pub fn radial_unit(&self, p: Point3) -> [f64; 3] {
        let dx = p[0] - self.pipe_axis_xy[0];
        let dy = p[1] - self.pipe_axis_xy[1];
        let d = dx.hypot(dy);
        [dx / d, dy / d, 0.0]
    }

    /// Boundary kind and outward unit normal of the solid at `p`.
    ///
    /// Cylindrical surfaces are checked before box faces; interface normals
    /// point radially outward (inner material to outer material).
    pub fn classify_boundary(&self, p: Point3, tol: f64) -> Result<(BoundaryKind, [f64; 3])> {
        let e = self.extents();
        if !(0..3).all(|i| p[i] >= -tol && p[i] <= e[i] + tol) {
            return Err(Error::NotOnBoundary(p));
        }
        let d = self.radial_distance(p);
        if (d - self.r_coolant).abs() <= tol {
            let r = self.radial_unit(p);
            return Ok((BoundaryKind::CoolantConvective, [-r[0], -r[1], 0.0]));
        }
        if (d - self.r_cucrzr_outer).abs() <= tol {
            return Ok((BoundaryKind::InterfaceCuCrZrCu, self.radial_unit(p)));
        }
        if (d - self.r_cu_outer).abs() <= tol {
            return Ok((BoundaryKind::InterfaceCuW, self.radial_unit(p)));
        }
        if d < self.r_coolant {
            // coolant disk on the top/bottom faces is not a solid boundary
            return Err(Error::NotOnBoundary(p));
        }
        if (p[2] - e[2]).abs() <= tol {
            return Ok((BoundaryKind::TopConstantTemp, [0.0, 0.0, 1.0]));
        }
        let faces: [(usize, f64, f64); 5] = [
            (2, 0.0, -1.0),
            (0, 0.0, -1.0),
            (0, e[0], 1.0),
            (1, 0.0, -1.0),
            (1, e[1], 1.0),
        ];
        for (axis, at, sign) in faces {
            if (p[axis] - at).abs() <= tol {
                let mut n = [0.0; 3];
                n[axis] = sign;
                return Ok((BoundaryKind::Adiabatic, n));
            }
        }
        Err(Error::NotOnBoundary(p))
    }

    /// Analytic cross-section areas (xy-plane) of coolant, CuCrZr, Cu and W.
    pub fn section_areas(&self) -> [f64; 4] {
        use std::f64::consts::PI;
        let disk = |r: f64| PI * r * r;
        let coolant = disk(self.r_coolant);
        let cucrzr = disk(self.r_cucrzr_outer) - coolant;
        let cu = disk(self.r_cu_outer) - disk(self.r_cucrzr_outer);
        let w = self.length_x * self.width_y - disk(self.r_cu_outer);
        [coolant, cucrzr, cu, w]
    }
}
