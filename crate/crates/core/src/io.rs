//! Field exchange formats: point CSV (`x,y,z,t,T`) and legacy-VTK
//! structured points.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::oracle::{FieldSnapshot, StructuredGrid};
use crate::sampling::fmt_f64;

/// One temperature sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub pos: Point3,
    pub t: f64,
    pub value: f64,
}

pub fn write_field_csv<W: Write>(points: &[FieldPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y", "z", "t", "T"])?;
    for p in points {
        w.write_record([fmt_f64(p.pos[0]), fmt_f64(p.pos[1]), fmt_f64(p.pos[2]), fmt_f64(p.t), fmt_f64(p.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,y,z,t` columns and, when present, a `T` column (NaN when
/// absent).
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<FieldPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let find = |n: &str| col(n).ok_or_else(|| Error::InvalidConfig(format!("points file lacks column `{n}`")));
    let (ix, iy, iz, it) = (find("x")?, find("y")?, find("z")?, find("t")?);
    let iv = col("T");
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("row {}: bad number in column {}", line + 2, i + 1)))
        };
        let value = match iv {
            Some(i) => num(i)?,
            None => f64::NAN,
        };
        out.push(FieldPoint { pos: [num(ix)?, num(iy)?, num(iz)?], t: num(it)?, value });
    }
    Ok(out)
}

/// Solid cells of one oracle snapshot as field points.
pub fn snapshot_points(grid: &StructuredGrid, snap: &FieldSnapshot) -> Vec<FieldPoint> {
    (0..grid.len())
        .filter(|&i| grid.cells[i].is_some())
        .map(|i| FieldPoint { pos: grid.center(i), t: snap.time, value: snap.values[i] })
        .collect()
}

/// Legacy ASCII VTK structured points with cell-centered samples stored
/// as point data. `values` has one entry per grid cell in x-fastest order;
/// cells without a value (coolant) are written as `fill` and marked 0 in
/// the `solid` array.
pub fn write_vtk<W: Write>(
    grid: &StructuredGrid,
    values: &[Option<f64>],
    fill: f64,
    title: &str,
    mut w: W,
) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch(values.len(), grid.len()));
    }
    let [nx, ny, nz] = grid.dims;
    let [dx, dy, dz] = grid.spacing;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or("field"))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
    writeln!(w, "ORIGIN {:?} {:?} {:?}", 0.5 * dx, 0.5 * dy, 0.5 * dz)?;
    writeln!(w, "SPACING {dx:?} {dy:?} {dz:?}")?;
    writeln!(w, "POINT_DATA {}", grid.len())?;
    writeln!(w, "SCALARS T double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{:?}", v.unwrap_or(fill))?;
    }
    writeln!(w, "SCALARS solid int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{}", u8::from(v.is_some()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshot_vtk<W: Write>(grid: &StructuredGrid, snap: &FieldSnapshot, fill: f64, w: W) -> Result<()> {
    let values: Vec<Option<f64>> = (0..grid.len()).map(|i| grid.cells[i].map(|_| snap.values[i])).collect();
    write_vtk(grid, &values, fill, &format!("temperature t={}", snap.time), w)
}
