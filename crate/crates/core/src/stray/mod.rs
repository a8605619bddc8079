//! Magnetostatic forward model: the stray field a shallow NV layer senses
//! below uniformly magnetized thin-film regions.
//!
//! Regions are rasterized into point dipoles on a square lattice and the
//! field is summed at every pixel of the sensing plane `z = -standoff`.
//! Magnet midplanes sit at `z = 0`.

pub mod polygon;
mod prism;

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::nv::FieldVector;
use crate::MU0_OVER_4PI;
pub use polygon::Point2;
pub use prism::prism_field_oracle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrayError {
    #[error("remanent state must be 1..=4, got {0}")]
    BadState(u8),
    #[error("scene produced no dipoles")]
    EmptyScene,
    #[error("evaluation point within cell_size/10 of a dipole")]
    SingularPoint,
    #[error("evaluation point inside the prism")]
    InsidePrism,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// A uniformly magnetized thin-film region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Outline in the magnet plane, meters.
    pub polygon: Vec<Point2>,
    /// A/m.
    pub magnetization: [f64; 3],
    /// Meters.
    pub thickness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width_px: usize,
    pub height_px: usize,
    /// Meters.
    pub pixel_pitch: f64,
}

impl Grid {
    /// Pixel-center coordinates; the grid is centered on the origin and `y`
    /// grows with the row index.
    pub fn pixel_position(&self, x: usize, y: usize) -> Point2 {
        [
            (x as f64 - (self.width_px as f64 - 1.0) / 2.0) * self.pixel_pitch,
            (y as f64 - (self.height_px as f64 - 1.0) / 2.0) * self.pixel_pitch,
        ]
    }

    pub fn len(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Magnetized regions plus the sensing geometry.
///
/// When regions overlap, the region listed last owns the shared cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub regions: Vec<Region>,
    /// Distance from the magnet midplane down to the sensing plane, meters.
    pub standoff: f64,
    pub grid: Grid,
    /// Rasterization cell edge, meters.
    pub cell_size: f64,
}

/// Default permalloy-like saturation magnetization, A/m.
pub const DEFAULT_MAGNETIZATION: f64 = 8.0e5;

impl Scene {
    pub fn validate(&self) -> Result<(), StrayError> {
        let bad = |s: &str| Err(StrayError::InvalidScene(s.to_owned()));
        if !(self.standoff > 0.0) {
            return bad("standoff must be positive");
        }
        if !(self.cell_size > 0.0) {
            return bad("cell_size must be positive");
        }
        if !(self.grid.pixel_pitch > 0.0) {
            return bad("pixel_pitch must be positive");
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.thickness > 0.0) {
                return Err(StrayError::InvalidScene(format!("region {i}: thickness must be positive")));
            }
            if !polygon::is_simple(&r.polygon) {
                return Err(StrayError::InvalidScene(format!("region {i}: polygon is not simple")));
            }
            if !r.magnetization.iter().all(|m| m.is_finite()) {
                return Err(StrayError::InvalidScene(format!("region {i}: non-finite magnetization")));
            }
        }
        Ok(())
    }

    /// Same field of view sampled on a `width × height` grid.
    pub fn resampled(&self, width_px: usize, height_px: usize) -> Scene {
        let fov = self.grid.pixel_pitch * self.grid.width_px as f64;
        Scene {
            grid: Grid {
                width_px,
                height_px,
                pixel_pitch: fov / width_px as f64,
            },
            ..self.clone()
        }
    }

    /// Copy with every magnetization multiplied by `k`.
    pub fn scaled_magnetization(&self, k: f64) -> Scene {
        let mut s = self.clone();
        for r in &mut s.regions {
            r.magnetization = r.magnetization.map(|m| m * k);
        }
        s
    }
}

/// Two crossing 40 μm × 5 μm ellipses in one of their four remanent states.
///
/// State `k` magnetizes the overlap along `45° + (k-1)·90°`; each arm is
/// magnetized along its own major axis with the sign matching the overlap.
pub fn default_cross_scene(state_index: u8) -> Result<Scene, StrayError> {
    if !(1..=4).contains(&state_index) {
        return Err(StrayError::BadState(state_index));
    }
    let (sx, sy) = match state_index {
        1 => (1.0, 1.0),
        2 => (-1.0, 1.0),
        3 => (-1.0, -1.0),
        _ => (1.0, -1.0),
    };
    let ms = DEFAULT_MAGNETIZATION;
    let thickness = 100e-9;
    let (a, b) = (20e-6, 2.5e-6);
    let horizontal = polygon::ellipse([0.0, 0.0], a, b, 0.0, 256);
    let vertical = polygon::ellipse([0.0, 0.0], a, b, std::f64::consts::FRAC_PI_2, 256);
    let overlap = polygon::clip_convex(&horizontal, &vertical);
    Ok(Scene {
        regions: vec![
            Region {
                polygon: horizontal,
                magnetization: [sx * ms, 0.0, 0.0],
                thickness,
            },
            Region {
                polygon: vertical,
                magnetization: [0.0, sy * ms, 0.0],
                thickness,
            },
            Region {
                polygon: overlap,
                magnetization: [sx * ms * FRAC_1_SQRT_2, sy * ms * FRAC_1_SQRT_2, 0.0],
                thickness,
            },
        ],
        standoff: 500e-9,
        grid: Grid {
            width_px: 512,
            height_px: 512,
            pixel_pitch: 161.6e-9,
        },
        cell_size: 100e-9,
    })
}

/// Point dipoles in structure-of-arrays layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DipoleSet {
    pub cell_size: f64,
    /// Positions, meters.
    pub positions: Vec<[f64; 3]>,
    /// Moments, A·m².
    pub moments: Vec<[f64; 3]>,
}

impl DipoleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_moment(&self) -> [f64; 3] {
        self.moments.iter().fold([0.0; 3], |acc, m| [acc[0] + m[0], acc[1] + m[1], acc[2] + m[2]])
    }
}

/// Binary center-in-polygon rasterization on the lattice `(i + ½)·cell_size`.
pub fn rasterize(scene: &Scene) -> Result<DipoleSet, StrayError> {
    scene.validate()?;
    let c = scene.cell_size;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let boxes: Vec<(Point2, Point2)> = scene
        .regions
        .iter()
        .map(|r| polygon::bounding_box(&r.polygon))
        .collect();
    for (l, h) in &boxes {
        for k in 0..2 {
            lo[k] = lo[k].min(l[k]);
            hi[k] = hi[k].max(h[k]);
        }
    }
    let mut set = DipoleSet {
        cell_size: c,
        ..Default::default()
    };
    if scene.regions.is_empty() {
        return Err(StrayError::EmptyScene);
    }
    let (i0, i1) = ((lo[0] / c).floor() as i64, (hi[0] / c).ceil() as i64);
    let (j0, j1) = ((lo[1] / c).floor() as i64, (hi[1] / c).ceil() as i64);
    for j in j0..j1 {
        let y = (j as f64 + 0.5) * c;
        for i in i0..i1 {
            let x = (i as f64 + 0.5) * c;
            let owner = scene.regions.iter().zip(&boxes).rposition(|(r, (l, h))| {
                x >= l[0] && x <= h[0] && y >= l[1] && y <= h[1] && polygon::contains(&r.polygon, [x, y])
            });
            if let Some(k) = owner {
                let r = &scene.regions[k];
                let vol = c * c * r.thickness;
                set.positions.push([x, y, 0.0]);
                set.moments.push(r.magnetization.map(|m| m * vol));
            }
        }
    }
    if set.is_empty() {
        return Err(StrayError::EmptyScene);
    }
    Ok(set)
}

/// Superposed point-dipole field at `position`, summed in dipole order.
pub fn dipole_field(position: [f64; 3], dipoles: &DipoleSet) -> Result<FieldVector, StrayError> {
    let min_r2 = (dipoles.cell_size / 10.0).powi(2);
    let mut b = [0.0; 3];
    for (p, m) in dipoles.positions.iter().zip(&dipoles.moments) {
        let r = [position[0] - p[0], position[1] - p[1], position[2] - p[2]];
        let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        if r2 <= min_r2 {
            return Err(StrayError::SingularPoint);
        }
        let inv_r = r2.sqrt().recip();
        let inv_r3 = inv_r * inv_r * inv_r;
        let inv_r5 = inv_r3 * inv_r * inv_r;
        let mdotr = m[0] * r[0] + m[1] * r[1] + m[2] * r[2];
        for k in 0..3 {
            b[k] += 3.0 * mdotr * r[k] * inv_r5 - m[k] * inv_r3;
        }
    }
    Ok(FieldVector::from_array(b.map(|v| v * MU0_OVER_4PI)))
}

/// Per-pixel field on a grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldMap {
    pub width_px: usize,
    pub height_px: usize,
    pub pixel_pitch: f64,
    pub data: Vec<FieldVector>,
}

impl FieldMap {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            width_px: grid.width_px,
            height_px: grid.height_px,
            pixel_pitch: grid.pixel_pitch,
            data: vec![FieldVector::ZERO; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        Grid {
            width_px: self.width_px,
            height_px: self.height_px,
            pixel_pitch: self.pixel_pitch,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> FieldVector {
        self.data[y * self.width_px + x]
    }

    /// Apply the clamped 3×3 box filter used on ODMR cubes to each component.
    pub fn box_filtered_3x3(&self) -> FieldMap {
        let (w, h) = (self.width_px, self.height_px);
        let data = (0..w * h)
            .map(|idx| {
                let (x, y) = (idx % w, idx / w);
                let mut acc = FieldVector::ZERO;
                let mut n = 0.0;
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        acc = acc + self.get(xx, yy);
                        n += 1.0;
                    }
                }
                acc.scale(1.0 / n)
            })
            .collect();
        FieldMap { data, ..self.clone() }
    }
}

/// Field at every pixel center of the sensing plane `z = -standoff`.
pub fn field_map(scene: &Scene, exec: Execution) -> Result<FieldMap, StrayError> {
    scene.validate()?;
    if scene.regions.is_empty() {
        return Ok(FieldMap::zeros(scene.grid));
    }
    let dipoles = rasterize(scene)?;
    field_map_from_dipoles(&dipoles, scene.grid, scene.standoff, exec)
}

/// Evaluate a pre-rasterized dipole set on a grid at `z = -standoff`.
pub fn field_map_from_dipoles(
    dipoles: &DipoleSet,
    grid: Grid,
    standoff: f64,
    exec: Execution,
) -> Result<FieldMap, StrayError> {
    let w = grid.width_px;
    let values = exec.map_indexed(grid.len(), |idx| {
        let [x, y] = grid.pixel_position(idx % w, idx / w);
        dipole_field([x, y, -standoff], dipoles)
    });
    let data = values.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(FieldMap {
        width_px: grid.width_px,
        height_px: grid.height_px,
        pixel_pitch: grid.pixel_pitch,
        data,
    })
}
