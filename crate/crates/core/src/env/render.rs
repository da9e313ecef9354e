//! Flat egocentric rendering.
//!
//! Each view shows a `view_depth × view_width` block of cells starting at the
//! agent's own row and extending along the view direction, drawn top-down with
//! the far row at the top of the image. Left and right views use the heading
//! rotated by 90°.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::{AgentState, Heading};
use super::world::{Cell, GridWorld, Pos};
use crate::error::{Error, Result};

pub const FLOOR_RGB: [f32; 3] = [0.25, 0.25, 0.25];
pub const WALL_RGB: [f32; 3] = [0.55, 0.45, 0.35];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Side length in pixels of each square view.
    pub image_size: usize,
    /// Rows of cells visible along the view direction (agent row included).
    pub view_depth: usize,
    /// Columns of cells across the view; must be odd.
    pub view_width: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            view_depth: 5,
            view_width: 5,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.view_depth == 0 || self.view_width % 2 == 0 {
            return Err(Error::InvalidConfig(
                "render needs positive image size and depth and an odd view width".into(),
            ));
        }
        Ok(())
    }
}

/// Square RGB image, row-major with interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub size: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(size: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(size * size * 3);
        for _ in 0..size * size {
            data.extend_from_slice(&rgb);
        }
        Self { size, data }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.size + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn count_pixels(&self, rgb: [f32; 3]) -> usize {
        self.data.chunks_exact(3).filter(|p| p == &rgb).count()
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.size as u32, self.size as u32, |x, y| {
            let p = self.pixel(y as usize, x as usize);
            image::Rgb(p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub left: Image,
    pub front: Image,
    pub right: Image,
    pub view_depth: usize,
}

impl Observation {
    pub fn views(&self) -> [&Image; 3] {
        [&self.left, &self.front, &self.right]
    }

    /// Writes the three views side by side, separated by one black column.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let s = self.front.size as u32;
        let mut canvas = image::RgbImage::new(3 * s + 2, s);
        for (i, view) in self.views().into_iter().enumerate() {
            let img = view.to_rgb8();
            image::imageops::replace(&mut canvas, &img, (i as u32 * (s + 1)) as i64, 0);
        }
        canvas.save(path)?;
        Ok(())
    }
}

/// Cell shown at `(fwd, lat)` of a view facing `dir` from `origin`.
pub fn view_cell(origin: Pos, dir: Heading, fwd: i32, lat: i32) -> Pos {
    let (fx, fy) = dir.delta();
    let (rx, ry) = dir.right().delta();
    Pos::new(origin.x + fwd * fx + lat * rx, origin.y + fwd * fy + lat * ry)
}

/// All cells covered by a view, with their (forward, lateral) offsets.
pub fn view_cells(origin: Pos, dir: Heading, cfg: &RenderConfig) -> Vec<(i32, i32, Pos)> {
    let half = (cfg.view_width / 2) as i32;
    let mut out = Vec::with_capacity(cfg.view_depth * cfg.view_width);
    for fwd in 0..cfg.view_depth as i32 {
        for lat in -half..=half {
            out.push((fwd, lat, view_cell(origin, dir, fwd, lat)));
        }
    }
    out
}

pub fn render_view(world: &GridWorld, origin: Pos, dir: Heading, cfg: &RenderConfig) -> Image {
    let n = cfg.image_size;
    let depth = cfg.view_depth;
    let width = cfg.view_width;
    let half = (width / 2) as i32;
    let mut img = Image::filled(n, FLOOR_RGB);
    for row in 0..n {
        let fwd = (depth - 1 - row * depth / n) as i32;
        for col in 0..n {
            let lat = (col * width / n) as i32 - half;
            let cell = view_cell(origin, dir, fwd, lat);
            let rgb = match world.object_at(cell) {
                Some(o) => o.color.rgb(),
                None => match world.cell(cell) {
                    Cell::Floor => FLOOR_RGB,
                    Cell::Wall => WALL_RGB,
                },
            };
            let i = (row * n + col) * 3;
            img.data[i..i + 3].copy_from_slice(&rgb);
        }
    }
    img
}

pub fn render(world: &GridWorld, state: &AgentState, cfg: &RenderConfig) -> Observation {
    Observation {
        left: render_view(world, state.pos, state.heading.left(), cfg),
        front: render_view(world, state.pos, state.heading, cfg),
        right: render_view(world, state.pos, state.heading.right(), cfg),
        view_depth: cfg.view_depth,
    }
}
