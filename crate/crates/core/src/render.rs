//! PNG renders of 2D fields: green for negative, white at zero, red for positive, with the
//! zero level set of the phase field overdrawn in black.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extract::{sample_field_grid, FieldQuantity};
use crate::field::ScalarField;
use crate::geometry::Domain;
use crate::grid::ScalarGrid;

const NEGATIVE: [f64; 3] = [26.0, 150.0, 65.0];
const POSITIVE: [f64; 3] = [215.0, 25.0, 28.0];

/// Row-major RGB pixels, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn count(&self, colour: [u8; 3]) -> usize {
        self.rgb.chunks(3).filter(|p| *p == colour).count()
    }
}

/// Diverging colour of `v / scale`, clamped to `[-1, 1]`.
pub fn palette(v: f64, scale: f64) -> [u8; 3] {
    let t = (v / scale).clamp(-1.0, 1.0);
    let end = if t < 0.0 { NEGATIVE } else { POSITIVE };
    let a = t.abs();
    [0, 1, 2].map(|k| (255.0 + a * (end[k] - 255.0)).round() as u8)
}

/// Colours the nodes of a 2D grid (one pixel per node, `+y` up). Pixels whose sign in
/// `phase` differs from their right or lower neighbour are painted black.
pub fn colorize(values: &ScalarGrid, phase: Option<&ScalarGrid>, scale: f64) -> Result<Image> {
    if values.dim() != 2 {
        return Err(Error::invalid("renders need a 2D grid"));
    }
    let shape = values.shape();
    if let Some(p) = phase {
        if p.shape() != shape {
            return Err(Error::invalid("phase grid shape differs from the rendered grid"));
        }
    }
    let (w, h) = (shape[0], shape[1]);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut rgb = Vec::with_capacity(3 * w * h);
    for row in 0..h {
        let j = h - 1 - row;
        for i in 0..w {
            let mut c = palette(values.get(&[i, j]), scale);
            if let Some(p) = phase {
                let s = p.get(&[i, j]) > 0.0;
                let right = i + 1 < w && (p.get(&[i + 1, j]) > 0.0) != s;
                let below = j > 0 && (p.get(&[i, j - 1]) > 0.0) != s;
                if right || below {
                    c = [0, 0, 0];
                }
            }
            rgb.extend(c);
        }
    }
    Ok(Image {
        width: w,
        height: h,
        rgb,
    })
}

/// Renders `quantity` of a 2D field on a `size × size` image of pixel-centre samples.
///
/// `U` uses the fixed scale 1, `W` its largest magnitude, `GradNormError` is clipped to `[0, 1]`.
pub fn render_field(field: &dyn ScalarField, domain: &Domain, size: usize, quantity: FieldQuantity) -> Result<Image> {
    if domain.dim() != 2 || field.dim() != 2 {
        return Err(Error::invalid("renders need a 2D field"));
    }
    if size < 3 {
        return Err(Error::invalid("render size must be at least 3 pixels"));
    }
    // shrink by half a pixel so lattice nodes sit at pixel centres
    let half: Vec<f64> = (0..2).map(|k| 0.5 * (domain.upper[k] - domain.lower[k]) / size as f64).collect();
    let centres = Domain::new(
        (0..2).map(|k| domain.lower[k] + half[k]).collect(),
        (0..2).map(|k| domain.upper[k] - half[k]).collect(),
    )?;
    let res = [size - 1, size - 1];
    let phase = sample_field_grid(field, &centres, &res, FieldQuantity::U)?;
    let (values, scale) = match quantity {
        FieldQuantity::U => (phase.clone(), 1.0),
        FieldQuantity::W(_) => {
            let g = sample_field_grid(field, &centres, &res, quantity)?;
            let m = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (g, m)
        }
        FieldQuantity::GradNormError(_) => {
            let mut g = sample_field_grid(field, &centres, &res, quantity)?;
            g.values_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            (g, 1.0)
        }
    };
    colorize(&values, Some(&phase), scale)
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut w = enc.write_header().map_err(to_io)?;
    w.write_image_data(&img.rgb).map_err(to_io)?;
    w.finish().map_err(to_io)
}
