//! Synthetic tables, anonymisation and rotation corruptions, dataset I/O.

mod anonymise;
mod io;
mod render;
mod rotate;

pub use anonymise::{anonymise, AnonymMethod, BLUR_SIGMA_FRACTION, NOISE_SIGMA, PIXEL_BLOCK};
pub use io::{decode_ppm, encode_ppm, read_dataset, read_ppm, write_dataset, write_ppm, INDEX_FILE};
pub use render::{random_table_spec, render_synthetic, RenderStyle, TableSpec};
pub use rotate::{rotate_image, rotate_point, rotate_sample, rotate_sample_by};

use serde::{Deserialize, Serialize};

use crate::axial::GridSpec;
use crate::error::{Error, Result};
use crate::grid::SpanGrid;
use crate::model::Caps;
use crate::numerics::Tensor;
use crate::structure::{build_structure, TableStructure};

/// Pixel rectangle `[x0, y0, x1, y1]` with exclusive ends.
pub type PixelBox = [usize; 4];

/// Ground-truth polylines, `K` samples per boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polylines {
    pub row_polys: Vec<Vec<f64>>,
    pub col_polys: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `[3, H, W]` in `[0, 1]`.
    pub image: Tensor,
    pub grid: GridSpec,
    pub spans: SpanGrid,
    pub text_boxes: Vec<PixelBox>,
    pub polylines: Option<Polylines>,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn structure(&self) -> Result<TableStructure> {
        build_structure(&self.grid, &self.spans)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Dataset {
            sample: self.id.clone(),
            message,
        };
        self.grid.validate().map_err(|e| fail(e.to_string()))?;
        if !self.spans.tiles() || self.spans.rows != self.grid.rows || self.spans.cols != self.grid.cols {
            return Err(fail("spans do not tile the grid".into()));
        }
        let s = self.image.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(fail(format!("image shape {s:?}")));
        }
        if let Some(b) = self.text_boxes.iter().find(|b| b[0] > b[2] || b[1] > b[3] || b[2] > s[2] || b[3] > s[1]) {
            return Err(fail(format!("text box {b:?} outside the {}x{} image", s[2], s[1])));
        }
        Ok(())
    }

    /// Checks that the ground truth fits the model's caps.
    pub fn check_caps(&self, caps: &Caps) -> Result<()> {
        let fail = |message: String| Error::Dataset {
            sample: self.id.clone(),
            message,
        };
        if self.grid.rows > caps.r_max || self.grid.cols > caps.c_max {
            return Err(fail(format!(
                "{}x{} grid exceeds caps {}x{}",
                self.grid.rows, self.grid.cols, caps.r_max, caps.c_max
            )));
        }
        for (r, c, rs, cs) in self.spans.anchors() {
            if rs > caps.rs_max || cs > caps.cs_max {
                return Err(fail(format!("span {rs}x{cs} at ({r},{c}) exceeds caps {}x{}", caps.rs_max, caps.cs_max)));
            }
        }
        Ok(())
    }
}
