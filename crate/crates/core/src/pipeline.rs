//! End-to-end inference: image to HTML, timed per stage.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::axial::{decode_boundaries, decode_counts, GridSpec};
use crate::curved::{curved_cells, decode_curved, CurvedGrid};
use crate::encoder::prepare_image;
use crate::error::Result;
use crate::grid::{argmax, grid_cells, resolve_spans};
use crate::model::FastTab;
use crate::numerics::{Tape, Tensor};
use crate::structure::{build_structure, to_html, TableStructure};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferOptions {
    /// Pool cells under curved separators instead of the straight grid.
    pub curved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub micros: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub structure: TableStructure,
    pub html: String,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curved: Option<CurvedGrid>,
    pub timings: Vec<StageTiming>,
    /// Wall clock from the start of image transfer to the finished HTML.
    pub total_micros: f64,
}

struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<StageTiming>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Clock {
            start: now,
            last: now,
            stages: Vec::with_capacity(9),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            micros: (now - self.last).as_secs_f64() * 1e6,
        });
        self.last = now;
    }
}

fn rows_of(t: &Tensor, n: usize) -> Vec<Vec<f64>> {
    let k = t.last_dim();
    t.data().chunks(k).take(n).map(<[f64]>::to_vec).collect()
}

/// Runs the full model with dropout off. Errors carry the failing stage.
pub fn infer(model: &FastTab, image: &Tensor, opts: InferOptions) -> Result<InferenceResult> {
    let mut clock = Clock::new();
    let tape = Tape::inference();
    let p = model.params.bind(&tape);

    let x = tape.constant(prepare_image(image).map_err(|e| e.in_stage("transfer"))?);
    clock.lap("transfer");
    let features = model.encoder_forward(&tape, &p, x).map_err(|e| e.in_stage("encode"))?;
    clock.lap("encode");
    let z = model.refine(&tape, &p, features).map_err(|e| e.in_stage("refine"))?;
    clock.lap("refine");
    let (rows_enc, cols_enc) = model.axial(&tape, &p, features).map_err(|e| e.in_stage("axial"))?;
    clock.lap("axial");
    let (cr, cc, hd, ri, ci) = model.heads(&tape, &p, z, rows_enc, cols_enc).map_err(|e| e.in_stage("heads"))?;
    clock.lap("heads");

    let decode = || -> Result<(GridSpec, Option<CurvedGrid>)> {
        let (rows, cols, header) = decode_counts(tape.value(cr).data(), tape.value(cc).data(), tape.value(hd).data());
        let row_bounds = decode_boundaries(tape.value(ri).data(), rows)?;
        let col_bounds = decode_boundaries(tape.value(ci).data(), cols)?;
        let grid = GridSpec::new(rows, cols, header, row_bounds, col_bounds)?;
        if !opts.curved {
            return Ok((grid, None));
        }
        let (ro, co) = model.curved_offsets(&tape, &p, rows_enc, cols_enc)?;
        let (ro, co) = (tape.to_tensor(ro), tape.to_tensor(co));
        let cg = decode_curved(&grid, &rows_of(&ro, rows + 1), &rows_of(&co, cols + 1), None);
        Ok((grid, Some(cg)))
    };
    let (grid, curved) = decode().map_err(|e| e.in_stage("decode"))?;
    clock.lap("decode");

    let rects = match &curved {
        Some(cg) => curved_cells(cg),
        None => grid_cells(&grid),
    };
    let pooled = model.pool(&tape, features, &rects).map_err(|e| e.in_stage("roi"))?;
    clock.lap("roi");
    let (rs, cs) = model.span_logits(&tape, &p, pooled).map_err(|e| e.in_stage("span"))?;
    let classes = |v: &Tensor| -> Vec<usize> { v.data().chunks(v.last_dim()).map(|row| argmax(row) + 1).collect() };
    let (rs_pred, cs_pred) = (classes(&tape.value(rs)), classes(&tape.value(cs)));
    clock.lap("span");

    let spans = resolve_spans(&rs_pred, &cs_pred, grid.rows, grid.cols);
    let structure = build_structure(&grid, &spans).map_err(|e| e.in_stage("assemble"))?;
    let html = to_html(&structure);
    clock.lap("assemble");
    let total_micros = clock.start.elapsed().as_secs_f64() * 1e6;
    Ok(InferenceResult {
        structure,
        html,
        grid,
        curved,
        timings: clock.stages,
        total_micros,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::ModelConfig;
    use crate::structure::parse_html_structure;

    #[test]
    fn zero_weights_give_one_cell() {
        let mut m = FastTab::new(ModelConfig::tiny(), 0).unwrap();
        m.params.tensors_mut().for_each(|t| t.data_mut().fill(0.0));
        let r = infer(&m, &Tensor::full(&[3, 40, 40], 0.7), InferOptions::default()).unwrap();
        assert_eq!((r.grid.rows, r.grid.cols, r.grid.header_rows), (1, 1, 0));
        assert_eq!(r.html, "<table><tbody><tr><td></td></tr></tbody></table>");
    }

    #[test]
    fn deterministic_and_parseable() {
        let m = FastTab::new(ModelConfig::tiny(), 3).unwrap();
        let img = Tensor::from_fn(&[3, 37, 52], |i| ((i * 31) % 17) as f64 / 17.0);
        let a = infer(&m, &img, InferOptions::default()).unwrap();
        let b = infer(&m, &img, InferOptions::default()).unwrap();
        assert_eq!(a.html, b.html);
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.html, to_html(&a.structure));
        let back = parse_html_structure(&a.html).unwrap();
        assert_eq!(back, a.structure);
        let names: Vec<_> = a.timings.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(names, ["transfer", "encode", "refine", "axial", "heads", "decode", "roi", "span", "assemble"]);
    }

    #[test]
    fn zero_offsets_match_straight() {
        let mut m = FastTab::new(ModelConfig::tiny(), 4).unwrap();
        m.zero_curved_head();
        let img = Tensor::from_fn(&[3, 48, 40], |i| ((i * 13) % 7) as f64 / 7.0);
        let a = infer(&m, &img, InferOptions::default()).unwrap();
        let b = infer(&m, &img, InferOptions { curved: true }).unwrap();
        assert_eq!(a.html, b.html);
        assert!(b.curved.is_some());
    }

    #[test]
    fn bad_image_names_stage() {
        let m = FastTab::new(ModelConfig::tiny(), 0).unwrap();
        let err = infer(&m, &Tensor::zeros(&[1, 4, 4]), InferOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "transfer", .. }));
    }
}
