use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PixelBox, Polylines, Sample};
use crate::axial::GridSpec;
use crate::error::{Error, Result};
use crate::grid::SpanGrid;
use crate::numerics::Tensor;

pub const INDEX_FILE: &str = "index.jsonl";
const IMAGE_DIR: &str = "images";

#[derive(Serialize, Deserialize)]
struct CellRecord {
    r: usize,
    c: usize,
    rs: usize,
    cs: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    image: String,
    #[serde(rename = "R")]
    rows: usize,
    #[serde(rename = "C")]
    cols: usize,
    header_rows: usize,
    row_bounds: Vec<f64>,
    col_bounds: Vec<f64>,
    cells: Vec<CellRecord>,
    text_boxes: Vec<PixelBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row_polys: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    col_polys: Option<Vec<Vec<f64>>>,
}

fn quantise(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `[3, H, W]` image in `[0, 1]` as binary 8-bit PPM.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Input(format!("PPM needs a [3, H, W] image, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    out.reserve(3 * h * w);
    for i in 0..h * w {
        for c in 0..3 {
            out.push(quantise(d[c * h * w + i]));
        }
    }
    Ok(out)
}

pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

/// Decodes binary PPM (P6, maxval ≤ 255) into a `[3, H, W]` tensor.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let bad = |m: &str| Error::Input(format!("bad PPM: {m}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("only binary P6 is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(bad("unsupported dimensions or maxval"));
    }
    pos += 1;
    let body = bytes.get(pos..pos + 3 * w * h).ok_or_else(|| bad("truncated pixel data"))?;
    let mut data = vec![0.0; 3 * h * w];
    for (i, px) in body.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f64 / maxval as f64;
        }
    }
    Tensor::new(vec![3, h, w], data)
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    decode_ppm(&fs::read(path)?)
}

/// Writes `images/<id>.ppm` plus one index line per sample, in order.
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGE_DIR))?;
    let mut index = fs::File::create(dir.join(INDEX_FILE))?;
    for s in samples {
        let image = format!("{IMAGE_DIR}/{}.ppm", s.id);
        write_ppm(&dir.join(&image), &s.image)?;
        let rec = Record {
            id: s.id.clone(),
            image,
            rows: s.grid.rows,
            cols: s.grid.cols,
            header_rows: s.grid.header_rows,
            row_bounds: s.grid.row_bounds.clone(),
            col_bounds: s.grid.col_bounds.clone(),
            cells: s.spans.anchors().into_iter().map(|(r, c, rs, cs)| CellRecord { r, c, rs, cs }).collect(),
            text_boxes: s.text_boxes.clone(),
            row_polys: s.polylines.as_ref().map(|p| p.row_polys.clone()),
            col_polys: s.polylines.as_ref().map(|p| p.col_polys.clone()),
        };
        serde_json::to_writer(&mut index, &rec)?;
        index.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]. Images are quantised to 8
/// bits, so pixels come back rounded.
pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let index = fs::File::open(dir.join(INDEX_FILE))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(index).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            sample: format!("line {}", n + 1),
            message: e.to_string(),
        })?;
        let fail = |message: String| Error::Dataset {
            sample: rec.id.clone(),
            message,
        };
        let grid = GridSpec::new(rec.rows, rec.cols, rec.header_rows, rec.row_bounds.clone(), rec.col_bounds.clone())
            .map_err(|e| fail(e.to_string()))?;
        let anchors: Vec<_> = rec.cells.iter().map(|c| (c.r, c.c, c.rs, c.cs)).collect();
        let spans = SpanGrid::from_anchors(rec.rows, rec.cols, &anchors).map_err(|e| fail(e.to_string()))?;
        let image = read_ppm(&dir.join(&rec.image)).map_err(|e| fail(e.to_string()))?;
        let polylines = match (rec.row_polys, rec.col_polys) {
            (Some(row_polys), Some(col_polys)) => Some(Polylines { row_polys, col_polys }),
            (None, None) => None,
            _ => return Err(fail("row_polys and col_polys must appear together".into())),
        };
        let s = Sample {
            id: rec.id,
            image,
            grid,
            spans,
            text_boxes: rec.text_boxes,
            polylines,
        };
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}
