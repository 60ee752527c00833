use super::{PixelBox, Polylines, Sample};
use crate::axial::GridSpec;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

const SNAP: f64 = 1e-12;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

fn trig(theta_deg: f64) -> (f64, f64) {
    let t = theta_deg.to_radians();
    (snap(t.cos()), snap(t.sin()))
}

/// Rotates `(x, y)` counter-clockwise on screen (y pointing down) by
/// `theta_deg` about `centre`.
pub fn rotate_point(p: (f64, f64), centre: (f64, f64), theta_deg: f64) -> (f64, f64) {
    let (cos, sin) = trig(theta_deg);
    let (dx, dy) = (p.0 - centre.0, p.1 - centre.1);
    (centre.0 + cos * dx + sin * dy, centre.1 - sin * dx + cos * dy)
}

fn canvas_size(w: usize, h: usize, cos: f64, sin: f64) -> (usize, usize) {
    let (w, h) = (w as f64, h as f64);
    let nw = (cos.abs() * w + sin.abs() * h - 1e-9).ceil().max(1.0) as usize;
    let nh = (sin.abs() * w + cos.abs() * h - 1e-9).ceil().max(1.0) as usize;
    (nw, nh)
}

/// Rotates a `[3, H, W]` image about its centre onto a canvas large enough
/// to hold the whole result. Uncovered pixels are white; sampling is
/// bilinear with white outside the source.
pub fn rotate_image(image: &Tensor, theta_deg: f64) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::Input(format!("expected a [C, H, W] image, got {s:?}")));
    }
    let (ch, h, w) = (s[0], s[1], s[2]);
    let (cos, sin) = trig(theta_deg);
    let (nw, nh) = canvas_size(w, h, cos, sin);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (ncx, ncy) = (nw as f64 / 2.0, nh as f64 / 2.0);
    let src = image.data();
    let mut out = vec![1.0; ch * nh * nw];
    for y in 0..nh {
        for x in 0..nw {
            let (u, v) = (x as f64 + 0.5 - ncx, y as f64 + 0.5 - ncy);
            let sx = cos * u - sin * v + cx - 0.5;
            let sy = sin * u + cos * v + cy - 0.5;
            let (fx, fy) = (sx.floor(), sy.floor());
            let (ax, ay) = (sx - fx, sy - fy);
            let taps = [
                (fx, fy, (1.0 - ax) * (1.0 - ay)),
                (fx + 1.0, fy, ax * (1.0 - ay)),
                (fx, fy + 1.0, (1.0 - ax) * ay),
                (fx + 1.0, fy + 1.0, ax * ay),
            ];
            if taps.iter().all(|&(tx, ty, wt)| wt == 0.0 || tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64) {
                continue;
            }
            for c in 0..ch {
                let mut acc = 0.0;
                for &(tx, ty, wt) in &taps {
                    if wt == 0.0 {
                        continue;
                    }
                    let inside = tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64;
                    let val = if inside { src[(c * h + ty as usize) * w + tx as usize] } else { 1.0 };
                    acc += wt * val;
                }
                out[(c * nh + y) * nw + x] = acc;
            }
        }
    }
    Tensor::new(vec![ch, nh, nw], out)
}

/// Samples `ys` at uniform `t` in `[0, 1]` treating the curve as a function
/// of `xs`, extrapolating linearly past either end.
fn resample(xs: &[f64], ys: &[f64], k: usize) -> Vec<f64> {
    let (mut xs, mut ys) = (xs.to_vec(), ys.to_vec());
    if xs.first() > xs.last() {
        xs.reverse();
        ys.reverse();
    }
    let n = xs.len();
    (0..k)
        .map(|i| {
            let t = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
            let j = xs[1..n - 1].partition_point(|&x| x < t);
            let (x0, x1, y0, y1) = (xs[j], xs[j + 1], ys[j], ys[j + 1]);
            let v = if (x1 - x0).abs() < 1e-15 { 0.5 * (y0 + y1) } else { y0 + (t - x0) / (x1 - x0) * (y1 - y0) };
            v.clamp(0.0, 1.0)
        })
        .collect()
}

fn straight(bounds: &[f64], k: usize) -> Vec<Vec<f64>> {
    bounds.iter().map(|&b| vec![b; k]).collect()
}

/// Rotates a sample by an angle drawn from `U(−alpha, alpha)` degrees. The
/// grid becomes `k`-point polylines normalised to the rotated table's
/// bounding box; the base grid holds their means with the outer boundaries
/// pinned to 0 and 1. `alpha = 0` returns the image unchanged.
pub fn rotate_sample(s: &Sample, alpha_deg: f64, k: usize, rng: &mut Rng) -> Result<Sample> {
    if !(alpha_deg >= 0.0) || k < 2 {
        return Err(Error::Config(format!("rotation needs alpha >= 0 and k >= 2, got {alpha_deg} and {k}")));
    }
    if alpha_deg == 0.0 {
        let mut out = s.clone();
        out.polylines = Some(Polylines {
            row_polys: straight(&s.grid.row_bounds, k),
            col_polys: straight(&s.grid.col_bounds, k),
        });
        return Ok(out);
    }
    let theta = rng.uniform_range(-alpha_deg, alpha_deg);
    rotate_sample_by(s, theta, k)
}

/// Deterministic rotation by exactly `theta_deg`.
pub fn rotate_sample_by(s: &Sample, theta_deg: f64, k: usize) -> Result<Sample> {
    let (h, w) = (s.height() as f64, s.width() as f64);
    let image = rotate_image(&s.image, theta_deg)?;
    let (nh, nw) = (image.shape()[1] as f64, image.shape()[2] as f64);
    let centre = (w / 2.0, h / 2.0);
    let shift = ((nw - w) / 2.0, (nh - h) / 2.0);
    let map = |x: f64, y: f64| {
        let (rx, ry) = rotate_point((x, y), centre, theta_deg);
        (rx + shift.0, ry + shift.1)
    };
    let corners = [map(0.0, 0.0), map(w, 0.0), map(0.0, h), map(w, h)];
    let bx0 = corners.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let bx1 = corners.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let by0 = corners.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let by1 = corners.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let norm = |p: (f64, f64)| ((p.0 - bx0) / (bx1 - bx0), (p.1 - by0) / (by1 - by0));
    let ts: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let row_polys: Vec<Vec<f64>> = s
        .grid
        .row_bounds
        .iter()
        .map(|&b| {
            let pts: Vec<_> = ts.iter().map(|&t| norm(map(t * w, b * h))).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            resample(&xs, &ys, k)
        })
        .collect();
    let col_polys: Vec<Vec<f64>> = s
        .grid
        .col_bounds
        .iter()
        .map(|&b| {
            let pts: Vec<_> = ts.iter().map(|&t| norm(map(b * w, t * h))).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            resample(&ys, &xs, k)
        })
        .collect();
    let means = |polys: &[Vec<f64>]| {
        let n = polys.len() - 1;
        let mut m: Vec<f64> = polys.iter().map(|p| p.iter().sum::<f64>() / p.len() as f64).collect();
        m[0] = 0.0;
        m[n] = 1.0;
        for i in 1..=n {
            m[i] = m[i].max(m[i - 1]).min(1.0);
        }
        m
    };
    let grid = GridSpec::new(s.grid.rows, s.grid.cols, s.grid.header_rows, means(&row_polys), means(&col_polys))?;
    let (iw, ih) = (image.shape()[2], image.shape()[1]);
    let text_boxes: Vec<PixelBox> = s
        .text_boxes
        .iter()
        .map(|b| {
            let pts = [
                map(b[0] as f64, b[1] as f64),
                map(b[2] as f64, b[1] as f64),
                map(b[0] as f64, b[3] as f64),
                map(b[2] as f64, b[3] as f64),
            ];
            let lo = |f: fn(&(f64, f64)) -> f64, n: usize| {
                (pts.iter().map(f).fold(f64::INFINITY, f64::min) + 1e-9).floor().clamp(0.0, n as f64) as usize
            };
            let hi = |f: fn(&(f64, f64)) -> f64, n: usize| {
                (pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max) - 1e-9).ceil().clamp(0.0, n as f64) as usize
            };
            [lo(|p| p.0, iw), lo(|p| p.1, ih), hi(|p| p.0, iw), hi(|p| p.1, ih)]
        })
        .collect();
    Ok(Sample {
        id: s.id.clone(),
        image,
        grid,
        spans: s.spans.clone(),
        text_boxes,
        polylines: Some(Polylines { row_polys, col_polys }),
    })
}
