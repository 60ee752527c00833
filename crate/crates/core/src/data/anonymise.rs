use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PixelBox;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Blur sigma as a fraction of the box height.
pub const BLUR_SIGMA_FRACTION: f64 = 0.25;
/// Pixelation block edge in pixels.
pub const PIXEL_BLOCK: usize = 8;
/// Standard deviation of additive noise.
pub const NOISE_SIGMA: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnonymMethod {
    Black,
    Median,
    #[serde(rename = "blur")]
    GaussianBlur,
    Pixelation,
    Mean,
    Noise,
}

impl AnonymMethod {
    pub const ALL: [AnonymMethod; 6] = [
        AnonymMethod::Black,
        AnonymMethod::Median,
        AnonymMethod::GaussianBlur,
        AnonymMethod::Pixelation,
        AnonymMethod::Mean,
        AnonymMethod::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnonymMethod::Black => "black",
            AnonymMethod::Median => "median",
            AnonymMethod::GaussianBlur => "blur",
            AnonymMethod::Pixelation => "pixelation",
            AnonymMethod::Mean => "mean",
            AnonymMethod::Noise => "noise",
        }
    }
}

impl fmt::Display for AnonymMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnonymMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        AnonymMethod::ALL
            .into_iter()
            .find(|m| m.name() == key || (key == "gaussianblur" && *m == AnonymMethod::GaussianBlur))
            .ok_or_else(|| Error::Config(format!("unknown anonymisation method {s:?}")))
    }
}

struct Plane<'a> {
    data: &'a mut [f64],
    w: usize,
}

impl Plane<'_> {
    fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.w + x] = v;
    }

    fn values(&self, b: &PixelBox) -> Vec<f64> {
        (b[1]..b[3]).flat_map(|y| (b[0]..b[2]).map(move |x| (x, y))).map(|(x, y)| self.get(x, y)).collect()
    }

    fn fill(&mut self, b: &PixelBox, v: f64) {
        for y in b[1]..b[3] {
            for x in b[0]..b[2] {
                self.set(x, y, v);
            }
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur that reads only pixels inside the box, clamping at its
/// edges.
fn blur_box(plane: &mut Plane<'_>, b: &PixelBox, sigma: f64) {
    let (bw, bh) = (b[2] - b[0], b[3] - b[1]);
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let src = plane.values(b);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; bw * bh];
    for y in 0..bh {
        for x in 0..bw {
            tmp[y * bw + x] = k
                .iter()
                .enumerate()
                .map(|(j, wt)| wt * src[y * bw + clamp(x as isize + j as isize - r, bw)])
                .sum();
        }
    }
    for y in 0..bh {
        for x in 0..bw {
            let v = k
                .iter()
                .enumerate()
                .map(|(j, wt)| wt * tmp[clamp(y as isize + j as isize - r, bh) * bw + x])
                .sum();
            plane.set(b[0] + x, b[1] + y, v);
        }
    }
}

/// Applies one method to every box in list order (later boxes see earlier
/// results). Pixels outside all boxes are left untouched.
pub fn anonymise(image: &Tensor, boxes: &[PixelBox], method: AnonymMethod, rng: &mut Rng) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::Input(format!("expected a [C, H, W] image, got {s:?}")));
    }
    let (channels, h, w) = (s[0], s[1], s[2]);
    if let Some(b) = boxes.iter().find(|b| b[0] > b[2] || b[1] > b[3] || b[2] > w || b[3] > h) {
        return Err(Error::Input(format!("box {b:?} outside the {w}x{h} image")));
    }
    let mut out = image.clone();
    for b in boxes.iter().filter(|b| b[2] > b[0] && b[3] > b[1]) {
        for c in 0..channels {
            let mut plane = Plane {
                data: &mut out.data_mut()[c * h * w..(c + 1) * h * w],
                w,
            };
            match method {
                AnonymMethod::Black => plane.fill(b, 0.0),
                AnonymMethod::Mean => {
                    let m = mean(&plane.values(b));
                    plane.fill(b, m);
                }
                AnonymMethod::Median => {
                    let m = median(plane.values(b));
                    plane.fill(b, m);
                }
                AnonymMethod::GaussianBlur => {
                    let sigma = ((b[3] - b[1]) as f64 * BLUR_SIGMA_FRACTION).max(1e-3);
                    blur_box(&mut plane, b, sigma);
                }
                AnonymMethod::Pixelation => {
                    for by in (b[1]..b[3]).step_by(PIXEL_BLOCK) {
                        for bx in (b[0]..b[2]).step_by(PIXEL_BLOCK) {
                            let block = [bx, by, (bx + PIXEL_BLOCK).min(b[2]), (by + PIXEL_BLOCK).min(b[3])];
                            let m = mean(&plane.values(&block));
                            plane.fill(&block, m);
                        }
                    }
                }
                AnonymMethod::Noise => {
                    for y in b[1]..b[3] {
                        for x in b[0]..b[2] {
                            let v = plane.get(x, y) + NOISE_SIGMA * rng.normal();
                            plane.set(x, y, v.clamp(0.0, 1.0));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
