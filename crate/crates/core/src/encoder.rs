//! Fully convolutional image encoder with anisotropic downsampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Bound, Conv, ConvGeom, ParamStore, Rng, Tape, Tensor, Var};

/// Per-stage `(height, width)` strides: ÷16 vertically, ÷8 horizontally.
pub const STAGE_STRIDES: [(usize, usize); 4] = [(2, 2), (2, 2), (2, 2), (2, 1)];
pub const HEIGHT_FACTOR: usize = 16;
pub const WIDTH_FACTOR: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_model: usize,
    /// Output channels of each stage; the last must equal `d_model`.
    pub stage_channels: [usize; 4],
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 32,
            stage_channels: [8, 16, 32, 32],
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels[3] != self.d_model {
            return Err(Error::Config(format!(
                "last stage has {} channels but d_model is {}",
                self.stage_channels[3], self.d_model
            )));
        }
        if self.stage_channels.contains(&0) {
            return Err(Error::Config("stage channels must be positive".into()));
        }
        Ok(())
    }
}

/// Feature-map size for an `h × w` image.
pub fn feature_dims(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(HEIGHT_FACTOR), w.div_ceil(WIDTH_FACTOR))
}

/// Validates a `[3, H, W]` image in `[0, 1]`, pads it with white to
/// multiples of (16, 8) and converts it to ink density `1 − x`, so padding
/// and blank paper are both zero.
pub fn prepare_image(image: &Tensor) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Input(format!("expected a [3, H, W] image, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    if h < HEIGHT_FACTOR || w < WIDTH_FACTOR {
        return Err(Error::Input(format!("image {h}x{w} is smaller than the 16x8 minimum")));
    }
    if !image.is_finite() {
        return Err(Error::Input("image contains non-finite pixels".into()));
    }
    let (hp, wp) = (h.div_ceil(HEIGHT_FACTOR) * HEIGHT_FACTOR, w.div_ceil(WIDTH_FACTOR) * WIDTH_FACTOR);
    let src = image.data();
    let mut out = Tensor::zeros(&[3, hp, wp]);
    let dst = out.data_mut();
    for c in 0..3 {
        for y in 0..h {
            let row = &src[(c * h + y) * w..(c * h + y + 1) * w];
            let o = (c * hp + y) * wp;
            for (d, &v) in dst[o..o + w].iter_mut().zip(row) {
                *d = 1.0 - v;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Encoder {
    stages: Vec<(Conv, Conv)>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut cin = 3;
        let mut stages = Vec::with_capacity(4);
        for (i, (&cout, &stride)) in cfg.stage_channels.iter().zip(&STAGE_STRIDES).enumerate() {
            let down = Conv::new(store, &format!("enc.s{i}.down"), cin, cout, (3, 3), ConvGeom::new(stride, (1, 1), 1), true, rng);
            let mix = Conv::new(store, &format!("enc.s{i}.mix"), cout, cout, (3, 3), ConvGeom::new((1, 1), (1, 1), 1), true, rng);
            stages.push((down, mix));
            cin = cout;
        }
        Ok(Encoder { stages })
    }

    /// `prepared: [3, H', W']` from [`prepare_image`] → `[d_model, H'/16, W'/8]`.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, prepared: Var) -> Result<Var> {
        let mut x = prepared;
        for (down, mix) in &self.stages {
            x = tape.gelu(down.forward(tape, p, x)?);
            x = tape.gelu(mix.forward(tape, p, x)?);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims() {
        assert_eq!(feature_dims(64, 64), (4, 8));
        assert_eq!(feature_dims(16, 8), (1, 1));
        assert_eq!(feature_dims(33, 17), (3, 3));
    }

    #[test]
    fn padding_is_white() {
        let img = Tensor::full(&[3, 17, 9], 0.25);
        let p = prepare_image(&img).unwrap();
        assert_eq!(p.shape(), &[3, 32, 16]);
        assert_eq!(p.data()[0], 0.75);
        assert_eq!(p.data()[9], 0.0);
        assert_eq!(*p.data().last().unwrap(), 0.0);
    }

    #[test]
    fn rejects_small_or_bad_images() {
        assert!(prepare_image(&Tensor::zeros(&[3, 15, 8])).is_err());
        assert!(prepare_image(&Tensor::zeros(&[3, 16, 7])).is_err());
        assert!(prepare_image(&Tensor::zeros(&[1, 16, 8])).is_err());
    }
}
