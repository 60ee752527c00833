use std::fs;
use std::path::Path;

use fasttab_core::data::decode_ppm;
use fasttab_core::weights::load_weights;
use fasttab_core::{FastTab, Tensor};
use serde::Serialize;

use crate::{CliError, CliResult};

/// Caps the worker pool at `FASTTAB_THREADS` when set.
pub fn init_threads() {
    if let Some(n) = std::env::var("FASTTAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second initialisation only happens in tests; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Reads a binary PPM or a PNG into `[3, H, W]` in `[0, 1]`.
pub fn read_image(path: &Path) -> CliResult<Tensor> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(b"P6") {
        return Ok(decode_ppm(&bytes)?);
    }
    let img = image::load_from_memory(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(vec![3, h, w], data)?)
}

pub fn load_model(path: &Path) -> CliResult<FastTab> {
    load_weights(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(fasttab_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
