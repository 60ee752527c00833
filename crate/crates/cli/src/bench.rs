use fasttab_core::data::read_dataset;
use fasttab_core::pipeline::{infer, InferOptions};
use serde::Serialize;

use crate::io::{load_model, write_json};
use crate::{CliError, CliResult, BenchArgs};

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub images: usize,
    pub iterations: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub fps: f64,
    /// Mean per-stage time in milliseconds.
    pub stages: Vec<(String, f64)>,
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    let mut model = load_model(&args.model)?;
    if let Some(t) = args.iterations {
        if t == 0 {
            return Err(CliError::Usage("--iterations must be positive".into()));
        }
        model.set_iterations(t);
    }
    if args.repeat == 0 {
        return Err(CliError::Usage("--repeat must be positive".into()));
    }
    let data = read_dataset(&args.data)?;
    let first = data.first().ok_or_else(|| CliError::Data("empty dataset".into()))?;
    let opts = InferOptions { curved: args.curved };
    for _ in 0..args.warmup {
        infer(&model, &first.image, opts)?;
    }
    let mut lat = Vec::with_capacity(data.len() * args.repeat);
    let mut stages: Vec<(String, f64)> = Vec::new();
    for _ in 0..args.repeat {
        for s in &data {
            let r = infer(&model, &s.image, opts)?;
            lat.push(r.total_micros / 1e3);
            if stages.is_empty() {
                stages = r.timings.iter().map(|t| (t.stage.clone(), 0.0)).collect();
            }
            for (acc, t) in stages.iter_mut().zip(&r.timings) {
                acc.1 += t.micros / 1e3;
            }
        }
    }
    let n = lat.len();
    stages.iter_mut().for_each(|s| s.1 /= n as f64);
    let total: f64 = lat.iter().sum();
    lat.sort_by(f64::total_cmp);
    let report = BenchReport {
        images: n,
        iterations: model.cfg.iterations,
        p50_ms: percentile(&lat, 50.0),
        p95_ms: percentile(&lat, 95.0),
        mean_ms: total / n as f64,
        fps: n as f64 / (total / 1e3),
        stages,
    };
    println!(
        "T={}  n={}  p50 {:.3} ms  p95 {:.3} ms  {:.1} FPS",
        report.iterations, report.images, report.p50_ms, report.p95_ms, report.fps
    );
    for (name, ms) in &report.stages {
        println!("  {name:<9} {ms:.3} ms");
    }
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    Ok(())
}
