use std::fs;
use std::path::Path;

use fasttab_core::data::{read_dataset, Sample};
use fasttab_core::metrics::{evaluate, EvalReport, ScoredPair};
use fasttab_core::pipeline::{infer, InferOptions};
use fasttab_core::structure::{parse_html_structure, to_html};
use fasttab_core::{Result, TableStructure};
use rayon::prelude::*;

use crate::io::{load_model, write_json};
use crate::{CliError, CliResult, EvalArgs};

fn predictions_from_dir(dir: &Path, gt: &[Sample]) -> CliResult<Vec<TableStructure>> {
    gt.iter()
        .map(|s| {
            let path = dir.join(format!("{}.html", s.id));
            let html = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            // malformed predictions score as an empty table rather than aborting the run
            Ok(parse_html_structure(&html).unwrap_or_else(|e| {
                eprintln!("warning: {}: {e}; scored as empty", path.display());
                TableStructure::empty()
            }))
        })
        .collect()
}

pub fn print_report(report: &EvalReport) {
    let fmt = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:<8} {:>8} {:>8} {:>8}", "metric", "all", "simple", "complex");
    for s in &report.metrics {
        println!("{:<8} {:>8} {:>8} {:>8}", s.metric.name(), fmt(s.all.mean), fmt(s.simple.mean), fmt(s.complex.mean));
    }
    if let Some(s) = report.metrics.first() {
        println!("n = {} ({} simple, {} complex)", s.all.n, s.simple.n, s.complex.n);
    }
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let gt_dir = args
        .gt
        .as_ref()
        .or(args.data.as_ref())
        .ok_or_else(|| CliError::Usage("--gt is required with --pred-dir".into()))?;
    let gt = read_dataset(gt_dir)?;
    let preds = match (&args.pred_dir, &args.model, &args.data) {
        (Some(dir), _, _) => predictions_from_dir(dir, &gt)?,
        (None, Some(model), Some(data)) => {
            let model = load_model(model)?;
            let inputs = if Some(data) == args.gt.as_ref() || args.gt.is_none() { gt.clone() } else { read_dataset(data)? };
            if inputs.len() != gt.len() || inputs.iter().zip(&gt).any(|(a, b)| a.id != b.id) {
                return Err(CliError::Data("--data and --gt hold different sample ids".into()));
            }
            let opts = InferOptions { curved: args.curved };
            let preds = inputs
                .par_iter()
                .map(|s| infer(&model, &s.image, opts).map(|r| r.structure))
                .collect::<Result<Vec<_>>>()?;
            if let Some(dir) = &args.save_pred {
                fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
                for (s, p) in inputs.iter().zip(&preds) {
                    let path = dir.join(format!("{}.html", s.id));
                    fs::write(&path, to_html(p)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                }
            }
            preds
        }
        _ => return Err(CliError::Usage("pass either --pred-dir or --model with --data".into())),
    };
    let gts = gt.iter().map(Sample::structure).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<ScoredPair<'_>> = gt
        .iter()
        .zip(&preds)
        .zip(&gts)
        .map(|((s, pred), gt)| ScoredPair { id: &s.id, pred, gt })
        .collect();
    let report = evaluate(&pairs, &args.metric);
    print_report(&report);
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    Ok(())
}
