use fasttab_core::training::model_grad_check;
use fasttab_core::ModelConfig;
use serde_json::json;

use crate::io::{read_json, write_json};
use crate::{CliError, CliResult, GradcheckArgs};

pub fn run(args: &GradcheckArgs) -> CliResult<()> {
    let cfg: ModelConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ModelConfig::tiny(),
    };
    if !(args.eps > 0.0) || !(args.tol > 0.0) {
        return Err(CliError::Usage("--eps and --tol must be positive".into()));
    }
    let checks = model_grad_check(&cfg, args.seed, args.eps, args.tol)?;
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.report.passed();
        println!(
            "{:<13} value {:>11.4e}  max rel err {:.3e}  over {} coords  {}",
            c.name,
            c.value,
            c.report.max_rel_error,
            c.report.checked,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(c.name);
        }
    }
    if let Some(p) = &args.report {
        let terms: Vec<_> = checks
            .iter()
            .map(|c| {
                json!({
                    "term": c.name,
                    "value": c.value,
                    "max_rel_error": c.report.max_rel_error,
                    "checked": c.report.checked,
                    "passed": c.report.passed(),
                })
            })
            .collect();
        write_json(p, &json!({ "eps": args.eps, "tol": args.tol, "terms": terms }))?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}
