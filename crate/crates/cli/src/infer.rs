use std::fs;

use fasttab_core::pipeline::{infer, InferOptions};
use serde_json::json;

use crate::io::{load_model, read_image};
use crate::{CliError, CliResult, InferArgs};

pub fn run(args: &InferArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    if let Some(h) = args.head {
        let have = model.cfg.axial.head_variant;
        if h != have {
            return Err(CliError::Usage(format!("--head {h}: weights were trained with {have}")));
        }
    }
    let image = read_image(&args.image)?;
    let r = infer(&model, &image, InferOptions { curved: args.curved })?;
    if let Some(out) = &args.out {
        let mut v = json!({
            "html": r.html,
            "structure": r.structure,
            "grid": r.grid,
        });
        if let Some(cg) = &r.curved {
            v["curved"] = serde_json::to_value(cg).map_err(fasttab_core::Error::from)?;
        }
        if args.timings {
            v["timings"] = serde_json::to_value(&r.timings).map_err(fasttab_core::Error::from)?;
            v["total_micros"] = json!(r.total_micros);
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(fasttab_core::Error::from)?;
        text.push('\n');
        fs::write(out, text).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    }
    println!("{}", r.html);
    if args.timings {
        for t in &r.timings {
            eprintln!("{:>9}  {:>10.1} us", t.stage, t.micros);
        }
        eprintln!("{:>9}  {:>10.1} us", "total", r.total_micros);
    }
    Ok(())
}
