use fasttab_core::data::{anonymise, random_table_spec, render_synthetic, rotate_sample, write_dataset, RenderStyle, Sample};
use fasttab_core::numerics::{seed_for, Rng};
use fasttab_core::{Caps, Result};
use rayon::prelude::*;

use crate::{CliError, CliResult, SynthArgs};

pub fn sample_id(i: usize) -> String {
    format!("t{i:05}")
}

/// Each sample draws from its own stream, so a given id renders the same
/// table regardless of `n`, thread count or post-processing flags.
pub fn make_sample(args: &SynthArgs, caps: &Caps, i: usize) -> Result<Sample> {
    let id = sample_id(i);
    let base = Rng::new(seed_for(args.seed, &id));
    let max_rows = args.max_rows.unwrap_or(caps.r_max).min(caps.r_max);
    let max_cols = args.max_cols.unwrap_or(caps.c_max).min(caps.c_max);
    let max_span = args.max_span.unwrap_or(caps.rs_max.min(caps.cs_max)).min(caps.rs_max.min(caps.cs_max));
    let mut rng = base.derive(1);
    let spec = random_table_spec(&mut rng, max_rows, max_cols, max_span);
    let style = RenderStyle {
        ruled: !args.borderless,
        ..RenderStyle::default()
    };
    let mut sample = render_synthetic(&id, &spec, &style, &mut rng)?;
    if let Some(method) = args.anonymise {
        sample.image = anonymise(&sample.image, &sample.text_boxes, method, &mut base.derive(2))?;
    }
    if let Some(alpha) = args.rotate {
        sample = rotate_sample(&sample, alpha, args.samples, &mut base.derive(3))?;
    }
    Ok(sample)
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let caps = Caps::parse(&args.caps)?;
    if [args.max_rows, args.max_cols, args.max_span].contains(&Some(0)) {
        return Err(CliError::Usage("--max-rows, --max-cols and --max-span must be positive".into()));
    }
    if let Some(a) = args.rotate {
        if !(0.0..=45.0).contains(&a) {
            return Err(CliError::Usage(format!("--rotate {a}: expected an angle in [0, 45]")));
        }
    }
    if args.samples < 2 {
        return Err(CliError::Usage("--samples must be at least 2".into()));
    }
    let samples = (0..args.n)
        .into_par_iter()
        .map(|i| make_sample(args, &caps, i))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&args.out, &samples)?;
    let complex = samples.iter().filter(|s| s.spans.has_merged()).count();
    println!("wrote {} samples ({complex} with merged cells) to {}", samples.len(), args.out.display());
    Ok(())
}
