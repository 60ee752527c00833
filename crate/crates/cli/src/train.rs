use fasttab_core::data::read_dataset;
use fasttab_core::metrics::Metric;
use fasttab_core::pipeline::{infer, InferOptions};
use fasttab_core::training::{train_toy, TrainConfig};
use fasttab_core::weights::save_weights;
use fasttab_core::FastTab;

use crate::io::{read_json, write_json};
use crate::{CliError, CliResult, TrainArgs};

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.iterations {
        if t == 0 {
            return Err(CliError::Usage("--iterations must be positive".into()));
        }
        cfg.model.iterations = t;
    }
    cfg.validate()?;
    let data = read_dataset(&args.data)?;
    let mut model = FastTab::new(cfg.model.clone(), cfg.seed)?;
    let every = (args.epochs / 10).max(1);
    let logs = train_toy(&mut model, &data, &cfg, args.epochs, |log| {
        if (log.epoch + 1) % every == 0 || log.epoch == 0 {
            println!(
                "epoch {:>4}  loss {:.5}  boundaries {:.3e}  tf {:.2}  lr {:.2e}",
                log.epoch + 1,
                log.loss.total,
                log.loss.boundaries,
                log.tf_fraction,
                log.lr
            );
        }
    })?;
    save_weights(&args.out, &model)?;
    if let Some(p) = &args.log {
        write_json(p, &logs)?;
    }

    let opts = InferOptions { curved: cfg.curved };
    let mut sum = 0.0;
    for s in &data {
        let pred = infer(&model, &s.image, opts)?;
        sum += Metric::Steds.score(&pred.structure, &s.structure()?);
    }
    println!("train S-TEDS {:.4} over {} samples", sum / data.len() as f64, data.len());
    Ok(())
}
