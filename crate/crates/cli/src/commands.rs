//! The run-producing verbs, shared by the binary and the acceptance suite.

use std::path::{Path, PathBuf};

use bilevel_core::trainer::{run, RunConfig, RunSummary};
use bilevel_core::worldmodel::AblationMode;
use bilevel_core::Error;

use crate::plot::{emit_plot, PlotSpec, Series};

fn write_config(cfg: &RunConfig, dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), cfg.to_kv_text())?;
    Ok(())
}

/// Train one run into `out`: `config.txt`, metrics, log and checkpoints.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<RunSummary, Error> {
    write_config(cfg, out)?;
    run(cfg, Some(out))
}

/// One series per mode found under an `ablate` output directory.
pub fn ablation_series(dir: &Path) -> Vec<Series> {
    AblationMode::ALL
        .iter()
        .filter_map(|mode| {
            let mut runs: Vec<PathBuf> = std::fs::read_dir(dir.join(mode.as_str()))
                .ok()?
                .filter_map(|e| e.ok().map(|e| e.path().join("metrics.csv")))
                .filter(|p| p.exists())
                .collect();
            runs.sort();
            (!runs.is_empty()).then(|| Series { label: mode.to_string(), runs })
        })
        .collect()
}

/// Train every mode for every seed under `out/<mode>/seed_<s>/`, then write
/// `summary.csv` and `ablation.svg`. Summaries are returned in mode order.
pub fn ablate(base: &RunConfig, seeds: &[u64], out: &Path) -> Result<Vec<RunSummary>, Error> {
    let mut summary = String::from("mode,seed,episodes,env_steps,final_eval\n");
    let mut all = Vec::new();
    for mode in AblationMode::ALL {
        for &seed in seeds {
            let cfg = RunConfig { mode, seed, ..base.clone() };
            let s = train(&cfg, &out.join(mode.as_str()).join(format!("seed_{seed}")))?;
            summary.push_str(&format!("{mode},{seed},{},{},{}\n", s.episodes, s.env_steps, s.final_eval));
            all.push(s);
        }
    }
    std::fs::write(out.join("summary.csv"), summary)?;
    emit_plot(&ablation_series(out), &PlotSpec::default(), out, "ablation")?;
    Ok(all)
}

/// Mean final evaluation return of `mode` among `summaries`.
pub fn mean_final(summaries: &[RunSummary], mode: AblationMode) -> Option<f64> {
    let finals: Vec<f64> = summaries.iter().filter(|s| s.mode == mode).map(|s| s.final_eval).collect();
    (!finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64)
}
