use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use svex_core::design::derive_seed;
use svex_core::diagnostics::{delta_statistic, qq_points};
use svex_core::uncertainty::BootstrapConfig;

use crate::errors::{CliError, CliResult};
use crate::input;
use crate::manifest::RunManifest;
use crate::write_output;

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Input CSV file(s); repeat the flag for several
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub outcome: String,
    #[arg(long)]
    pub treatment: String,
    #[arg(long)]
    pub weight: String,
    /// Column whose distinct values split a file into experiments
    /// (whole file is one experiment when omitted)
    #[arg(long)]
    pub experiment: Option<String>,
    /// Grouping column carried into the output (file stem when omitted)
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Delta-table output path (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// qq-table output path (defaults to `<output>` with a `_qq` suffix)
    #[arg(long)]
    pub qq_output: Option<PathBuf>,
}

struct ExperimentRows {
    group: String,
    id: String,
    rows: Vec<usize>,
}

pub fn run(args: &CompareArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("compare", args.seed);
    let mut needed: Vec<&str> = vec![&args.outcome, &args.treatment, &args.weight];
    if let Some(c) = &args.experiment {
        needed.push(c);
    }
    if let Some(c) = &args.group {
        needed.push(c);
    }
    needed.dedup();

    let mut delta_rows = String::from("group,experiment_id,sate,hh,se_diff,delta,status\n");
    let mut deltas = Vec::new();
    let mut successes = 0usize;
    let mut experiment_index = 0u64;
    for path in &args.input {
        manifest.digest_input(path)?;
        let table = input::read_table(path, &needed)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        for exp in split_experiments(&table, args, &stem) {
            experiment_index += 1;
            let gather = |col: &str| -> Vec<String> {
                exp.rows
                    .iter()
                    .map(|&i| table.columns[col][i].clone())
                    .collect()
            };
            let built = input::build_experiment(
                &gather(&args.outcome),
                &gather(&args.treatment),
                &gather(&args.weight),
                &args.outcome,
                &args.treatment,
                &args.weight,
                &[],
            );
            let cfg = BootstrapConfig {
                replicates: args.bootstrap,
                seed: derive_seed(args.seed, experiment_index),
                ..Default::default()
            };
            let report = built.and_then(|data| delta_statistic(&data, &cfg).map_err(CliError::from));
            match report {
                Ok(rep) => {
                    delta_rows.push_str(&format!(
                        "{},{},{},{},{},{},ok\n",
                        exp.group, exp.id, rep.sate, rep.hh, rep.se_diff, rep.delta
                    ));
                    deltas.push(rep.delta);
                    successes += 1;
                }
                Err(e) => {
                    // one broken experiment must not sink the batch
                    let msg = e.to_string().replace([',', '\n'], "; ");
                    delta_rows.push_str(&format!("{},{},,,,,error: {msg}\n", exp.group, exp.id));
                    eprintln!("warning: experiment {}/{}: {e}", exp.group, exp.id);
                }
            }
        }
    }
    if successes == 0 {
        return Err(CliError::data("every experiment failed validation"));
    }

    write_output(args.output.as_deref(), &delta_rows, &manifest)?;

    if deltas.len() >= 2 {
        let mut qq = String::from("theoretical_q,observed_q\n");
        for (t, o) in qq_points(&deltas)? {
            qq.push_str(&format!("{t},{o}\n"));
        }
        let qq_path = match (&args.qq_output, &args.output) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(out)) => {
                let stem = out.file_stem().unwrap_or_default().to_string_lossy();
                let ext = out.extension().map(|e| e.to_string_lossy().into_owned());
                let name = match ext {
                    Some(ext) => format!("{stem}_qq.{ext}"),
                    None => format!("{stem}_qq"),
                };
                Some(out.with_file_name(name))
            }
            (None, None) => None,
        };
        write_output(qq_path.as_deref(), &qq, &manifest)?;
    } else {
        eprintln!("note: fewer than 2 deltas; qq table skipped");
    }
    Ok(())
}

fn split_experiments(table: &input::Table, args: &CompareArgs, stem: &str) -> Vec<ExperimentRows> {
    let group_of = |i: usize| -> String {
        match &args.group {
            Some(c) => table.columns[c][i].clone(),
            None => stem.to_string(),
        }
    };
    match &args.experiment {
        None => vec![ExperimentRows {
            group: group_of(0),
            id: stem.to_string(),
            rows: (0..table.rows).collect(),
        }],
        Some(col) => {
            let mut by_id: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, v) in table.columns[col].iter().enumerate() {
                by_id.entry(v.clone()).or_default().push(i);
            }
            by_id
                .into_iter()
                .map(|(id, rows)| ExperimentRows {
                    group: group_of(rows[0]),
                    id,
                    rows,
                })
                .collect()
        }
    }
}
