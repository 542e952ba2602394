use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Subcommand;
use serde::Serialize;
use talkplay_core::catalog::load_catalog;
use talkplay_core::datasynth::read_conversations;
use talkplay_core::eval::{
    evaluate_bm25, generate_queries, leave_one_out_from_generations, mrr_by_turn_svg, score_generations,
    weight_ablation_from_generations, AblationRow, Bm25Index, Bm25Params, EvalReport, LeaveOneOutTable, NamedProfile,
};
use talkplay_core::retrieval::{TokenIndex, WeightProfile};
use talkplay_model::RunnerConfig;

use super::model::load_runner;
use super::write_json;

#[derive(Subcommand)]
pub enum EvalCmd {
    /// Turn-wise evaluation of a trained model.
    Run {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        convos: PathBuf,
        #[arg(long, default_value = "quadratic-c2f")]
        weights: String,
        #[arg(long, default_value_t = 100)]
        top_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep earlier ground-truth tracks as candidates in later turns.
        #[arg(long)]
        keep_previous: bool,
        /// Also re-score under the five named profiles and leave-one-out.
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// BM25 text baseline over the catalog's track documents.
    Bm25 {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        convos: PathBuf,
        #[arg(long, default_value_t = 100)]
        top_n: usize,
        #[arg(long)]
        keep_previous: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// MRR-by-turn chart; each input is `label=report.json`.
    Plot {
        #[arg(long = "report", required = true)]
        reports: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct EvalOutput {
    report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<Vec<AblationRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leave_one_out: Option<LeaveOneOutTable>,
}

fn summary(name: &str, r: &EvalReport) {
    println!(
        "{name}: MRR {:.4}  Hit@1 {:.4}  Hit@10 {:.4}  Hit@100 {:.4}  ({} queries, {} skipped)",
        r.mrr,
        r.hit_at_1,
        r.hit_at_10,
        r.hit_at_100,
        r.n_queries,
        r.skipped.len()
    );
}

pub fn run(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Run {
            ckpt,
            index,
            convos,
            weights,
            top_n,
            seed,
            keep_previous,
            ablation,
            out,
        } => {
            let runner = load_runner(ckpt, RunnerConfig::default())?;
            let index = TokenIndex::load(&index)?;
            let convs = read_conversations(&convos)?;
            let weights: WeightProfile = weights.parse()?;
            let gens = generate_queries(&runner, &index, &convs, seed, !keep_previous)?;
            let report = score_generations(&gens, &index, &weights, top_n)?;
            summary("model", &report);
            let mut output = EvalOutput {
                report,
                ablation: None,
                leave_one_out: None,
            };
            if ablation {
                let named: Vec<(String, WeightProfile)> = NamedProfile::ALL
                    .iter()
                    .map(|p| (p.label().to_string(), p.profile()))
                    .collect();
                let rows = weight_ablation_from_generations(&gens, &index, &named, top_n)?;
                for row in &rows {
                    summary(&row.name, &row.report);
                }
                let loo = leave_one_out_from_generations(&gens, &index, top_n)?;
                for row in &loo.rows {
                    println!("without {}: MRR {:.4} ({:+.4})", row.removed, row.report.mrr, row.delta_mrr);
                }
                output.ablation = Some(rows);
                output.leave_one_out = Some(loo);
            }
            write_json(&out, &output)?;
        }
        EvalCmd::Bm25 {
            catalog,
            convos,
            top_n,
            keep_previous,
            out,
        } => {
            let catalog = load_catalog(&catalog)?;
            let convs = read_conversations(&convos)?;
            let bm25 = Bm25Index::from_catalog(&catalog, Bm25Params::default())?;
            let report = evaluate_bm25(&bm25, &catalog, &convs, top_n, !keep_previous)?;
            summary("bm25", &report);
            write_json(&out, &EvalOutput {
                report,
                ablation: None,
                leave_one_out: None,
            })?;
        }
        EvalCmd::Plot { reports, out } => {
            let mut loaded = Vec::new();
            for spec in &reports {
                let Some((label, path)) = spec.split_once('=') else {
                    bail!("expected label=path, got {spec}");
                };
                let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
                // Accept both the wrapped `eval run` output and a bare report.
                let r = v.get("report").cloned().unwrap_or(v);
                loaded.push((label.to_string(), serde_json::from_value::<EvalReport>(r)?));
            }
            let series: Vec<(&str, &EvalReport)> = loaded.iter().map(|(l, r)| (l.as_str(), r)).collect();
            std::fs::write(&out, mrr_by_turn_svg(&series))?;
        }
    }
    Ok(())
}
