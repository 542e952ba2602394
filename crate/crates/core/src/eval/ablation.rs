//! Weight-profile and leave-one-modality-out ablations.

use serde::{Deserialize, Serialize};

use super::harness::{generate_queries, score_generations, EvalConfig, EvalError, EvalReport, Generations, MusicGenerator};
use crate::datasynth::Conversation;
use crate::retrieval::{TokenIndex, WeightProfile};
use crate::Modality;

/// The five weighting strategies compared in the ablation table, weights in
/// canonical modality order (playlist, semantic, metadata, lyrics, audio).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NamedProfile {
    Uniform,
    LinearFineToCoarse,
    QuadraticFineToCoarse,
    LinearCoarseToFine,
    QuadraticCoarseToFine,
}

impl NamedProfile {
    pub const ALL: [NamedProfile; 5] = [
        NamedProfile::Uniform,
        NamedProfile::LinearFineToCoarse,
        NamedProfile::QuadraticFineToCoarse,
        NamedProfile::LinearCoarseToFine,
        NamedProfile::QuadraticCoarseToFine,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            NamedProfile::Uniform => "uniform",
            NamedProfile::LinearFineToCoarse => "linear-f2c",
            NamedProfile::QuadraticFineToCoarse => "quadratic-f2c",
            NamedProfile::LinearCoarseToFine => "linear-c2f",
            NamedProfile::QuadraticCoarseToFine => "quadratic-c2f",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NamedProfile::Uniform => "Uniform",
            NamedProfile::LinearFineToCoarse => "Linear (fine-to-coarse)",
            NamedProfile::QuadraticFineToCoarse => "Quadratic (fine-to-coarse)",
            NamedProfile::LinearCoarseToFine => "Linear (coarse-to-fine)",
            NamedProfile::QuadraticCoarseToFine => "Quadratic (coarse-to-fine)",
        }
    }

    pub fn profile(self) -> WeightProfile {
        let w = match self {
            NamedProfile::Uniform => [1.0; 5],
            NamedProfile::LinearFineToCoarse => [1.0, 2.0, 3.0, 4.0, 5.0],
            NamedProfile::QuadraticFineToCoarse => [1.0, 4.0, 9.0, 16.0, 25.0],
            NamedProfile::LinearCoarseToFine => [5.0, 4.0, 3.0, 2.0, 1.0],
            NamedProfile::QuadraticCoarseToFine => [25.0, 16.0, 9.0, 4.0, 1.0],
        };
        WeightProfile::new(w).expect("named profiles are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub weights: WeightProfile,
    pub report: EvalReport,
}

/// Scores one set of generations under each profile.
pub fn weight_ablation_from_generations(
    gens: &Generations,
    index: &TokenIndex,
    profiles: &[(String, WeightProfile)],
    top_n: usize,
) -> Result<Vec<AblationRow>, EvalError> {
    profiles
        .iter()
        .map(|(name, w)| {
            Ok(AblationRow {
                name: name.clone(),
                weights: *w,
                report: score_generations(gens, index, w, top_n)?,
            })
        })
        .collect()
}

/// The generator runs once; every profile re-scores the same generations.
/// `config.weights` is ignored.
pub fn run_weight_ablation<G: MusicGenerator + ?Sized>(
    generator: &G,
    index: &TokenIndex,
    conversations: &[Conversation],
    profiles: &[NamedProfile],
    config: &EvalConfig,
) -> Result<Vec<AblationRow>, EvalError> {
    let gens = generate_queries(generator, index, conversations, config.seed, config.exclude_previous)?;
    let named: Vec<(String, WeightProfile)> =
        profiles.iter().map(|p| (p.label().to_string(), p.profile())).collect();
    weight_ablation_from_generations(&gens, index, &named, config.top_n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutRow {
    pub removed: Modality,
    pub report: EvalReport,
    /// MRR change relative to the uniform baseline.
    pub delta_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutTable {
    pub baseline: EvalReport,
    pub rows: Vec<LeaveOneOutRow>,
}

pub fn leave_one_out_from_generations(
    gens: &Generations,
    index: &TokenIndex,
    top_n: usize,
) -> Result<LeaveOneOutTable, EvalError> {
    let uniform = WeightProfile::uniform();
    let baseline = score_generations(gens, index, &uniform, top_n)?;
    let mut rows = Vec::with_capacity(Modality::COUNT);
    for m in Modality::ALL {
        let w = uniform.without(m).expect("four weights remain positive");
        let report = score_generations(gens, index, &w, top_n)?;
        rows.push(LeaveOneOutRow {
            removed: m,
            delta_mrr: report.mrr - baseline.mrr,
            report,
        });
    }
    Ok(LeaveOneOutTable { baseline, rows })
}

/// Drops each modality from the uniform profile in turn.
pub fn run_leave_one_out<G: MusicGenerator + ?Sized>(
    generator: &G,
    index: &TokenIndex,
    conversations: &[Conversation],
    config: &EvalConfig,
) -> Result<LeaveOneOutTable, EvalError> {
    let gens = generate_queries(generator, index, conversations, config.seed, config.exclude_previous)?;
    leave_one_out_from_generations(&gens, index, config.top_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_profile_weights() {
        let got: Vec<[f64; 5]> = NamedProfile::ALL.iter().map(|p| *p.profile().weights()).collect();
        assert_eq!(
            got,
            vec![
                [1.0, 1.0, 1.0, 1.0, 1.0],
                [1.0, 2.0, 3.0, 4.0, 5.0],
                [1.0, 4.0, 9.0, 16.0, 25.0],
                [5.0, 4.0, 3.0, 2.0, 1.0],
                [25.0, 16.0, 9.0, 4.0, 1.0],
            ]
        );
        for p in NamedProfile::ALL {
            assert_eq!(p.slug().parse::<WeightProfile>().unwrap(), p.profile());
        }
        assert_eq!(NamedProfile::QuadraticCoarseToFine.profile(), WeightProfile::default());
    }
}
