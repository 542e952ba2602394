//! Offline evaluation: ranking metrics, turn-wise evaluation of a generator,
//! weight ablations, and a BM25 text baseline.

mod ablation;
mod bm25;
mod harness;
mod metrics;
mod plot;

pub use ablation::{
    leave_one_out_from_generations, run_leave_one_out, run_weight_ablation, weight_ablation_from_generations,
    AblationRow, LeaveOneOutRow, LeaveOneOutTable, NamedProfile,
};
pub use bm25::{bm25_rank, tokenize, Bm25Error, Bm25Index, Bm25Params};
pub use harness::{
    derive_seed, evaluate_bm25, evaluate_turnwise, generate_queries, render_turn_prompt, score_generations,
    EvalConfig, EvalError, EvalReport, Fingerprint, GeneratedQuery, GenerationError, Generations,
    MusicGenerator, QueryLog, SkippedConversation,
};
pub use metrics::{hit_at_k, mrr, MetricError};
pub use plot::mrr_by_turn_svg;
