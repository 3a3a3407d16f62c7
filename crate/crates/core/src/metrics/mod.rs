//! Quality metrics and the analyses built on them.

mod macs;
mod quality;
mod similarity;
mod sweep;

pub use macs::{
    macs_adafm_feature, macs_feature_tuning, macs_instrumented, macs_paper_ftn, MacsReport, MacsRow,
};
pub use quality::{psnr, PSNR_CAP_DB};
pub use similarity::{filter_similarity, network_similarity, LayerSimilarity, SimilarityReport};
pub use sweep::{alpha_grid, alpha_sweep, argmax_alpha, ideal_alpha, SweepCell, SweepResult};
