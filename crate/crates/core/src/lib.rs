//! Subtitle extraction post-processing: turns per-frame OCR detections and
//! ASR transcripts into a clean subtitle timeline.
//!
//! The pipeline stages live in their own modules and compose through the
//! shared types in [`model`]:
//!
//! - [`assignment`]: minimum-cost bipartite assignment with deterministic
//!   tie-breaking, the matching core under the tracker.
//! - [`tracker`]: frame-to-frame detection tracking by box overlap, plus a
//!   position-band filter that keeps tracks near the dominant subtitle row.
//! - [`extractor`]: scores raw detections, classifies tracks, and merges
//!   track text into a visual-only timeline.
//! - [`textsim`]: edit distance, common-subsequence similarity on characters
//!   and pinyin syllables, and best-window search inside longer strings.
//! - [`lm`]: character n-gram language model with stupid backoff, ARPA-style
//!   persistence, and two-model interpolation.
//! - [`decoder`]: CTC prefix beam search over emission matrices with
//!   optional language-model fusion and n-best rescoring.
//! - [`fusion`]: reconciles the visual timeline with ASR text: splits
//!   merged segments, picks the best candidate text, removes non-subtitle
//!   tracks, and pads spans the OCR missed.
//! - [`eval`]: character error rate against reference timelines.
//! - [`synth`]: deterministic synthetic corpus generator for end-to-end
//!   tests and benchmarks.

pub mod assignment;
pub mod decoder;
pub mod eval;
pub mod extractor;
pub mod fusion;
pub mod lm;
pub mod model;
pub mod synth;
pub mod textsim;
pub mod tracker;

pub use assignment::{assignment_cost, solve_assignment, CostMatrix};
pub use decoder::{
    ctc_collapse, parse_emissions, prefix_beam_search, rescore_nbest, BeamSearchParams,
    EmissionMatrix, Hypothesis,
};
pub use eval::{cer, eval_timelines, EvalReport, VideoEval};
pub use extractor::{
    build_visual_timeline, build_visual_timeline_default, DetectionScorer, ExtractorParams,
    TrackClassifier,
};
pub use fusion::{fuse, FusionAudit, FusionConfig};
pub use lm::{train_lm, DualLm, DualLmConfig, NGramModel};
pub use model::{
    parse_asr_segments, parse_ocr_frames, parse_timeline_json, write_srt, write_timeline_json,
    AsrDocument, AsrSegment, BoundingQuad, CandidateText, FrameDetection, OcrDocument, OcrFrame,
    SegmentSource, SubtitleSegment, Timeline,
};
pub use synth::{default_truth_lines, generate_corpus, rotated_lines, NoiseProfile};
pub use textsim::{
    best_window_match, char_similarity, edit_distance, syllable_similarity, SyllableTable,
};
pub use tracker::{position_filter, run_tracker, TextTrack, Tracker, TrackerParams};
