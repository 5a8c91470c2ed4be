//! Character error rate over whole videos.
//!
//! Scoring is text-level: each timeline's segment texts are concatenated in
//! time order and compared by edit distance, with whitespace ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Timeline;
use crate::textsim::edit_distance;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error("hypothesis for unknown video {0}")]
    UnknownVideo(String),
}

fn strip(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

/// edit_distance(ref, hyp) / |ref|, both sides whitespace-stripped.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, EvalError> {
    let r = strip(reference);
    let h = strip(hypothesis);
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(edit_distance(&r, &h) as f64 / r.chars().count() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoEval {
    pub video_id: String,
    pub edits: u64,
    pub ref_chars: u64,
    pub cer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_video: Vec<VideoEval>,
    /// Pooled: total edits / total reference characters.
    pub aggregate_cer: f64,
}

impl EvalReport {
    /// Unweighted mean of the per-video rates.
    pub fn macro_cer(&self) -> f64 {
        if self.per_video.is_empty() {
            return 0.0;
        }
        self.per_video.iter().map(|v| v.cer).sum::<f64>() / self.per_video.len() as f64
    }

    /// Plain-text table, one row per video plus the aggregate.
    pub fn to_table(&self) -> String {
        let mut out = String::from("video_id\tedits\tref_chars\tcer\n");
        for v in &self.per_video {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\n",
                v.video_id, v.edits, v.ref_chars, v.cer
            ));
        }
        out.push_str(&format!("aggregate\t\t\t{:.4}\n", self.aggregate_cer));
        out
    }
}

/// Scores hypothesis timelines against references, video by video.
/// Reference videos missing a hypothesis count as fully deleted; a
/// hypothesis for a video absent from the references is an error.
pub fn eval_timelines(
    refs: &BTreeMap<String, Timeline>,
    hyps: &BTreeMap<String, Timeline>,
) -> Result<EvalReport, EvalError> {
    for id in hyps.keys() {
        if !refs.contains_key(id) {
            return Err(EvalError::UnknownVideo(id.clone()));
        }
    }
    let mut per_video = Vec::with_capacity(refs.len());
    let mut total_edits = 0u64;
    let mut total_chars = 0u64;
    for (id, reference) in refs {
        let ref_text = strip(&reference.concat_text());
        if ref_text.is_empty() {
            return Err(EvalError::EmptyReference);
        }
        let hyp_text = hyps
            .get(id)
            .map(|t| strip(&t.concat_text()))
            .unwrap_or_default();
        let edits = edit_distance(&ref_text, &hyp_text) as u64;
        let ref_chars = ref_text.chars().count() as u64;
        per_video.push(VideoEval {
            video_id: id.clone(),
            edits,
            ref_chars,
            cer: edits as f64 / ref_chars as f64,
        });
        total_edits += edits;
        total_chars += ref_chars;
    }
    Ok(EvalReport {
        per_video,
        aggregate_cer: if total_chars == 0 {
            0.0
        } else {
            total_edits as f64 / total_chars as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SegmentSource, SubtitleSegment};
    use proptest::prelude::*;

    fn timeline(id: &str, texts: &[(&str, i64, i64)]) -> Timeline {
        Timeline {
            video_id: id.to_string(),
            segments: texts
                .iter()
                .map(|(t, s, e)| SubtitleSegment {
                    start_ms: *s,
                    end_ms: *e,
                    text: t.to_string(),
                    source: SegmentSource::Visual,
                    candidates: vec![crate::model::CandidateText {
                        text: t.to_string(),
                        support_count: 1,
                        mean_conf: 1.0,
                    }],
                })
                .collect(),
        }
    }

    #[test]
    fn cer_basics() {
        assert_eq!(cer("你好世界", "你好世界").unwrap(), 0.0);
        assert_eq!(cer("abcd", "abed").unwrap(), 0.25);
        assert_eq!(cer("ab", "").unwrap(), 1.0);
        assert!(matches!(cer("", "x"), Err(EvalError::EmptyReference)));
        assert!(matches!(cer("   ", "x"), Err(EvalError::EmptyReference)));
    }

    #[test]
    fn cer_ignores_whitespace() {
        assert_eq!(cer(" 你好 世界 ", "你好世界").unwrap(), 0.0);
        assert_eq!(cer("你好世界", "你 好 世 界").unwrap(), 0.0);
    }

    #[test]
    fn pooled_aggregate_weights_by_length() {
        let mut refs = BTreeMap::new();
        refs.insert("a".to_string(), timeline("a", &[("四个字吧", 0, 1000)]));
        refs.insert("b".to_string(), timeline("b", &[("也是四个", 0, 1000)]));
        let mut hyps = BTreeMap::new();
        hyps.insert("a".to_string(), timeline("a", &[("四个字吧", 0, 1000)]));
        hyps.insert("b".to_string(), timeline("b", &[("全都不对", 0, 1000)]));
        let report = eval_timelines(&refs, &hyps).unwrap();
        assert_eq!(report.aggregate_cer, 0.5);
        assert_eq!(report.macro_cer(), 0.5);
        assert_eq!(report.per_video.len(), 2);
        assert_eq!(report.per_video[0].cer, 0.0);
        assert_eq!(report.per_video[1].cer, 1.0);
    }

    #[test]
    fn missing_hypothesis_counts_as_deleted() {
        let mut refs = BTreeMap::new();
        refs.insert("a".to_string(), timeline("a", &[("你好世界", 0, 1000)]));
        let report = eval_timelines(&refs, &BTreeMap::new()).unwrap();
        assert_eq!(report.per_video[0].cer, 1.0);
    }

    #[test]
    fn unknown_hypothesis_video_is_an_error() {
        let refs = BTreeMap::new();
        let mut hyps = BTreeMap::new();
        hyps.insert("ghost".to_string(), timeline("ghost", &[("x y", 0, 1)]));
        assert!(matches!(
            eval_timelines(&refs, &hyps),
            Err(EvalError::UnknownVideo(id)) if id == "ghost"
        ));
    }

    #[test]
    fn empty_reference_concat_is_an_error() {
        let mut refs = BTreeMap::new();
        refs.insert("a".to_string(), timeline("a", &[]));
        let report = eval_timelines(&refs, &BTreeMap::new());
        assert!(matches!(report, Err(EvalError::EmptyReference)));
    }

    #[test]
    fn segments_concatenate_in_time_order() {
        let mut refs = BTreeMap::new();
        refs.insert(
            "a".to_string(),
            timeline("a", &[("前半句", 0, 1000), ("后半句", 1500, 2500)]),
        );
        let mut hyps = BTreeMap::new();
        hyps.insert("a".to_string(), timeline("a", &[("前半句后半句", 0, 2500)]));
        let report = eval_timelines(&refs, &hyps).unwrap();
        assert_eq!(report.aggregate_cer, 0.0);
    }

    proptest! {
        /// cer(x, x) = 0 and whitespace padding never changes the score.
        #[test]
        fn cer_self_is_zero(text in "[a-z\u{4e00}-\u{4e3f}]{1,20}") {
            prop_assert_eq!(cer(&text, &text).unwrap(), 0.0);
            let padded = format!("  {text}\t");
            prop_assert_eq!(cer(&padded, &text).unwrap(), 0.0);
        }

        /// The pooled aggregate lies between the per-video extremes.
        #[test]
        fn pooled_between_min_and_max(
            pairs in proptest::collection::vec(("[ab]{1,8}", "[ab]{0,8}"), 1..6),
        ) {
            let mut refs = BTreeMap::new();
            let mut hyps = BTreeMap::new();
            for (i, (r, h)) in pairs.iter().enumerate() {
                let id = format!("v{i}");
                refs.insert(id.clone(), timeline(&id, &[(r, 0, 1000)]));
                hyps.insert(id.clone(), timeline(&id, &[(h, 0, 1000)]));
            }
            let report = eval_timelines(&refs, &hyps).unwrap();
            let lo = report.per_video.iter().map(|v| v.cer).fold(f64::INFINITY, f64::min);
            let hi = report.per_video.iter().map(|v| v.cer).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(report.aggregate_cer >= lo - 1e-12);
            prop_assert!(report.aggregate_cer <= hi + 1e-12);
        }
    }
}
