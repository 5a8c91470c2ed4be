//! Turns tracked OCR detections into a visual subtitle timeline.
//!
//! The pipeline pre-filters detections with a cheap image-score heuristic,
//! associates the survivors into tracks, keeps tracks in the dominant
//! vertical band, classifies them as subtitle or background text, and merges
//! each track's frame texts into time segments.

use crate::model::{
    CandidateText, FrameDetection, OcrDocument, OcrFrame, SegmentSource, SubtitleSegment, Timeline,
};
use crate::textsim::char_similarity;
use crate::tracker::{position_filter, run_tracker, TextTrack, TrackError, TrackerParams};

#[derive(Debug, Clone)]
pub struct ExtractorParams {
    /// Detections scoring below this are removed before tracking.
    pub image_score_threshold: f64,
    /// Within a track, a frame text starts a new segment when its similarity
    /// to the running representative drops below this.
    pub merge_similarity_threshold: f64,
    /// Tracks with fewer entries than this are classified as background.
    pub min_track_frames: usize,
    /// Tracks whose classifier score falls below this are dropped.
    pub keep_threshold: f64,
    /// Disable to keep tracks outside the dominant vertical band.
    pub position_filter_enabled: bool,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl Default for ExtractorParams {
    fn default() -> Self {
        Self {
            image_score_threshold: 0.05,
            merge_similarity_threshold: 0.6,
            min_track_frames: 3,
            keep_threshold: 0.5,
            position_filter_enabled: true,
            frame_width: 1920.0,
            frame_height: 1080.0,
        }
    }
}

/// Scores a single detection's likelihood of being subtitle text.
pub trait DetectionScorer {
    fn score(&self, detection: &FrameDetection, frame_w: f64, frame_h: f64) -> f64;
}

/// Scores a whole track from its per-frame texts.
pub trait TrackClassifier {
    fn score(&self, texts: &[&str]) -> f64;
}

/// Heuristic stand-in for a learned image classifier: subtitle boxes are
/// wide, sit low in the frame, and carry confident recognitions.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultDetectionScorer;

impl DetectionScorer for DefaultDetectionScorer {
    fn score(&self, detection: &FrameDetection, _frame_w: f64, frame_h: f64) -> f64 {
        let height = detection.quad.height();
        let aspect = if height > 0.0 {
            detection.quad.width() / height
        } else {
            0.0
        };
        let aspect_factor = if aspect >= 2.0 { 1.0 } else { aspect / 2.0 };
        let vertical_factor = if detection.quad.y_center() >= 0.6 * frame_h {
            1.0
        } else {
            0.2
        };
        aspect_factor * vertical_factor * detection.conf
    }
}

/// Default stand-in for a learned text classifier: real subtitles persist
/// for a few frames and read as at least two characters.
#[derive(Debug, Clone, Copy)]
pub struct DefaultTrackClassifier {
    pub min_track_frames: usize,
}

impl TrackClassifier for DefaultTrackClassifier {
    fn score(&self, texts: &[&str]) -> f64 {
        if texts.len() < self.min_track_frames {
            return 0.0;
        }
        let majority = majority_text(texts);
        if majority.chars().count() >= 2 {
            1.0
        } else {
            0.0
        }
    }
}

/// Most frequent text; ties broken by earliest occurrence.
fn majority_text<'a>(texts: &[&'a str]) -> &'a str {
    let mut best: Option<(&str, usize, usize)> = None;
    for (i, &t) in texts.iter().enumerate() {
        if best.is_some_and(|(b, _, _)| b == t) {
            continue;
        }
        let count = texts.iter().filter(|&&x| x == t).count();
        match best {
            Some((_, c, first))
                if (count, std::cmp::Reverse(i)) <= (c, std::cmp::Reverse(first)) => {}
            _ => best = Some((t, count, i)),
        }
    }
    best.map_or("", |(t, _, _)| t)
}

pub fn default_image_score(detection: &FrameDetection, frame_w: f64, frame_h: f64) -> f64 {
    DefaultDetectionScorer.score(detection, frame_w, frame_h)
}

/// Removes detections scoring below `threshold`; frame structure survives.
pub fn filter_detections(
    frames: &[OcrFrame],
    scorer: &dyn DetectionScorer,
    threshold: f64,
    frame_w: f64,
    frame_h: f64,
) -> Vec<OcrFrame> {
    frames
        .iter()
        .map(|frame| OcrFrame {
            frame_index: frame.frame_index,
            time_ms: frame.time_ms,
            detections: frame
                .detections
                .iter()
                .filter(|d| scorer.score(d, frame_w, frame_h) >= threshold)
                .cloned()
                .collect(),
        })
        .collect()
}

/// Returns true when the classifier keeps the track.
pub fn classify_track(
    track: &TextTrack,
    classifier: &dyn TrackClassifier,
    keep_threshold: f64,
) -> bool {
    let texts: Vec<&str> = track.entries.iter().map(|e| e.text.as_str()).collect();
    classifier.score(&texts) >= keep_threshold
}

/// A run of consecutive track entries reading as one subtitle line.
struct SegmentDraft<'a> {
    entries: Vec<&'a FrameDetection>,
}

impl<'a> SegmentDraft<'a> {
    fn representative(&self) -> &'a str {
        // Majority text; ties by highest mean conf, then earliest occurrence.
        let mut best: Option<(&str, usize, f64, usize)> = None;
        for (i, entry) in self.entries.iter().enumerate() {
            let text = entry.text.as_str();
            if best.is_some_and(|(b, _, _, _)| b == text) {
                continue;
            }
            let matching: Vec<&&FrameDetection> =
                self.entries.iter().filter(|e| e.text == text).collect();
            let count = matching.len();
            let mean_conf = matching.iter().map(|e| e.conf).sum::<f64>() / count as f64;
            let better = match best {
                None => true,
                Some((_, bc, bconf, bfirst)) => {
                    count > bc
                        || (count == bc && mean_conf > bconf)
                        || (count == bc && mean_conf == bconf && i < bfirst)
                }
            };
            if better {
                best = Some((text, count, mean_conf, i));
            }
        }
        best.map_or("", |(t, _, _, _)| t)
    }

    fn into_segment(self) -> SubtitleSegment {
        let text = self.representative().to_string();
        let start_ms = self.entries.first().expect("draft is non-empty").time_ms;
        let end_ms = self.entries.last().expect("draft is non-empty").time_ms;
        let mut candidates: Vec<CandidateText> = Vec::new();
        for entry in &self.entries {
            if candidates.iter().any(|c| c.text == entry.text) {
                continue;
            }
            let matching: Vec<&&FrameDetection> = self
                .entries
                .iter()
                .filter(|e| e.text == entry.text)
                .collect();
            candidates.push(CandidateText {
                text: entry.text.clone(),
                support_count: matching.len() as u64,
                mean_conf: matching.iter().map(|e| e.conf).sum::<f64>() / matching.len() as f64,
            });
        }
        SubtitleSegment {
            start_ms,
            end_ms,
            text,
            source: SegmentSource::Visual,
            candidates,
        }
    }
}

/// Merges a track's frame texts into segments, splitting whenever a frame
/// text drifts too far from the running representative.
pub fn merge_track_text(
    track: &TextTrack,
    merge_similarity_threshold: f64,
) -> Vec<SubtitleSegment> {
    let mut segments = Vec::new();
    let mut draft: Option<SegmentDraft> = None;
    for entry in &track.entries {
        match draft.as_mut() {
            Some(d)
                if char_similarity(d.representative(), &entry.text)
                    >= merge_similarity_threshold =>
            {
                d.entries.push(entry);
            }
            _ => {
                if let Some(done) = draft.take() {
                    segments.push(done.into_segment());
                }
                draft = Some(SegmentDraft {
                    entries: vec![entry],
                });
            }
        }
    }
    if let Some(done) = draft {
        segments.push(done.into_segment());
    }
    segments
}

/// Runs the full visual pipeline over one video's OCR frames.
pub fn build_visual_timeline(
    doc: &OcrDocument,
    tracker_params: &TrackerParams,
    params: &ExtractorParams,
    scorer: &dyn DetectionScorer,
    classifier: &dyn TrackClassifier,
) -> Result<Timeline, TrackError> {
    let mut frames: Vec<OcrFrame> = doc
        .frames
        .iter()
        .map(|f| OcrFrame {
            frame_index: f.frame_index,
            time_ms: f.time_ms,
            detections: f
                .detections
                .iter()
                .filter(|d| !d.text.is_empty())
                .cloned()
                .collect(),
        })
        .collect();
    frames = filter_detections(
        &frames,
        scorer,
        params.image_score_threshold,
        params.frame_width,
        params.frame_height,
    );
    let mut tracks = run_tracker(&frames, tracker_params)?;
    if params.position_filter_enabled {
        tracks = position_filter(tracks, params.frame_height, tracker_params);
    }
    let mut segments: Vec<SubtitleSegment> = Vec::new();
    for track in &tracks {
        if track.entries.is_empty() {
            continue;
        }
        if !classify_track(track, classifier, params.keep_threshold) {
            continue;
        }
        segments.extend(merge_track_text(track, params.merge_similarity_threshold));
    }
    segments.sort_by(|a, b| {
        a.start_ms
            .cmp(&b.start_ms)
            .then(a.end_ms.cmp(&b.end_ms))
            .then_with(|| a.text.cmp(&b.text))
    });
    // Concurrent tracks can overlap in time. Clip each later segment to start
    // where the earlier coverage ends, and drop segments it swallows whole.
    let mut clipped: Vec<SubtitleSegment> = Vec::new();
    let mut running_end = i64::MIN;
    for mut seg in segments {
        if running_end > i64::MIN && seg.start_ms < running_end {
            if seg.end_ms <= running_end {
                continue;
            }
            seg.start_ms = running_end;
        }
        running_end = running_end.max(seg.end_ms);
        clipped.push(seg);
    }
    let timeline = Timeline {
        video_id: doc.video_id.clone(),
        segments: clipped,
    };
    timeline
        .validate()
        .expect("extractor output satisfies timeline invariants");
    Ok(timeline)
}

/// Convenience wrapper wiring the default scorer and classifier.
pub fn build_visual_timeline_default(
    doc: &OcrDocument,
    tracker_params: &TrackerParams,
    params: &ExtractorParams,
) -> Result<Timeline, TrackError> {
    build_visual_timeline(
        doc,
        tracker_params,
        params,
        &DefaultDetectionScorer,
        &DefaultTrackClassifier {
            min_track_frames: params.min_track_frames,
        },
    )
}

/// Pairs recognized lines with weak transcripts by greedy best-similarity
/// matching. Returns (weak index, recognized index) pairs, each side matched
/// at most once, sorted by weak index.
pub fn assign_weak_labels(
    recognized: &[(String, crate::model::BoundingQuad)],
    weak_transcripts: &[String],
    match_threshold: f64,
) -> Vec<(usize, usize)> {
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for (w, weak) in weak_transcripts.iter().enumerate() {
        for (r, (text, _)) in recognized.iter().enumerate() {
            let sim = char_similarity(weak, text);
            if sim >= match_threshold {
                scored.push((sim, w, r));
            }
        }
    }
    // Highest similarity first; ties by (weak index, recognized index).
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut weak_taken = vec![false; weak_transcripts.len()];
    let mut rec_taken = vec![false; recognized.len()];
    let mut pairs = Vec::new();
    for (_, w, r) in scored {
        if weak_taken[w] || rec_taken[r] {
            continue;
        }
        weak_taken[w] = true;
        rec_taken[r] = true;
        pairs.push((w, r));
    }
    pairs.sort_unstable();
    pairs
}
