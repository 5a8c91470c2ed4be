//! Domain types and the on-disk JSON/SRT formats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at byte {offset} (line {line}, column {column}): {msg}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{0}")]
    Validation(String),
}

impl ModelError {
    pub(crate) fn from_json(src: &[u8], err: &serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        ModelError::Parse {
            offset: byte_offset(src, line, column),
            line,
            column,
            msg: err.to_string(),
        }
    }
}

/// Translates serde_json's 1-based line/column into a byte offset.
fn byte_offset(src: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut remaining = line - 1;
    let mut pos = 0usize;
    while remaining > 0 && pos < src.len() {
        if src[pos] == b'\n' {
            remaining -= 1;
        }
        pos += 1;
    }
    (pos + column.saturating_sub(1)).min(src.len())
}

/// Four-point text region in pixel space, corner order TL, TR, BR, BL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundingQuad {
    pub points: [[f64; 2]; 4],
}

impl BoundingQuad {
    pub fn new(points: [[f64; 2]; 4]) -> Result<Self, ModelError> {
        let quad = Self { points };
        quad.validate()?;
        Ok(quad)
    }

    /// Axis-aligned rectangle helper, corner order TL, TR, BR, BL.
    pub fn from_rect(x: f64, y: f64, width: f64, height: f64) -> Result<Self, ModelError> {
        Self::new([
            [x, y],
            [x + width, y],
            [x + width, y + height],
            [x, y + height],
        ])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for [x, y] in self.points {
            if !x.is_finite() || !y.is_finite() || x < 0.0 || y < 0.0 {
                return Err(ModelError::Validation(format!(
                    "quad corner ({x}, {y}) is not finite and non-negative"
                )));
            }
        }
        if self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(ModelError::Validation(
                "quad envelope must have positive width and height".into(),
            ));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn x_max(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn y_min(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn y_max(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn width(&self) -> f64 {
        self.x_max() - self.x_min()
    }

    pub fn height(&self) -> f64 {
        self.y_max() - self.y_min()
    }

    pub fn y_center(&self) -> f64 {
        (self.y_min() + self.y_max()) / 2.0
    }
}

/// One OCR detection tied to the frame it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetection {
    pub frame_index: u64,
    pub time_ms: i64,
    pub quad: BoundingQuad,
    pub text: String,
    pub conf: f64,
}

/// All detections of one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OcrFrame {
    pub frame_index: u64,
    pub time_ms: i64,
    pub detections: Vec<FrameDetection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrDocument {
    pub video_id: String,
    pub frames: Vec<OcrFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrSegment {
    pub start_ms: i64,
    pub end_ms: i64,
    pub text: String,
    pub conf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrDocument {
    pub video_id: String,
    pub segments: Vec<AsrSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentSource {
    Visual,
    AudioPad,
    Fused,
}

/// One observed reading of a segment with how often and how confidently
/// it was seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateText {
    pub text: String,
    pub support_count: u64,
    pub mean_conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleSegment {
    pub start_ms: i64,
    pub end_ms: i64,
    pub text: String,
    pub source: SegmentSource,
    pub candidates: Vec<CandidateText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub video_id: String,
    pub segments: Vec<SubtitleSegment>,
}

impl Timeline {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut running_end = i64::MIN;
        let mut prev_start = i64::MIN;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.start_ms > seg.end_ms {
                return Err(ModelError::Validation(format!(
                    "segment {i}: start_ms {} > end_ms {}",
                    seg.start_ms, seg.end_ms
                )));
            }
            if seg.start_ms < prev_start {
                return Err(ModelError::Validation(format!(
                    "segment {i}: segments not sorted by start_ms"
                )));
            }
            if running_end > i64::MIN {
                let overlap = seg.end_ms.min(running_end) - seg.start_ms;
                if overlap > 0 {
                    return Err(ModelError::Validation(format!(
                        "segment {i}: overlaps an earlier segment by {overlap} ms"
                    )));
                }
            }
            if !seg.candidates.is_empty() && !seg.candidates.iter().any(|c| c.text == seg.text) {
                return Err(ModelError::Validation(format!(
                    "segment {i}: text is not one of its candidates"
                )));
            }
            for c in &seg.candidates {
                if c.support_count < 1 {
                    return Err(ModelError::Validation(format!(
                        "segment {i}: candidate {:?} has support_count 0",
                        c.text
                    )));
                }
                if !(0.0..=1.0).contains(&c.mean_conf) {
                    return Err(ModelError::Validation(format!(
                        "segment {i}: candidate {:?} has mean_conf outside [0, 1]",
                        c.text
                    )));
                }
            }
            prev_start = seg.start_ms;
            running_end = running_end.max(seg.end_ms);
        }
        Ok(())
    }

    /// Segment texts joined in start order with no separator.
    pub fn concat_text(&self) -> String {
        let mut idx: Vec<usize> = (0..self.segments.len()).collect();
        idx.sort_by_key(|&i| (self.segments[i].start_ms, self.segments[i].end_ms, i));
        idx.iter()
            .map(|&i| self.segments[i].text.as_str())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct RawDetection {
    quad: BoundingQuad,
    text: String,
    conf: f64,
}

#[derive(Serialize, Deserialize)]
struct RawOcrFrame {
    frame_index: u64,
    time_ms: i64,
    detections: Vec<RawDetection>,
}

#[derive(Serialize, Deserialize)]
struct RawOcrDocument {
    video_id: String,
    frames: Vec<RawOcrFrame>,
}

/// Parses an OCR frame document. Frames come back sorted by `frame_index`;
/// detections with empty text are kept (downstream stages drop them).
pub fn parse_ocr_frames(bytes: &[u8]) -> Result<OcrDocument, ModelError> {
    let raw: RawOcrDocument =
        serde_json::from_slice(bytes).map_err(|e| ModelError::from_json(bytes, &e))?;
    let mut frames = raw.frames;
    frames.sort_by_key(|f| f.frame_index);
    for pair in frames.windows(2) {
        if pair[0].frame_index == pair[1].frame_index {
            return Err(ModelError::Validation(format!(
                "duplicate frame_index {}",
                pair[0].frame_index
            )));
        }
        if pair[0].time_ms > pair[1].time_ms {
            return Err(ModelError::Validation(format!(
                "frame {}: time_ms decreases between frames",
                pair[1].frame_index
            )));
        }
    }
    let frames = frames
        .into_iter()
        .map(|f| {
            if f.time_ms < 0 {
                return Err(ModelError::Validation(format!(
                    "frame {}: negative time_ms",
                    f.frame_index
                )));
            }
            let detections = f
                .detections
                .into_iter()
                .map(|d| {
                    if !(0.0..=1.0).contains(&d.conf) {
                        return Err(ModelError::Validation(format!(
                            "frame {}: detection conf {} outside [0, 1]",
                            f.frame_index, d.conf
                        )));
                    }
                    d.quad.validate().map_err(|e| {
                        ModelError::Validation(format!("frame {}: {e}", f.frame_index))
                    })?;
                    Ok(FrameDetection {
                        frame_index: f.frame_index,
                        time_ms: f.time_ms,
                        quad: d.quad,
                        text: d.text,
                        conf: d.conf,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(OcrFrame {
                frame_index: f.frame_index,
                time_ms: f.time_ms,
                detections,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OcrDocument {
        video_id: raw.video_id,
        frames,
    })
}

pub fn write_ocr_json(doc: &OcrDocument) -> Vec<u8> {
    let raw = RawOcrDocument {
        video_id: doc.video_id.clone(),
        frames: doc
            .frames
            .iter()
            .map(|f| RawOcrFrame {
                frame_index: f.frame_index,
                time_ms: f.time_ms,
                detections: f
                    .detections
                    .iter()
                    .map(|d| RawDetection {
                        quad: d.quad,
                        text: d.text.clone(),
                        conf: d.conf,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&raw).expect("ocr document serializes");
    out.push(b'\n');
    out
}

/// Parses an ASR segment document, sorted by `start_ms` on return.
pub fn parse_asr_segments(bytes: &[u8]) -> Result<AsrDocument, ModelError> {
    let mut doc: AsrDocument =
        serde_json::from_slice(bytes).map_err(|e| ModelError::from_json(bytes, &e))?;
    for (i, seg) in doc.segments.iter().enumerate() {
        if seg.start_ms > seg.end_ms {
            return Err(ModelError::Validation(format!(
                "asr segment {i}: start_ms {} > end_ms {}",
                seg.start_ms, seg.end_ms
            )));
        }
        if seg.text.trim().is_empty() {
            return Err(ModelError::Validation(format!(
                "asr segment {i}: empty text"
            )));
        }
        if let Some(conf) = seg.conf {
            if !(0.0..=1.0).contains(&conf) {
                return Err(ModelError::Validation(format!(
                    "asr segment {i}: conf {conf} outside [0, 1]"
                )));
            }
        }
    }
    doc.segments.sort_by_key(|s| s.start_ms);
    Ok(doc)
}

pub fn write_asr_json(doc: &AsrDocument) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("asr document serializes");
    out.push(b'\n');
    out
}

pub fn parse_timeline_json(bytes: &[u8]) -> Result<Timeline, ModelError> {
    let timeline: Timeline =
        serde_json::from_slice(bytes).map_err(|e| ModelError::from_json(bytes, &e))?;
    timeline.validate()?;
    Ok(timeline)
}

pub fn write_timeline_json(timeline: &Timeline) -> Result<Vec<u8>, ModelError> {
    timeline.validate()?;
    let mut out = serde_json::to_vec_pretty(timeline).expect("timeline serializes");
    out.push(b'\n');
    Ok(out)
}

fn srt_timestamp(ms: i64) -> String {
    let hours = ms / 3_600_000;
    let minutes = (ms / 60_000) % 60;
    let seconds = (ms / 1000) % 60;
    let millis = ms % 1000;
    format!("{hours:02}:{minutes:02}:{seconds:02},{millis:03}")
}

/// Renders the timeline as SubRip text: 1-based cue index, time range,
/// text, blank line. UTF-8 with LF newlines; an empty timeline is empty
/// output.
pub fn write_srt(timeline: &Timeline) -> Result<Vec<u8>, ModelError> {
    timeline.validate()?;
    let mut out = String::new();
    for (i, seg) in timeline.segments.iter().enumerate() {
        if seg.start_ms < 0 {
            return Err(ModelError::Validation(format!(
                "segment {i}: negative start_ms cannot be written as SRT"
            )));
        }
        out.push_str(&format!(
            "{}\n{} --> {}\n{}\n\n",
            i + 1,
            srt_timestamp(seg.start_ms),
            srt_timestamp(seg.end_ms),
            seg.text
        ));
    }
    Ok(out.into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad() -> BoundingQuad {
        BoundingQuad::from_rect(10.0, 20.0, 100.0, 30.0).unwrap()
    }

    fn segment(start: i64, end: i64, text: &str) -> SubtitleSegment {
        SubtitleSegment {
            start_ms: start,
            end_ms: end,
            text: text.to_string(),
            source: SegmentSource::Visual,
            candidates: vec![CandidateText {
                text: text.to_string(),
                support_count: 1,
                mean_conf: 1.0,
            }],
        }
    }

    #[test]
    fn quad_envelope_accessors() {
        let q = quad();
        assert_eq!(q.x_min(), 10.0);
        assert_eq!(q.x_max(), 110.0);
        assert_eq!(q.width(), 100.0);
        assert_eq!(q.height(), 30.0);
        assert_eq!(q.y_center(), 35.0);
    }

    #[test]
    fn quad_rejects_degenerate_and_negative() {
        assert!(BoundingQuad::new([[0.0, 0.0]; 4]).is_err());
        assert!(BoundingQuad::from_rect(-1.0, 0.0, 5.0, 5.0).is_err());
        assert!(BoundingQuad::new([[0.0, 0.0], [f64::NAN, 0.0], [1.0, 1.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn ocr_parse_sorts_and_validates() {
        let json = br#"{
            "video_id": "v1",
            "frames": [
                {"frame_index": 2, "time_ms": 80, "detections": []},
                {"frame_index": 1, "time_ms": 40, "detections": [
                    {"quad": [[0,0],[10,0],[10,5],[0,5]], "text": "hi", "conf": 0.9},
                    {"quad": [[0,0],[10,0],[10,5],[0,5]], "text": "", "conf": 0.9}
                ]}
            ]
        }"#;
        let doc = parse_ocr_frames(json).unwrap();
        assert_eq!(doc.frames[0].frame_index, 1);
        assert_eq!(doc.frames[0].detections.len(), 2);
        assert_eq!(doc.frames[0].detections[0].time_ms, 40);
    }

    #[test]
    fn ocr_parse_rejects_bad_conf_with_frame_index() {
        let json = br#"{"video_id": "v", "frames": [
            {"frame_index": 7, "time_ms": 0, "detections": [
                {"quad": [[0,0],[1,0],[1,1],[0,1]], "text": "x", "conf": 1.5}
            ]}]}"#;
        let err = parse_ocr_frames(json).unwrap_err();
        assert!(err.to_string().contains("frame 7"), "{err}");
    }

    #[test]
    fn ocr_parse_rejects_time_regression() {
        let json = br#"{"video_id": "v", "frames": [
            {"frame_index": 1, "time_ms": 100, "detections": []},
            {"frame_index": 2, "time_ms": 50, "detections": []}]}"#;
        assert!(parse_ocr_frames(json).is_err());
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let json = b"{\n  \"video_id\": 3,\n}";
        match parse_ocr_frames(json).unwrap_err() {
            ModelError::Parse { offset, .. } => assert!(offset > 0 && offset <= json.len()),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn asr_parse_sorts_and_rejects_empty_text() {
        let ok = br#"{"video_id":"v","segments":[
            {"start_ms":500,"end_ms":700,"text":"b","conf":null},
            {"start_ms":0,"end_ms":400,"text":"a","conf":0.5}]}"#;
        let doc = parse_asr_segments(ok).unwrap();
        assert_eq!(doc.segments[0].text, "a");
        let bad =
            br#"{"video_id":"v","segments":[{"start_ms":0,"end_ms":1,"text":"  ","conf":null}]}"#;
        assert!(parse_asr_segments(bad).is_err());
        let order =
            br#"{"video_id":"v","segments":[{"start_ms":5,"end_ms":1,"text":"a","conf":null}]}"#;
        assert!(parse_asr_segments(order).is_err());
    }

    #[test]
    fn timeline_validation_rules() {
        let tl = Timeline {
            video_id: "v".into(),
            segments: vec![segment(0, 100, "a"), segment(100, 200, "b")],
        };
        tl.validate().unwrap();

        let overlapping = Timeline {
            video_id: "v".into(),
            segments: vec![segment(0, 150, "a"), segment(100, 200, "b")],
        };
        assert!(overlapping.validate().is_err());

        let mut bad_text = tl.clone();
        bad_text.segments[0].text = "other".into();
        assert!(bad_text.validate().is_err());

        // A zero-length segment sitting inside an earlier span overlaps by 0 ms.
        let point = Timeline {
            video_id: "v".into(),
            segments: vec![segment(0, 100, "a"), segment(60, 60, "b")],
        };
        point.validate().unwrap();
    }

    #[test]
    fn srt_bit_exact() {
        let tl = Timeline {
            video_id: "v".into(),
            segments: vec![segment(0, 2000, "hello")],
        };
        let bytes = write_srt(&tl).unwrap();
        assert_eq!(bytes, b"1\n00:00:00,000 --> 00:00:02,000\nhello\n\n");
        assert_eq!(srt_timestamp(3_661_001), "01:01:01,001");
        let empty = Timeline {
            video_id: "v".into(),
            segments: vec![],
        };
        assert!(write_srt(&empty).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn timeline_json_round_trip(
            starts in proptest::collection::vec(0i64..5000, 0..6),
            confs in proptest::collection::vec(0.0f64..=1.0, 6),
        ) {
            let mut at = 0i64;
            let mut segments = Vec::new();
            for (i, gap) in starts.iter().enumerate() {
                let start = at + gap;
                let end = start + 100 + (i as i64) * 7;
                segments.push(SubtitleSegment {
                    start_ms: start,
                    end_ms: end,
                    text: format!("seg{i}"),
                    source: if i % 2 == 0 { SegmentSource::Visual } else { SegmentSource::Fused },
                    candidates: vec![CandidateText {
                        text: format!("seg{i}"),
                        support_count: 1 + i as u64,
                        mean_conf: confs[i % confs.len()],
                    }],
                });
                at = end;
            }
            let tl = Timeline { video_id: "vid".into(), segments };
            let bytes = write_timeline_json(&tl).unwrap();
            let back = parse_timeline_json(&bytes).unwrap();
            prop_assert_eq!(back, tl);
        }

        #[test]
        fn srt_cue_count_matches_segments(n in 0usize..8) {
            let segments: Vec<_> = (0..n)
                .map(|i| segment(i as i64 * 1000, i as i64 * 1000 + 500, &format!("t{i}")))
                .collect();
            let tl = Timeline { video_id: "v".into(), segments };
            let srt = String::from_utf8(write_srt(&tl).unwrap()).unwrap();
            let cues = srt.matches(" --> ").count();
            prop_assert_eq!(cues, n);
        }
    }
}
