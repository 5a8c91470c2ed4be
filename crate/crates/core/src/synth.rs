//! Deterministic synthetic corpus generator.
//!
//! Builds matched OCR frames, ASR segments, and a ground-truth timeline for
//! one video, with controllable noise: per-frame OCR character errors
//! (random and homophone substitutions), dropped detections, background
//! text boxes off the subtitle band, ASR substitutions, and merge faults
//! that render two adjacent subtitle lines in one box to provoke the
//! downstream splitter. Identical inputs and seed give byte-identical
//! output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AsrSegment, BoundingQuad, CandidateText, FrameDetection, OcrDocument, OcrFrame, SegmentSource,
    SubtitleSegment, Timeline,
};
use crate::textsim::SyllableTable;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("truth lines must be non-empty")]
    NoLines,
    #[error("truth line {0} is empty")]
    EmptyLine(usize),
    #[error("rate {name} = {value} outside [0, 1]")]
    BadRate { name: &'static str, value: f64 },
    #[error("fps must be positive")]
    BadFps,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseProfile {
    pub seed: u64,
    /// Per frame: chance of one random character substitution.
    pub char_sub_rate: f64,
    /// Per frame: chance of one homophone substitution; skipped on frames
    /// that already took a random substitution.
    pub char_homophone_rate: f64,
    /// Per frame: chance the subtitle detection is dropped.
    pub det_drop_rate: f64,
    /// Per frame: chance of one background text box off the subtitle band.
    pub bg_text_rate: f64,
    /// Per ASR character: substitution chance.
    pub asr_sub_rate: f64,
    /// Per adjacent line pair: chance both render in one shared box.
    pub merge_fault_rate: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            seed: 0,
            char_sub_rate: 0.0,
            char_homophone_rate: 0.0,
            det_drop_rate: 0.0,
            bg_text_rate: 0.0,
            asr_sub_rate: 0.0,
            merge_fault_rate: 0.0,
        }
    }
}

impl NoiseProfile {
    fn validate(&self) -> Result<(), SynthError> {
        for (name, value) in [
            ("char_sub_rate", self.char_sub_rate),
            ("char_homophone_rate", self.char_homophone_rate),
            ("det_drop_rate", self.det_drop_rate),
            ("bg_text_rate", self.bg_text_rate),
            ("asr_sub_rate", self.asr_sub_rate),
            ("merge_fault_rate", self.merge_fault_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::BadRate { name, value });
            }
        }
        Ok(())
    }
}

/// Sixteen subtitle lines built from the syllable table's vocabulary.
///
/// Six adjacent pairs share a long prefix and diverge in their tails, so
/// each pair's similarity sits in the 0.6..0.8 band with one character of
/// headroom on both sides: a merge fault survives track-text merging as
/// one segment even when a frame carries a character error, yet the two
/// texts never land in one candidate cluster, so fusion can split them.
pub fn default_truth_lines() -> Vec<String> {
    [
        "他可能就是一个感冒很难好的",
        "他可能就是一个感冒你们来看",
        "欢迎大家来我们学院",
        "到现在为止我没有借给她",
        "到现在为止我没有说几句话",
        "师父教我们学说话",
        "比如说感冒的病毒感染很难好",
        "比如说感冒的病毒感染不会有事吗",
        "但是他从不睬我们",
        "妈妈在医院看病的话很难好吗",
        "妈妈在医院看病的话给多少钱",
        "大概十多年吗",
        "医生说你父母的病一年就会好的",
        "医生说你父母的病一年都不清楚",
        "你们都是第一年来学院工作",
        "你们都是第一年来看病吗",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// A rotating window into the pool, so each video sees a different mix.
pub fn rotated_lines(pool: &[String], video_index: usize, count: usize) -> Vec<String> {
    let start = (video_index * 5) % pool.len().max(1);
    (0..count.min(pool.len()))
        .map(|i| pool[(start + i) % pool.len()].clone())
        .collect()
}

struct LineTiming {
    start_ms: i64,
    end_ms: i64,
}

const LEAD_IN_MS: i64 = 400;
const LINE_GAP_MS: i64 = 600;
const CHAR_W: f64 = 44.0;
const BOX_H: f64 = 56.0;
const SUBTITLE_CONF: f64 = 0.95;
const BG_CONF: f64 = 0.8;
const ASR_CONF: f64 = 0.9;

fn line_timings(lines: &[Vec<char>]) -> Vec<LineTiming> {
    let mut out = Vec::with_capacity(lines.len());
    let mut cursor = LEAD_IN_MS;
    for chars in lines {
        let dur = 1600 + 120 * chars.len() as i64;
        out.push(LineTiming {
            start_ms: cursor,
            end_ms: cursor + dur,
        });
        cursor += dur + LINE_GAP_MS;
    }
    out
}

fn subtitle_quad(len: usize, frame_w: f64, frame_h: f64) -> BoundingQuad {
    let w = CHAR_W * len as f64;
    let x0 = (frame_w - w) / 2.0;
    let y0 = frame_h - 128.0;
    BoundingQuad::from_rect(x0, y0, w, BOX_H).expect("subtitle boxes are valid")
}

/// Generates one video's OCR frames, ASR segments, and truth timeline.
pub fn generate_corpus(
    truth_lines: &[String],
    profile: &NoiseProfile,
    fps: f64,
    frame_dims: (f64, f64),
    video_id: &str,
) -> Result<(OcrDocument, Vec<AsrSegment>, Timeline), SynthError> {
    if truth_lines.is_empty() {
        return Err(SynthError::NoLines);
    }
    profile.validate()?;
    if fps.is_nan() || fps <= 0.0 {
        return Err(SynthError::BadFps);
    }
    let lines: Vec<Vec<char>> = truth_lines.iter().map(|l| l.chars().collect()).collect();
    for (i, chars) in lines.iter().enumerate() {
        if chars.is_empty() {
            return Err(SynthError::EmptyLine(i));
        }
    }
    let (frame_w, frame_h) = frame_dims;
    let table = SyllableTable::builtin();
    let vocab: Vec<char> = table.entries().iter().map(|(c, _)| *c).collect();
    let inverted = table.inverted();
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    let timings = line_timings(&lines);
    let period = 1000.0 / fps;
    let last_ms = timings.last().expect("lines are non-empty").end_ms + LEAD_IN_MS;
    let total_frames = (last_ms as f64 / period).floor() as u64 + 1;

    // Pass 1: merge-fault marks. Draw for every adjacent pair so the RNG
    // stream does not depend on which faults apply, then drop overlaps.
    let mut drawn = vec![false; lines.len().saturating_sub(1)];
    for slot in drawn.iter_mut() {
        *slot = rng.gen_bool(profile.merge_fault_rate);
    }
    let mut faulted = vec![false; drawn.len()];
    for i in 0..drawn.len() {
        if drawn[i] && (i == 0 || !faulted[i - 1]) {
            faulted[i] = true;
        }
    }

    // Pass 2: ASR substitutions.
    let mut asr = Vec::with_capacity(lines.len());
    for (i, chars) in lines.iter().enumerate() {
        let mut text: Vec<char> = chars.clone();
        for slot in text.iter_mut() {
            if rng.gen_bool(profile.asr_sub_rate) {
                *slot = vocab[rng.gen_range(0..vocab.len())];
            }
        }
        asr.push(AsrSegment {
            start_ms: timings[i].start_ms,
            end_ms: timings[i].end_ms,
            text: text.into_iter().collect(),
            conf: Some(ASR_CONF),
        });
    }

    // Pass 3: background text events, one draw per frame.
    let bg_w = 120.0;
    let bg_h = 60.0;
    let mut bg_events: Vec<Option<(f64, f64, char)>> = Vec::with_capacity(total_frames as usize);
    for _ in 0..total_frames {
        if rng.gen_bool(profile.bg_text_rate) {
            let x = rng.gen_range(0..=(frame_w - bg_w) as i64) as f64;
            let y = rng.gen_range(0..=(0.4 * frame_h - bg_h) as i64) as f64;
            let c = vocab[rng.gen_range(0..vocab.len())];
            bg_events.push(Some((x, y, c)));
        } else {
            bg_events.push(None);
        }
    }

    // Pass 4: frame rendering with per-frame OCR noise events.
    // A faulted pair renders in the longer line's box: the first line's
    // text holds through the gap, the second takes over at its own start.
    let fault_quad = |i: usize| -> BoundingQuad {
        let len = lines[i].len().max(lines[i + 1].len());
        subtitle_quad(len, frame_w, frame_h)
    };
    let mut frames = Vec::with_capacity(total_frames as usize);
    for f in 0..total_frames {
        let t = (f as f64 * period).round() as i64;
        let mut detections = Vec::new();
        let mut active: Option<(usize, BoundingQuad)> = None;
        for i in 0..lines.len() {
            let first_of_fault = i < faulted.len() && faulted[i];
            let second_of_fault = i > 0 && faulted[i - 1];
            let (lo, hi) = if first_of_fault {
                (timings[i].start_ms, timings[i + 1].start_ms - 1)
            } else {
                (timings[i].start_ms, timings[i].end_ms)
            };
            if t < lo || t > hi {
                continue;
            }
            let quad = if first_of_fault {
                fault_quad(i)
            } else if second_of_fault {
                fault_quad(i - 1)
            } else {
                subtitle_quad(lines[i].len(), frame_w, frame_h)
            };
            active = Some((i, quad));
            break;
        }
        if let Some((i, quad)) = active {
            let dropped = rng.gen_bool(profile.det_drop_rate);
            // At most one character edit per frame; a random substitution
            // preempts a homophone one. Both coins are tossed either way so
            // the random stream does not depend on the first outcome.
            let do_sub = rng.gen_bool(profile.char_sub_rate);
            let do_homophone = rng.gen_bool(profile.char_homophone_rate) && !do_sub;
            let mut text = lines[i].clone();
            if do_sub {
                let pos = rng.gen_range(0..text.len());
                text[pos] = vocab[rng.gen_range(0..vocab.len())];
            }
            if do_homophone {
                let capable: Vec<usize> = text
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| table.syllable(**c).is_some_and(|s| inverted[s].len() >= 2))
                    .map(|(p, _)| p)
                    .collect();
                if !capable.is_empty() {
                    let pos = capable[rng.gen_range(0..capable.len())];
                    let group: Vec<char> = inverted[table.syllable(text[pos]).expect("capable")]
                        .iter()
                        .copied()
                        .filter(|c| *c != text[pos])
                        .collect();
                    text[pos] = group[rng.gen_range(0..group.len())];
                }
            }
            if !dropped {
                detections.push(FrameDetection {
                    frame_index: f,
                    time_ms: t,
                    quad,
                    text: text.into_iter().collect(),
                    conf: SUBTITLE_CONF,
                });
            }
        }
        if let Some((x, y, c)) = bg_events[f as usize] {
            detections.push(FrameDetection {
                frame_index: f,
                time_ms: t,
                quad: BoundingQuad::from_rect(x, y, bg_w, bg_h)
                    .expect("background boxes are valid"),
                text: c.to_string(),
                conf: BG_CONF,
            });
        }
        frames.push(OcrFrame {
            frame_index: f,
            time_ms: t,
            detections,
        });
    }

    let truth = Timeline {
        video_id: video_id.to_string(),
        segments: lines
            .iter()
            .zip(&timings)
            .map(|(chars, timing)| {
                let text: String = chars.iter().collect();
                SubtitleSegment {
                    start_ms: timing.start_ms,
                    end_ms: timing.end_ms,
                    text: text.clone(),
                    source: SegmentSource::Visual,
                    candidates: vec![CandidateText {
                        text,
                        support_count: 1,
                        mean_conf: 1.0,
                    }],
                }
            })
            .collect(),
    };
    truth.validate().expect("truth timeline is valid");
    let doc = OcrDocument {
        video_id: video_id.to_string(),
        frames,
    };
    Ok((doc, asr, truth))
}
