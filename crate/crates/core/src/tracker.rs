//! Frame-to-frame association of OCR detections into text tracks.

use serde::Serialize;
use thiserror::Error;

use crate::assignment::{solve_assignment, CostMatrix};
use crate::model::{BoundingQuad, FrameDetection, OcrFrame};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("frame {frame_index} arrived out of order (last seen {last})")]
    FrameOrder { frame_index: u64, last: u64 },
}

#[derive(Debug, Clone)]
pub struct TrackerParams {
    /// Assignments costing more than this (cost = 1 - IoU) are voided.
    pub gate_cost: f64,
    /// A track survives this many consecutive missed frames before closing.
    pub max_gap_frames: u64,
    /// Number of horizontal bands the frame is divided into vertically.
    pub band_count: u32,
    /// Minimum fraction of a track's detections inside the modal band +/- 1.
    pub min_band_fraction: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            gate_cost: 0.7,
            max_gap_frames: 10,
            band_count: 20,
            min_band_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Serialize)]
pub struct TextTrack {
    pub track_id: u64,
    /// Strictly increasing by frame_index.
    pub entries: Vec<FrameDetection>,
    pub state: TrackState,
}

impl TextTrack {
    pub fn first_frame(&self) -> u64 {
        self.entries.first().map_or(0, |e| e.frame_index)
    }

    pub fn last_frame(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.frame_index)
    }
}

/// Intersection over union of the axis-aligned envelopes.
pub fn iou(a: &BoundingQuad, b: &BoundingQuad) -> f64 {
    let ix = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let iy = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = ix * iy;
    let union = a.width() * a.height() + b.width() * b.height() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

#[derive(Debug)]
pub struct Tracker {
    params: TrackerParams,
    open: Vec<TextTrack>,
    closed: Vec<TextTrack>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            open: Vec::new(),
            closed: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    /// Feeds one frame. Frames must arrive in strictly increasing
    /// frame_index order; gaps are allowed and count against open tracks.
    pub fn step(&mut self, frame: &OcrFrame) -> Result<(), TrackError> {
        if let Some(last) = self.last_frame {
            if frame.frame_index <= last {
                return Err(TrackError::FrameOrder {
                    frame_index: frame.frame_index,
                    last,
                });
            }
        }
        self.last_frame = Some(frame.frame_index);
        self.close_stale(frame.frame_index);

        // Canonical detection order makes tracking invariant to the input
        // permutation within a frame.
        let mut detections: Vec<&FrameDetection> = frame.detections.iter().collect();
        detections.sort_by(|a, b| {
            a.quad
                .y_min()
                .total_cmp(&b.quad.y_min())
                .then(a.quad.x_min().total_cmp(&b.quad.x_min()))
                .then(a.quad.y_max().total_cmp(&b.quad.y_max()))
                .then(a.quad.x_max().total_cmp(&b.quad.x_max()))
                .then_with(|| a.text.cmp(&b.text))
                .then(a.conf.total_cmp(&b.conf))
        });

        let mut det_taken = vec![false; detections.len()];
        if !self.open.is_empty() && !detections.is_empty() {
            let mut data = Vec::with_capacity(self.open.len() * detections.len());
            for track in &self.open {
                let last_quad = &track.entries.last().expect("tracks are non-empty").quad;
                for det in &detections {
                    data.push(1.0 - iou(last_quad, &det.quad));
                }
            }
            let matrix = CostMatrix::new(self.open.len(), detections.len(), data)
                .expect("IoU costs are finite");
            for (t, d) in solve_assignment(&matrix) {
                if matrix.at(t, d) > self.params.gate_cost {
                    continue;
                }
                self.open[t].entries.push(detections[d].clone());
                det_taken[d] = true;
            }
        }
        for (d, det) in detections.iter().enumerate() {
            if !det_taken[d] {
                self.open.push(TextTrack {
                    track_id: self.next_id,
                    entries: vec![(*det).clone()],
                    state: TrackState::Open,
                });
                self.next_id += 1;
            }
        }
        Ok(())
    }

    fn close_stale(&mut self, current_frame: u64) {
        let max_gap = self.params.max_gap_frames;
        let mut still_open = Vec::with_capacity(self.open.len());
        for track in self.open.drain(..) {
            let last = track
                .entries
                .last()
                .expect("tracks are non-empty")
                .frame_index;
            let missed = current_frame.saturating_sub(last).saturating_sub(1);
            if missed > max_gap {
                let mut track = track;
                track.state = TrackState::Closed;
                self.closed.push(track);
            } else {
                still_open.push(track);
            }
        }
        self.open = still_open;
    }

    /// Closes every remaining track and returns all tracks by track id.
    pub fn finish(mut self) -> Vec<TextTrack> {
        for mut track in self.open.drain(..) {
            track.state = TrackState::Closed;
            self.closed.push(track);
        }
        let mut out = self.closed;
        out.sort_by_key(|t| t.track_id);
        out
    }
}

/// Runs the tracker over a whole frame sequence.
pub fn run_tracker(
    frames: &[OcrFrame],
    params: &TrackerParams,
) -> Result<Vec<TextTrack>, TrackError> {
    let mut tracker = Tracker::new(params.clone());
    for frame in frames {
        tracker.step(frame)?;
    }
    Ok(tracker.finish())
}

/// Keeps tracks concentrated around the most populated vertical band.
///
/// The modal band is the band with the highest detection count across all
/// tracks (smallest index on ties). A track survives when at least
/// `min_band_fraction` of its detections fall in the modal band +/- 1.
pub fn position_filter(
    tracks: Vec<TextTrack>,
    frame_height: f64,
    params: &TrackerParams,
) -> Vec<TextTrack> {
    assert!(frame_height > 0.0, "frame_height must be positive");
    assert!(params.band_count > 0, "band_count must be positive");
    if tracks.is_empty() {
        return tracks;
    }
    let bands = params.band_count as usize;
    let band_of = |quad: &BoundingQuad| -> usize {
        let band = (quad.y_center() / (frame_height / bands as f64)).floor();
        (band.max(0.0) as usize).min(bands - 1)
    };
    let mut counts = vec![0u64; bands];
    for track in &tracks {
        for entry in &track.entries {
            counts[band_of(&entry.quad)] += 1;
        }
    }
    let modal = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = modal.saturating_sub(1);
    let hi = (modal + 1).min(bands - 1);
    tracks
        .into_iter()
        .filter(|track| {
            if track.entries.is_empty() {
                return false;
            }
            let in_band = track
                .entries
                .iter()
                .filter(|e| {
                    let b = band_of(&e.quad);
                    b >= lo && b <= hi
                })
                .count();
            in_band as f64 / track.entries.len() as f64 >= params.min_band_fraction
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OcrFrame;

    fn det(frame: u64, x: f64, y: f64, w: f64, h: f64, text: &str) -> FrameDetection {
        FrameDetection {
            frame_index: frame,
            time_ms: frame as i64 * 40,
            quad: BoundingQuad::from_rect(x, y, w, h).unwrap(),
            text: text.to_string(),
            conf: 0.9,
        }
    }

    fn frame(index: u64, detections: Vec<FrameDetection>) -> OcrFrame {
        OcrFrame {
            frame_index: index,
            time_ms: index as i64 * 40,
            detections,
        }
    }

    #[test]
    fn iou_examples() {
        let a = BoundingQuad::from_rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = BoundingQuad::from_rect(0.5, 0.0, 1.0, 1.0).unwrap();
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a), 1.0);
        let far = BoundingQuad::from_rect(10.0, 10.0, 1.0, 1.0).unwrap();
        assert_eq!(iou(&a, &far), 0.0);
    }

    #[test]
    fn contiguous_detections_form_one_track() {
        let frames: Vec<OcrFrame> = (0..5)
            .map(|i| frame(i, vec![det(i, 100.0, 900.0, 300.0, 40.0, "你好")]))
            .collect();
        let tracks = run_tracker(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].entries.len(), 5);
        assert_eq!(tracks[0].state, TrackState::Closed);
    }

    #[test]
    fn gap_within_limit_bridges_flicker() {
        let frames = vec![
            frame(0, vec![det(0, 100.0, 900.0, 300.0, 40.0, "a")]),
            frame(11, vec![det(11, 100.0, 900.0, 300.0, 40.0, "a")]),
        ];
        // 10 missed frames == max_gap_frames: still the same track.
        let tracks = run_tracker(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].entries.len(), 2);
    }

    #[test]
    fn gap_beyond_limit_splits_tracks() {
        let frames = vec![
            frame(0, vec![det(0, 100.0, 900.0, 300.0, 40.0, "a")]),
            frame(12, vec![det(12, 100.0, 900.0, 300.0, 40.0, "a")]),
        ];
        let tracks = run_tracker(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 2);
    }

    #[test]
    fn gate_blocks_weak_matches() {
        let frames = vec![
            frame(0, vec![det(0, 0.0, 0.0, 10.0, 10.0, "a")]),
            // IoU with the previous box is tiny, cost exceeds the gate.
            frame(1, vec![det(1, 9.0, 9.0, 10.0, 10.0, "a")]),
        ];
        let tracks = run_tracker(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 2);
    }

    #[test]
    fn alternating_rows_stay_separate() {
        let mut frames = Vec::new();
        for i in 0..6u64 {
            frames.push(frame(
                i,
                vec![
                    det(i, 100.0, 100.0, 200.0, 40.0, "top"),
                    det(i, 100.0, 900.0, 200.0, 40.0, "bottom"),
                ],
            ));
        }
        let tracks = run_tracker(&frames, &TrackerParams::default()).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.entries.len() == 6));
    }

    #[test]
    fn rejects_out_of_order_frames() {
        let mut tracker = Tracker::new(TrackerParams::default());
        tracker.step(&frame(5, vec![])).unwrap();
        let err = tracker.step(&frame(5, vec![])).unwrap_err();
        assert!(matches!(
            err,
            TrackError::FrameOrder {
                frame_index: 5,
                last: 5
            }
        ));
    }

    #[test]
    fn detection_order_within_frame_is_irrelevant() {
        let a = det(0, 100.0, 100.0, 200.0, 40.0, "top");
        let b = det(0, 100.0, 900.0, 200.0, 40.0, "bottom");
        let follow = vec![frame(
            1,
            vec![
                det(1, 100.0, 100.0, 200.0, 40.0, "top"),
                det(1, 100.0, 900.0, 200.0, 40.0, "bottom"),
            ],
        )];
        let mut run1 = vec![frame(0, vec![a.clone(), b.clone()])];
        run1.extend(follow.clone());
        let mut run2 = vec![frame(0, vec![b, a])];
        run2.extend(follow);
        let t1 = run_tracker(&run1, &TrackerParams::default()).unwrap();
        let t2 = run_tracker(&run2, &TrackerParams::default()).unwrap();
        let texts1: Vec<Vec<&str>> = t1
            .iter()
            .map(|t| t.entries.iter().map(|e| e.text.as_str()).collect())
            .collect();
        let texts2: Vec<Vec<&str>> = t2
            .iter()
            .map(|t| t.entries.iter().map(|e| e.text.as_str()).collect())
            .collect();
        assert_eq!(texts1, texts2);
    }

    #[test]
    fn every_detection_lands_in_exactly_one_track() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut frames = Vec::new();
        let mut total = 0usize;
        for i in 0..40u64 {
            let mut dets = Vec::new();
            for _ in 0..rng.gen_range(0..4) {
                let x = rng.gen_range(0.0..1800.0);
                let y = rng.gen_range(0.0..1000.0);
                dets.push(det(i, x, y, 80.0, 40.0, "t"));
                total += 1;
            }
            frames.push(frame(i, dets));
        }
        let tracks = run_tracker(&frames, &TrackerParams::default()).unwrap();
        let tracked: usize = tracks.iter().map(|t| t.entries.len()).sum();
        assert_eq!(tracked, total);
        for t in &tracks {
            for pair in t.entries.windows(2) {
                assert!(pair[0].frame_index < pair[1].frame_index);
            }
        }
    }

    #[test]
    fn position_filter_keeps_modal_band() {
        let mk = |y: f64, n: u64, id: u64| TextTrack {
            track_id: id,
            entries: (0..n).map(|i| det(i, 100.0, y, 300.0, 40.0, "x")).collect(),
            state: TrackState::Closed,
        };
        // 1080p, 20 bands of 54 px. Subtitle band near y=1000, outlier at top.
        let tracks = vec![mk(990.0, 10, 0), mk(50.0, 3, 1)];
        let kept = position_filter(tracks, 1080.0, &TrackerParams::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].track_id, 0);

        // A single track is its own modal band.
        let solo = position_filter(vec![mk(50.0, 3, 7)], 1080.0, &TrackerParams::default());
        assert_eq!(solo.len(), 1);

        assert!(position_filter(Vec::new(), 1080.0, &TrackerParams::default()).is_empty());
    }

    #[test]
    fn position_filter_boundary_fraction_is_inclusive() {
        let mut entries = Vec::new();
        for i in 0..4u64 {
            // Two in the modal band, two far above: exactly 50%.
            let y = if i % 2 == 0 { 990.0 } else { 200.0 };
            entries.push(det(i, 100.0, y, 300.0, 40.0, "x"));
        }
        let anchor = TextTrack {
            track_id: 0,
            entries: (0..10)
                .map(|i| det(i, 100.0, 990.0, 300.0, 40.0, "y"))
                .collect(),
            state: TrackState::Closed,
        };
        let track = TextTrack {
            track_id: 1,
            entries,
            state: TrackState::Closed,
        };
        let kept = position_filter(vec![anchor, track], 1080.0, &TrackerParams::default());
        assert_eq!(kept.len(), 2);
    }
}
