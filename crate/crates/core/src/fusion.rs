//! Result-level fusion of the visual subtitle timeline with ASR output.
//!
//! Four stages run in order: a splitter breaks apart segments whose OCR
//! tracking merged two different subtitle lines, a candidate selector picks
//! the best reading per segment, a remover drops visual text with no audio
//! support, and a padder inserts ASR lines the visual side missed entirely.

use serde::{Deserialize, Serialize};

use crate::lm::{dual_score, DualLm};
use crate::model::{AsrSegment, SegmentSource, SubtitleSegment, Timeline};
use crate::textsim::{
    best_window_match, char_similarity, lcs_length, syllable_similarity, SyllableTable,
};

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Candidate texts at least this similar are readings of one subtitle.
    pub theta_same: f64,
    /// Minimum window-match score for a cluster to anchor a split.
    pub theta_split: f64,
    /// Visual segments below this audio similarity are removed.
    pub theta_remove: f64,
    /// ASR text this contained in the next subtitle is not padded.
    pub theta_pad: f64,
    pub w_char: f64,
    pub w_syl: f64,
    pub w_lm: f64,
    /// Temporal slack when collecting ASR context around a segment.
    pub overlap_slack_ms: i64,
    /// Optional extra removal rule: drop segments whose mixed LM score
    /// (mean log10) falls below this floor, regardless of ASR context.
    pub lm_floor: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            theta_same: 0.8,
            theta_split: 0.6,
            theta_remove: 0.3,
            theta_pad: 0.5,
            w_char: 0.4,
            w_syl: 0.4,
            w_lm: 0.2,
            overlap_slack_ms: 500,
            lm_floor: None,
        }
    }
}

/// Counts reported by [`fuse`]: output = post_split - removed + padded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionAudit {
    pub video_id: String,
    pub input_segments: usize,
    pub post_split_segments: usize,
    pub removed_segments: usize,
    pub padded_segments: usize,
    pub output_segments: usize,
}

/// Concatenates (in time order, without separators) the texts of all ASR
/// segments overlapping the segment's span widened by `slack_ms`.
pub fn asr_context(asr: &[AsrSegment], seg: &SubtitleSegment, slack_ms: i64) -> String {
    let lo = seg.start_ms.saturating_sub(slack_ms);
    let hi = seg.end_ms.saturating_add(slack_ms);
    let mut out = String::new();
    for a in asr {
        if a.start_ms <= hi && a.end_ms >= lo {
            out.push_str(&a.text);
        }
    }
    out
}

fn context_window(needle: &str, haystack: &str) -> (String, f64) {
    let (start, score) = best_window_match(needle, haystack);
    let h: Vec<char> = haystack.chars().collect();
    let len = needle.chars().count().min(h.len());
    (h[start..start + len].iter().collect(), score)
}

struct Cluster {
    /// Indices into the segment's candidate list.
    members: Vec<usize>,
    rep: usize,
    support: u64,
}

/// Splits a segment whose candidate set reads as two or more distinct
/// subtitle lines, using the ASR context to order and anchor the pieces.
///
/// Candidates cluster by char similarity at `theta_same`. Each cluster's
/// representative is matched against the context; clusters matching below
/// `theta_split` drop out, and clusters whose context windows overlap by
/// more than half the shorter window collapse into the earlier one (they
/// explain the same stretch of audio). If fewer than two clusters survive,
/// the segment is returned unchanged. Otherwise the segment's span is cut
/// proportionally to cluster support, in context window order.
pub fn split_merged(
    seg: &SubtitleSegment,
    context: &str,
    cfg: &FusionConfig,
) -> Vec<SubtitleSegment> {
    let cands = &seg.candidates;
    if cands.len() <= 1 {
        return vec![seg.clone()];
    }
    // Union-find over candidates.
    let mut parent: Vec<usize> = (0..cands.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..cands.len() {
        for j in (i + 1)..cands.len() {
            if char_similarity(&cands[i].text, &cands[j].text) >= cfg.theta_same {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..cands.len()).map(|i| find(&mut parent, i)).collect();
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in 0..cands.len() {
        match clusters
            .iter_mut()
            .find(|c| roots[c.members[0]] == roots[i])
        {
            Some(c) => c.members.push(i),
            None => clusters.push(Cluster {
                members: vec![i],
                rep: i,
                support: 0,
            }),
        }
    }
    if clusters.len() <= 1 {
        return vec![seg.clone()];
    }
    for c in &mut clusters {
        c.support = c.members.iter().map(|&i| cands[i].support_count).sum();
        c.rep = c
            .members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                cands[b]
                    .support_count
                    .cmp(&cands[a].support_count)
                    .then(cands[b].mean_conf.total_cmp(&cands[a].mean_conf))
                    .then_with(|| cands[a].text.cmp(&cands[b].text))
            })
            .expect("clusters are non-empty");
    }
    // Anchor each cluster in the ASR context.
    let mut anchored: Vec<(usize, usize, Cluster)> = Vec::new(); // (win_start, win_len, cluster)
    for c in clusters {
        let rep_text = &cands[c.rep].text;
        let (start, score) = best_window_match(rep_text, context);
        if score >= cfg.theta_split {
            let len = rep_text.chars().count().min(context.chars().count());
            anchored.push((start, len, c));
        }
    }
    if anchored.len() < 2 {
        return vec![seg.clone()];
    }
    anchored.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| cands[a.2.rep].text.cmp(&cands[b.2.rep].text))
    });
    // Collapse clusters that explain the same context region.
    let mut merged: Vec<(usize, usize, Cluster)> = Vec::new();
    for (start, len, cluster) in anchored {
        if let Some(last) = merged.last_mut() {
            let overlap = (last.0 + last.1)
                .min(start + len)
                .saturating_sub(start.max(last.0));
            if 2 * overlap > len.min(last.1) {
                last.2.members.extend(cluster.members);
                last.2.support += cluster.support;
                continue;
            }
        }
        merged.push((start, len, cluster));
    }
    if merged.len() < 2 {
        return vec![seg.clone()];
    }
    // Cut the span proportionally to cluster support.
    let span = seg.end_ms - seg.start_ms;
    let total: u64 = merged.iter().map(|m| m.2.support).sum();
    let total = total.max(1);
    let mut out = Vec::with_capacity(merged.len());
    let mut cum = 0u64;
    let mut prev_end = seg.start_ms;
    for (i, (_, _, cluster)) in merged.iter().enumerate() {
        cum += cluster.support;
        let end = if i + 1 == merged.len() {
            seg.end_ms
        } else {
            seg.start_ms + (span as i128 * cum as i128 / total as i128) as i64
        };
        let mut members = cluster.members.clone();
        members.sort_unstable();
        out.push(SubtitleSegment {
            start_ms: prev_end,
            end_ms: end,
            text: cands[cluster.rep].text.clone(),
            source: SegmentSource::Fused,
            candidates: members.iter().map(|&m| cands[m].clone()).collect(),
        });
        prev_end = end;
    }
    out
}

/// Ranks a segment's candidates by weighted char similarity, syllable
/// similarity, and min-max normalized LM score, each against the
/// candidate's own best context window. Ties fall to higher support, then
/// higher mean confidence, then lexicographic order.
pub fn select_candidate(
    seg: &SubtitleSegment,
    context: &str,
    lms: Option<&DualLm>,
    cfg: &FusionConfig,
) -> SubtitleSegment {
    let mut out = seg.clone();
    if seg.candidates.len() <= 1 {
        return out;
    }
    let table = SyllableTable::builtin();
    let lm_raw: Vec<f64> =
        seg.candidates
            .iter()
            .map(|c| match lms {
                Some(dual) => dual_score(dual.universal, dual.domain, dual.config, &c.text)
                    .unwrap_or(f64::MIN),
                None => 0.0,
            })
            .collect();
    let lm_min = lm_raw.iter().copied().fold(f64::INFINITY, f64::min);
    let lm_max = lm_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(f64, usize)> = None;
    for (i, cand) in seg.candidates.iter().enumerate() {
        let (window, char_sim) = context_window(&cand.text, context);
        let syl_sim = syllable_similarity(&cand.text, &window, table);
        let lm_norm = if lm_max > lm_min {
            (lm_raw[i] - lm_min) / (lm_max - lm_min)
        } else {
            1.0
        };
        let score = cfg.w_char * char_sim + cfg.w_syl * syl_sim + cfg.w_lm * lm_norm;
        let better = match best {
            None => true,
            Some((bs, bi)) => {
                let b = &seg.candidates[bi];
                score > bs
                    || (score == bs
                        && (cand.support_count > b.support_count
                            || (cand.support_count == b.support_count
                                && (cand.mean_conf > b.mean_conf
                                    || (cand.mean_conf == b.mean_conf && cand.text < b.text)))))
            }
        };
        if better {
            best = Some((score, i));
        }
    }
    if let Some((_, i)) = best {
        out.text = seg.candidates[i].text.clone();
    }
    out
}

/// Drops visual segments whose best context window shows neither character
/// nor syllable agreement with the audio. Segments with no ASR context are
/// kept. With `lm_floor` set and an LM available, segments scoring below
/// the floor are dropped even without context.
pub fn remove_nonsubtitles(
    timeline: &Timeline,
    asr: &[AsrSegment],
    cfg: &FusionConfig,
    lms: Option<&DualLm>,
) -> Timeline {
    let table = SyllableTable::builtin();
    let segments = timeline
        .segments
        .iter()
        .filter(|seg| {
            if let (Some(floor), Some(dual)) = (cfg.lm_floor, lms) {
                let lm = dual_score(dual.universal, dual.domain, dual.config, &seg.text)
                    .unwrap_or(f64::MIN);
                if lm < floor {
                    return false;
                }
            }
            let context = asr_context(asr, seg, cfg.overlap_slack_ms);
            if context.is_empty() {
                return true;
            }
            let (window, char_sim) = context_window(&seg.text, &context);
            let syl_sim = syllable_similarity(&seg.text, &window, table);
            char_sim.max(syl_sim) >= cfg.theta_remove
        })
        .cloned()
        .collect();
    Timeline {
        video_id: timeline.video_id.clone(),
        segments,
    }
}

/// Emits an audio_pad segment for each ASR segment no timeline segment
/// overlaps (within slack), unless the upcoming subtitle already contains
/// the ASR text: containment = LCS(asr, next) / |asr| at `theta_pad`.
pub fn pad_missing(
    asr: &[AsrSegment],
    timeline: &Timeline,
    cfg: &FusionConfig,
) -> Vec<SubtitleSegment> {
    let mut pads = Vec::new();
    for a in asr {
        let lo = a.start_ms.saturating_sub(cfg.overlap_slack_ms);
        let hi = a.end_ms.saturating_add(cfg.overlap_slack_ms);
        let covered = timeline
            .segments
            .iter()
            .any(|s| s.start_ms <= hi && s.end_ms >= lo);
        if covered {
            continue;
        }
        let next = timeline
            .segments
            .iter()
            .filter(|s| s.start_ms >= a.start_ms)
            .min_by_key(|s| (s.start_ms, s.end_ms));
        let pad = match next {
            None => true,
            Some(nxt) => {
                let ac: Vec<char> = a.text.chars().collect();
                let nc: Vec<char> = nxt.text.chars().collect();
                let containment = lcs_length(&ac, &nc) as f64 / ac.len() as f64;
                containment < cfg.theta_pad
            }
        };
        if pad {
            pads.push(SubtitleSegment {
                start_ms: a.start_ms,
                end_ms: a.end_ms,
                text: a.text.clone(),
                source: SegmentSource::AudioPad,
                candidates: vec![crate::model::CandidateText {
                    text: a.text.clone(),
                    support_count: 1,
                    mean_conf: a.conf.unwrap_or(1.0),
                }],
            });
        }
    }
    pads
}

/// Runs the four fusion stages and reports an audit of their deltas.
pub fn fuse(
    visual: &Timeline,
    asr: &[AsrSegment],
    lms: Option<&DualLm>,
    cfg: &FusionConfig,
) -> (Timeline, FusionAudit) {
    let input_segments = visual.segments.len();
    // Splitter.
    let mut segments: Vec<SubtitleSegment> = Vec::new();
    for seg in &visual.segments {
        let context = asr_context(asr, seg, cfg.overlap_slack_ms);
        segments.extend(split_merged(seg, &context, cfg));
    }
    let post_split_segments = segments.len();
    // Candidate selection.
    let segments: Vec<SubtitleSegment> = segments
        .iter()
        .map(|seg| {
            let context = asr_context(asr, seg, cfg.overlap_slack_ms);
            select_candidate(seg, &context, lms, cfg)
        })
        .collect();
    // Remover.
    let timeline = Timeline {
        video_id: visual.video_id.clone(),
        segments,
    };
    let kept = remove_nonsubtitles(&timeline, asr, cfg, lms);
    let removed_segments = post_split_segments - kept.segments.len();
    // Padder.
    let pads = pad_missing(asr, &kept, cfg);
    let padded_segments = pads.len();
    let mut segments = kept.segments;
    segments.extend(pads);
    segments.sort_by(|a, b| {
        a.start_ms
            .cmp(&b.start_ms)
            .then(a.end_ms.cmp(&b.end_ms))
            .then_with(|| a.text.cmp(&b.text))
    });
    // Pads never overlap surviving segments (they required a clear span),
    // but ASR segments may overlap each other; clip, never drop, so the
    // audit identity stays exact.
    let mut running_end = i64::MIN;
    for seg in &mut segments {
        if running_end > i64::MIN && seg.start_ms < running_end {
            seg.start_ms = running_end.min(seg.end_ms);
        }
        running_end = running_end.max(seg.end_ms);
    }
    let output = Timeline {
        video_id: visual.video_id.clone(),
        segments,
    };
    output
        .validate()
        .expect("fusion output satisfies timeline invariants");
    let audit = FusionAudit {
        video_id: visual.video_id.clone(),
        input_segments,
        post_split_segments,
        removed_segments,
        padded_segments,
        output_segments: output.segments.len(),
    };
    (output, audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CandidateText;
    use proptest::prelude::*;

    fn seg(start: i64, end: i64, cands: &[(&str, u64, f64)]) -> SubtitleSegment {
        SubtitleSegment {
            start_ms: start,
            end_ms: end,
            text: cands[0].0.to_string(),
            source: SegmentSource::Visual,
            candidates: cands
                .iter()
                .map(|(t, s, c)| CandidateText {
                    text: t.to_string(),
                    support_count: *s,
                    mean_conf: *c,
                })
                .collect(),
        }
    }

    fn asr(start: i64, end: i64, text: &str) -> AsrSegment {
        AsrSegment {
            start_ms: start,
            end_ms: end,
            text: text.to_string(),
            conf: Some(0.9),
        }
    }

    #[test]
    fn context_concatenates_overlapping_asr_in_time_order() {
        let asr = vec![
            asr(0, 1000, "今天"),
            asr(1000, 2000, "天气"),
            asr(5000, 6000, "很远"),
        ];
        let s = seg(800, 1200, &[("x", 1, 0.9)]);
        assert_eq!(asr_context(&asr, &s, 100), "今天天气");
        let far = seg(3000, 3500, &[("x", 1, 0.9)]);
        assert_eq!(asr_context(&asr, &far, 100), "");
        let cover = seg(100, 200, &[("x", 1, 0.9)]);
        assert_eq!(asr_context(&asr, &cover, 0), "今天");
    }

    #[test]
    fn splitter_separates_two_merged_lines() {
        let s = seg(
            0,
            4000,
            &[
                ("他可能就是一个普通的感冒", 2, 0.9),
                ("有可能不是普通的感冒", 2, 0.9),
            ],
        );
        let context = "也不能讲他可能就是一个普通的感冒有可能不是普通的感冒有可能是一个";
        let parts = split_merged(&s, context, &FusionConfig::default());
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].text, "他可能就是一个普通的感冒");
        assert_eq!(parts[1].text, "有可能不是普通的感冒");
        assert_eq!(parts[0].start_ms, 0);
        assert_eq!(parts[0].end_ms, 2000);
        assert_eq!(parts[1].end_ms, 4000);
        assert!(parts.iter().all(|p| p.source == SegmentSource::Fused));
    }

    #[test]
    fn splitter_orders_by_asr_not_support() {
        let s = seg(
            0,
            3000,
            &[("你们俩都是二婚", 3, 0.9), ("你们都是头婚吗", 1, 0.9)],
        );
        let context = "你们都是结婚你们俩都是二婚家庭";
        let parts = split_merged(&s, context, &FusionConfig::default());
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].text, "你们都是头婚吗");
        assert_eq!(parts[1].text, "你们俩都是二婚");
        // Proportional cut: 1 of 4 support -> boundary at 750.
        assert_eq!(parts[0].end_ms, 750);
    }

    #[test]
    fn splitter_leaves_single_cluster_alone() {
        let s = seg(
            0,
            1000,
            &[("今天天气不错", 3, 0.9), ("今天天气不错的", 1, 0.8)],
        );
        let parts = split_merged(&s, "今天天气不错", &FusionConfig::default());
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].source, SegmentSource::Visual);
    }

    #[test]
    fn splitter_requires_context_support() {
        // Two clear clusters, but context matches neither: unchanged.
        let s = seg(
            0,
            1000,
            &[("今天天气不错", 2, 0.9), ("回家吃个晚饭", 2, 0.9)],
        );
        let parts = split_merged(&s, "完全无关的内容在这里", &FusionConfig::default());
        assert_eq!(parts.len(), 1);
        // Context matching only one cluster: still unchanged.
        let parts = split_merged(&s, "今天天气不错", &FusionConfig::default());
        assert_eq!(parts.len(), 1);
    }

    #[test]
    fn splitter_absorbs_clusters_sharing_a_window() {
        // The first two variants are too different to cluster at theta_same
        // (similarity 10/15) yet anchor on the same context stretch, so the
        // window-overlap rule folds them together instead of splitting the
        // segment three ways.
        let s = seg(
            0,
            1200,
            &[
                ("今天天气很不错", 2, 0.9),
                ("今天天黑很不对劲", 2, 0.9),
                ("回家吃饭去了噢", 2, 0.9),
            ],
        );
        let context = "今天天气很不错回家吃饭去了噢";
        let parts = split_merged(&s, context, &FusionConfig::default());
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].text, "今天天气很不错");
        assert_eq!(parts[0].candidates.len(), 2);
        assert_eq!(parts[1].text, "回家吃饭去了噢");
        // Absorbed support (2+2 of 6) sets the cut at 800.
        assert_eq!(parts[0].end_ms, 800);
    }

    #[test]
    fn selector_prefers_candidate_matching_audio() {
        let s = seg(
            0,
            2000,
            &[
                ("比如说感冒的其它的病毒感染", 2, 0.9),
                ("比如说感胃的其它的病毒感染", 2, 0.9),
            ],
        );
        let context = "比如说感冒的其他的病毒感染";
        let picked = select_candidate(&s, context, None, &FusionConfig::default());
        assert_eq!(picked.text, "比如说感冒的其它的病毒感染");
    }

    #[test]
    fn selector_tie_breaks_on_support_then_conf() {
        let s = seg(0, 1000, &[("同样的句子", 1, 0.9), ("同样的句子", 3, 0.8)]);
        let picked = select_candidate(&s, "", None, &FusionConfig::default());
        assert_eq!(picked.text, "同样的句子");
        // Distinct but equally scored candidates: higher support wins.
        let s2 = seg(0, 1000, &[("甲乙", 1, 0.9), ("丙丁", 3, 0.9)]);
        let picked2 = select_candidate(&s2, "", None, &FusionConfig::default());
        assert_eq!(picked2.text, "丙丁");
    }

    #[test]
    fn remover_drops_unsupported_visual_text() {
        let timeline = Timeline {
            video_id: "v".into(),
            segments: vec![
                seg(0, 2000, &[("购买链接见评论区", 3, 0.9)]),
                seg(3000, 5000, &[("这个问题很复杂", 3, 0.9)]),
                seg(90_000, 92_000, &[("没有音频的时刻", 3, 0.9)]),
            ],
        };
        let asr = vec![
            asr(0, 2000, "我们继续聊昨天那个话题"),
            asr(3000, 5000, "这个问题很复杂"),
        ];
        let kept = remove_nonsubtitles(&timeline, &asr, &FusionConfig::default(), None);
        let texts: Vec<&str> = kept.segments.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, vec!["这个问题很复杂", "没有音频的时刻"]);
    }

    #[test]
    fn padder_containment_decisions() {
        let cfg = FusionConfig::default();
        let timeline = Timeline {
            video_id: "v".into(),
            segments: vec![seg(
                10_000,
                12_000,
                &[("到现在为止你大概借给她多少钱", 3, 0.9)],
            )],
        };
        // Fully contained in the upcoming subtitle: no pad.
        let pads = pad_missing(&[asr(8_000, 9_000, "到现在")], &timeline, &cfg);
        assert!(pads.is_empty());
        // Barely related: pad.
        let pads = pad_missing(&[asr(5_000, 6_000, "机会我不是没给你")], &timeline, &cfg);
        assert_eq!(pads.len(), 1);
        assert_eq!(pads[0].source, SegmentSource::AudioPad);
        assert_eq!((pads[0].start_ms, pads[0].end_ms), (5_000, 6_000));
        // No upcoming subtitle at all: pad.
        let pads = pad_missing(&[asr(20_000, 21_000, "后面没有字幕了")], &timeline, &cfg);
        assert_eq!(pads.len(), 1);
        // Overlapping a visual segment (within slack): never padded.
        let pads = pad_missing(&[asr(11_500, 13_000, "到现在为止你大概")], &timeline, &cfg);
        assert!(pads.is_empty());
    }

    #[test]
    fn fuse_is_identity_on_agreeing_inputs() {
        let visual = Timeline {
            video_id: "v".into(),
            segments: vec![
                seg(0, 2000, &[("今天我们聊聊天气", 5, 0.95)]),
                seg(2500, 4500, &[("明天应该会下雨", 4, 0.9)]),
            ],
        };
        let asr = vec![
            asr(0, 2000, "今天我们聊聊天气"),
            asr(2500, 4500, "明天应该会下雨"),
        ];
        let (out, audit) = fuse(&visual, &asr, None, &FusionConfig::default());
        assert_eq!(out, visual);
        assert_eq!(audit.input_segments, 2);
        assert_eq!(audit.post_split_segments, 2);
        assert_eq!(audit.removed_segments, 0);
        assert_eq!(audit.padded_segments, 0);
        assert_eq!(audit.output_segments, 2);
    }

    #[test]
    fn fuse_pads_everything_when_visual_is_empty() {
        let visual = Timeline {
            video_id: "v".into(),
            segments: Vec::new(),
        };
        let asr = vec![
            asr(0, 1000, "第一句话"),
            asr(2000, 3000, "第二句话"),
            asr(4000, 5000, "第三句话"),
        ];
        let (out, audit) = fuse(&visual, &asr, None, &FusionConfig::default());
        assert_eq!(out.segments.len(), 3);
        assert!(out
            .segments
            .iter()
            .all(|s| s.source == SegmentSource::AudioPad));
        assert_eq!(audit.padded_segments, 3);
        assert_eq!(
            audit.output_segments,
            audit.post_split_segments - audit.removed_segments + audit.padded_segments
        );
    }

    #[test]
    fn fuse_splits_embedded_merged_segment() {
        let visual = Timeline {
            video_id: "v".into(),
            segments: vec![seg(
                1000,
                4000,
                &[("你们俩都是二婚", 2, 0.9), ("你们都是头婚吗", 2, 0.9)],
            )],
        };
        let asr = vec![asr(900, 4100, "你们都是结婚你们俩都是二婚家庭")];
        let (out, audit) = fuse(&visual, &asr, None, &FusionConfig::default());
        assert_eq!(out.segments.len(), 2);
        assert_eq!(out.segments[0].text, "你们都是头婚吗");
        assert_eq!(out.segments[1].text, "你们俩都是二婚");
        assert_eq!(audit.post_split_segments, 2);
        assert_eq!(audit.removed_segments, 0);
    }

    #[test]
    fn audit_counts_reconcile() {
        let visual = Timeline {
            video_id: "v".into(),
            segments: vec![
                seg(0, 2000, &[("购买链接见评论区", 3, 0.9)]),
                seg(2500, 4000, &[("我们接着说正题", 3, 0.9)]),
            ],
        };
        let asr = vec![
            asr(0, 2000, "我们接着说正题啊"),
            asr(2500, 4000, "我们接着说正题"),
            asr(6000, 7000, "这句没有字幕"),
        ];
        let (out, audit) = fuse(&visual, &asr, None, &FusionConfig::default());
        assert_eq!(audit.removed_segments, 1);
        assert_eq!(audit.padded_segments, 1);
        assert_eq!(out.segments.len(), audit.output_segments);
        assert_eq!(
            audit.output_segments,
            audit.post_split_segments - audit.removed_segments + audit.padded_segments
        );
    }

    proptest! {
        /// Split children exactly tile the parent interval.
        #[test]
        fn splitter_preserves_time_coverage(
            supports in proptest::collection::vec(1u64..6, 2..5),
            span in 1i64..10_000,
        ) {
            let lines = ["今天天气很不错", "回家吃饭去了噢", "完全另外一句话", "再来一句不同的"];
            let cands: Vec<(&str, u64, f64)> = supports
                .iter()
                .enumerate()
                .map(|(i, &s)| (lines[i], s, 0.9))
                .collect();
            let s = seg(500, 500 + span, &cands);
            let context: String = lines[..supports.len()].concat();
            let parts = split_merged(&s, &context, &FusionConfig::default());
            prop_assert_eq!(parts.first().unwrap().start_ms, s.start_ms);
            prop_assert_eq!(parts.last().unwrap().end_ms, s.end_ms);
            for w in parts.windows(2) {
                prop_assert_eq!(w[0].end_ms, w[1].start_ms);
            }
            let support_total: u64 = parts
                .iter()
                .flat_map(|p| p.candidates.iter().map(|c| c.support_count))
                .sum();
            let original: u64 = s.candidates.iter().map(|c| c.support_count).sum();
            prop_assert_eq!(support_total, original);
        }

        /// Fusion output always satisfies timeline invariants and the audit
        /// identity, for arbitrary ASR inputs.
        #[test]
        fn fuse_output_always_valid(
            starts in proptest::collection::vec(0i64..20_000, 0..6),
        ) {
            let visual = Timeline {
                video_id: "v".into(),
                segments: vec![
                    seg(1000, 3000, &[("今天天气很不错", 4, 0.9)]),
                    seg(5000, 7000, &[("回家吃饭去了噢", 4, 0.9)]),
                ],
            };
            let mut sorted = starts.clone();
            sorted.sort_unstable();
            let asr: Vec<AsrSegment> = sorted
                .iter()
                .map(|&t| asr(t, t + 1500, "随便说一句话呀"))
                .collect();
            let (out, audit) = fuse(&visual, &asr, None, &FusionConfig::default());
            prop_assert!(out.validate().is_ok());
            prop_assert_eq!(
                audit.output_segments,
                audit.post_split_segments - audit.removed_segments + audit.padded_segments
            );
        }
    }
}
