//! CTC prefix beam search with optional language-model shallow fusion.
//!
//! Emission matrices hold natural-log probabilities (one row per frame,
//! blank at index 0). Language-model scores are log10 throughout, matching
//! the lm module; the fused ranking score mixes the two bases by design
//! since it only ever orders hypotheses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::DualLm;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("emission JSON malformed: {0}")]
    Json(String),
    #[error("emission matrix invalid: {0}")]
    Validation(String),
    #[error("token index {index} out of range for vocabulary of {vocab}")]
    TokenRange { index: usize, vocab: usize },
    #[error("beam width must be at least 1")]
    BadBeamWidth,
}

/// T x V natural-log probabilities with a token string per column.
/// Index 0 is the CTC blank.
#[derive(Debug, Clone)]
pub struct EmissionMatrix {
    tokens: Vec<String>,
    log_probs: Vec<Vec<f64>>,
}

impl EmissionMatrix {
    pub fn new(tokens: Vec<String>, log_probs: Vec<Vec<f64>>) -> Result<Self, DecodeError> {
        if tokens.len() < 2 {
            return Err(DecodeError::Validation(
                "vocabulary needs blank plus at least one token".into(),
            ));
        }
        if log_probs.is_empty() {
            return Err(DecodeError::Validation("need at least one frame".into()));
        }
        for (t, row) in log_probs.iter().enumerate() {
            if row.len() != tokens.len() {
                return Err(DecodeError::Validation(format!(
                    "frame {t} has {} entries, expected {}",
                    row.len(),
                    tokens.len()
                )));
            }
            if row.iter().any(|p| p.is_nan() || *p == f64::INFINITY) {
                return Err(DecodeError::Validation(format!(
                    "frame {t} contains non-finite log probabilities"
                )));
            }
            let lse = log_sum_exp(row);
            if lse.abs() > 1e-6 {
                return Err(DecodeError::Validation(format!(
                    "frame {t} is not normalized (log-sum-exp {lse:.2e})"
                )));
            }
        }
        Ok(Self { tokens, log_probs })
    }

    pub fn frames(&self) -> usize {
        self.log_probs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn log_prob(&self, frame: usize, token: usize) -> f64 {
        self.log_probs[frame][token]
    }

    /// Joins label indices into the text they spell.
    pub fn labels_to_text(&self, labels: &[usize]) -> String {
        labels.iter().map(|&i| self.tokens[i].as_str()).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEmissions {
    tokens: Vec<String>,
    log_probs: Vec<Vec<f64>>,
}

/// Reads an emission matrix from its JSON form:
/// `{"tokens": [str, ...], "log_probs": [[float, ...], ...]}`.
pub fn parse_emissions(json: &str) -> Result<EmissionMatrix, DecodeError> {
    let raw: RawEmissions =
        serde_json::from_str(json).map_err(|e| DecodeError::Json(e.to_string()))?;
    EmissionMatrix::new(raw.tokens, raw.log_probs)
}

pub fn write_emissions(em: &EmissionMatrix) -> String {
    serde_json::to_string_pretty(&RawEmissions {
        tokens: em.tokens.clone(),
        log_probs: em.log_probs.clone(),
    })
    .expect("emission matrices serialize cleanly")
}

/// Collapses a CTC path: merge adjacent repeats, then drop blanks.
pub fn ctc_collapse(path: &[usize], vocab_size: usize) -> Result<Vec<usize>, DecodeError> {
    let mut labels = Vec::new();
    let mut prev = None;
    for &idx in path {
        if idx >= vocab_size {
            return Err(DecodeError::TokenRange {
                index: idx,
                vocab: vocab_size,
            });
        }
        if Some(idx) != prev {
            if idx != 0 {
                labels.push(idx);
            }
            prev = Some(idx);
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone)]
pub struct BeamSearchParams {
    pub beam_width: usize,
    pub n_best: usize,
    pub lm_weight: f64,
}

impl Default for BeamSearchParams {
    fn default() -> Self {
        Self {
            beam_width: 16,
            n_best: 10,
            lm_weight: 0.3,
        }
    }
}

/// One decoded labeling with its exact CTC probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Token indices, blanks already removed.
    pub labels: Vec<usize>,
    /// Natural-log CTC probability summed over all matching paths.
    pub log_prob: f64,
    /// Cumulative log10 LM probability of the spelled text, when an LM ran.
    pub lm_log10: Option<f64>,
    /// Ranking score. Beam search sets log_prob + lm_weight * lm_log10;
    /// rescoring overwrites it with its own blend.
    pub fused_score: f64,
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, log_add)
}

#[derive(Debug, Clone)]
struct BeamNode {
    /// Probability of this prefix with paths ending in blank.
    pb: f64,
    /// Probability with paths ending in the prefix's last token.
    pnb: f64,
    /// Cumulative log10 LM probability of the spelled text.
    lm_log10: f64,
    /// The prefix's spelled text, kept for LM context.
    chars: Vec<char>,
}

impl BeamNode {
    fn total(&self) -> f64 {
        log_add(self.pb, self.pnb)
    }

    fn fused(&self, lm_weight: f64) -> f64 {
        self.total() + lm_weight * self.lm_log10
    }
}

/// Prefix beam search over an emission matrix.
///
/// Per frame every surviving prefix is extended by blank and by each token,
/// duplicate prefixes merge by probability addition, and the beam keeps the
/// `beam_width` best prefixes by fused score (ties resolved toward
/// lexicographically smaller label sequences). With `lms` present, each
/// appended token adds `lm_weight` times its mixed log10 probability to the
/// fused score (shallow fusion); CTC probabilities stay exact either way.
pub fn prefix_beam_search(
    em: &EmissionMatrix,
    params: &BeamSearchParams,
    lms: Option<&DualLm>,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if params.beam_width < 1 {
        return Err(DecodeError::BadBeamWidth);
    }
    let mut beams: BTreeMap<Vec<usize>, BeamNode> = BTreeMap::new();
    beams.insert(
        Vec::new(),
        BeamNode {
            pb: 0.0,
            pnb: f64::NEG_INFINITY,
            lm_log10: 0.0,
            chars: Vec::new(),
        },
    );
    for t in 0..em.frames() {
        let mut next: BTreeMap<Vec<usize>, BeamNode> = BTreeMap::new();
        for (prefix, node) in &beams {
            let total = node.total();
            // Blank keeps the prefix as is.
            let blank = next.entry(prefix.clone()).or_insert_with(|| BeamNode {
                pb: f64::NEG_INFINITY,
                pnb: f64::NEG_INFINITY,
                lm_log10: node.lm_log10,
                chars: node.chars.clone(),
            });
            blank.pb = log_add(blank.pb, total + em.log_prob(t, 0));
            for v in 1..em.vocab_size() {
                let p_em = em.log_prob(t, v);
                if prefix.last() == Some(&v) {
                    // Repeating the last token without a blank in between
                    // collapses into the same prefix.
                    let same = next.entry(prefix.clone()).or_insert_with(|| BeamNode {
                        pb: f64::NEG_INFINITY,
                        pnb: f64::NEG_INFINITY,
                        lm_log10: node.lm_log10,
                        chars: node.chars.clone(),
                    });
                    same.pnb = log_add(same.pnb, node.pnb + p_em);
                    // Only blank-terminated paths start a genuinely new copy.
                    if node.pb > f64::NEG_INFINITY {
                        extend(&mut next, em, prefix, node, v, node.pb + p_em, lms);
                    }
                } else {
                    extend(&mut next, em, prefix, node, v, total + p_em, lms);
                }
            }
        }
        // Prune to the beam width by fused score.
        let mut entries: Vec<(Vec<usize>, BeamNode)> = next.into_iter().collect();
        entries.sort_by(|a, b| {
            b.1.fused(params.lm_weight)
                .total_cmp(&a.1.fused(params.lm_weight))
                .then_with(|| a.0.cmp(&b.0))
        });
        entries.truncate(params.beam_width);
        beams = entries.into_iter().collect();
    }
    let mut hyps: Vec<Hypothesis> = beams
        .into_iter()
        .filter(|(_, node)| node.total() > f64::NEG_INFINITY)
        .map(|(labels, node)| Hypothesis {
            labels,
            log_prob: node.total().min(0.0),
            lm_log10: lms.map(|_| node.lm_log10),
            fused_score: node.fused(params.lm_weight).min(0.0),
        })
        .collect();
    hyps.sort_by(|a, b| {
        b.fused_score
            .total_cmp(&a.fused_score)
            .then_with(|| a.labels.cmp(&b.labels))
    });
    hyps.truncate(params.n_best);
    Ok(hyps)
}

fn extend(
    next: &mut BTreeMap<Vec<usize>, BeamNode>,
    em: &EmissionMatrix,
    prefix: &[usize],
    node: &BeamNode,
    v: usize,
    log_p: f64,
    lms: Option<&DualLm>,
) {
    let mut labels = prefix.to_vec();
    labels.push(v);
    let entry = next.entry(labels).or_insert_with(|| {
        let mut chars = node.chars.clone();
        let mut lm_log10 = node.lm_log10;
        if let Some(dual) = lms {
            lm_log10 += dual.extension_log10(&chars, em.token(v));
        }
        chars.extend(em.token(v).chars().filter(|c| !c.is_whitespace()));
        BeamNode {
            pb: f64::NEG_INFINITY,
            pnb: f64::NEG_INFINITY,
            lm_log10,
            chars,
        }
    });
    entry.pnb = log_add(entry.pnb, log_p);
}

/// Reorders hypotheses by `log_prob + rescore_weight * rescorer(labels)`.
/// The sort is stable, so a constant rescorer preserves the input order of
/// equally probable hypotheses. Each returned hypothesis carries its new
/// score in `fused_score`.
pub fn rescore_nbest(
    hyps: &[Hypothesis],
    rescorer: &dyn Fn(&[usize]) -> f64,
    rescore_weight: f64,
) -> Vec<Hypothesis> {
    let mut rescored: Vec<Hypothesis> = hyps
        .iter()
        .map(|h| {
            let mut h = h.clone();
            h.fused_score = h.log_prob + rescore_weight * rescorer(&h.labels);
            h
        })
        .collect();
    rescored.sort_by(|a, b| b.fused_score.total_cmp(&a.fused_score));
    rescored
}

/// Builds the default rescorer: the domain LM's mean log10 score of the
/// text the labels spell. Empty labelings score 0.
pub fn lm_rescorer<'a>(
    model: &'a crate::lm::NGramModel,
    tokens: &'a [String],
) -> impl Fn(&[usize]) -> f64 + 'a {
    move |labels: &[usize]| {
        let text: String = labels.iter().map(|&i| tokens[i].as_str()).collect();
        crate::lm::score_text(model, &text).unwrap_or(0.0)
    }
}
