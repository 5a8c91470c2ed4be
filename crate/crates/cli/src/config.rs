//! Flat key=value pipeline configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys mirror the parameter names of the library modules; unknown keys
//! are rejected so typos fail loudly instead of silently using a default.
//! Precedence is CLI flag > config file > built-in default.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use subfuse_core::fusion::FusionConfig;
use subfuse_core::lm::{DEFAULT_BACKOFF_ALPHA, DEFAULT_ORDER};
use subfuse_core::{BeamSearchParams, DualLmConfig, ExtractorParams, TrackerParams};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub tracker: TrackerParams,
    pub extractor: ExtractorParams,
    pub fusion: FusionConfig,
    pub dual_lm: DualLmConfig,
    pub beam: BeamSearchParams,
    pub lm_order: usize,
    pub backoff_alpha: f64,
    pub fps: f64,
    pub lm_universal: Option<PathBuf>,
    pub lm_domain: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerParams::default(),
            extractor: ExtractorParams::default(),
            fusion: FusionConfig::default(),
            dual_lm: DualLmConfig::default(),
            beam: BeamSearchParams::default(),
            lm_order: DEFAULT_ORDER,
            backoff_alpha: DEFAULT_BACKOFF_ALPHA,
            fps: 25.0,
            lm_universal: None,
            lm_domain: None,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("config line {lineno}: expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(key, value)
                .with_context(|| format!("config line {lineno}"))?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| anyhow::anyhow!("{key}: bad value \"{value}\": {e}"))
        }
        match key {
            "gate_cost" => self.tracker.gate_cost = num(key, value)?,
            "max_gap_frames" => self.tracker.max_gap_frames = num(key, value)?,
            "band_count" => self.tracker.band_count = num(key, value)?,
            "min_band_fraction" => self.tracker.min_band_fraction = num(key, value)?,
            "image_score_threshold" => self.extractor.image_score_threshold = num(key, value)?,
            "merge_similarity_threshold" => {
                self.extractor.merge_similarity_threshold = num(key, value)?
            }
            "min_track_frames" => self.extractor.min_track_frames = num(key, value)?,
            "keep_threshold" => self.extractor.keep_threshold = num(key, value)?,
            "position_filter_enabled" => self.extractor.position_filter_enabled = num(key, value)?,
            "frame_width" => self.extractor.frame_width = num(key, value)?,
            "frame_height" => self.extractor.frame_height = num(key, value)?,
            "theta_same" => self.fusion.theta_same = num(key, value)?,
            "theta_split" => self.fusion.theta_split = num(key, value)?,
            "theta_remove" => self.fusion.theta_remove = num(key, value)?,
            "theta_pad" => self.fusion.theta_pad = num(key, value)?,
            "w_char" => self.fusion.w_char = num(key, value)?,
            "w_syl" => self.fusion.w_syl = num(key, value)?,
            "w_lm" => self.fusion.w_lm = num(key, value)?,
            "overlap_slack_ms" => self.fusion.overlap_slack_ms = num(key, value)?,
            "lm_floor" => self.fusion.lm_floor = Some(num(key, value)?),
            "lambda_domain" => self.dual_lm.lambda_domain = num(key, value)?,
            "log_linear" => self.dual_lm.log_linear = num(key, value)?,
            "beam_width" => self.beam.beam_width = num(key, value)?,
            "n_best" => self.beam.n_best = num(key, value)?,
            "lm_weight" => self.beam.lm_weight = num(key, value)?,
            "lm_order" => self.lm_order = num(key, value)?,
            "backoff_alpha" => self.backoff_alpha = num(key, value)?,
            "fps" => self.fps = num(key, value)?,
            "lm_universal" => self.lm_universal = Some(PathBuf::from(value)),
            "lm_domain" => self.lm_domain = Some(PathBuf::from(value)),
            other => bail!("unknown config key \"{other}\""),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.tracker.gate_cost, 0.7);
        assert_eq!(cfg.fusion.theta_same, 0.8);
        assert_eq!(cfg.beam.beam_width, 16);
        assert_eq!(cfg.lm_order, 4);
    }

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = PipelineConfig::parse(
            "# tracker\ngate_cost = 0.5  # inline note\n\nbeam_width=8\nlm_universal = models/u.arpa\n",
        )
        .unwrap();
        assert_eq!(cfg.tracker.gate_cost, 0.5);
        assert_eq!(cfg.beam.beam_width, 8);
        assert_eq!(
            cfg.lm_universal.as_deref(),
            Some(std::path::Path::new("models/u.arpa"))
        );
        assert_eq!(cfg.fusion.theta_pad, 0.5);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let err = PipelineConfig::parse("gate_cots = 0.5\n").unwrap_err();
        assert!(format!("{err:#}").contains("unknown config key"));
        let err = PipelineConfig::parse("\n\nbeam_width = fast\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 3"));
        assert!(PipelineConfig::parse("just words\n").is_err());
    }
}
