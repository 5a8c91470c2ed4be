//! `subfuse`: multimodal subtitle extraction pipeline.
//!
//! Every subcommand reads either a single file or a directory of per-video
//! files. Directory inputs are processed in parallel (`--threads`), with
//! outputs buffered per video and written in sorted order, so runs are
//! reproducible regardless of thread count.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use config::PipelineConfig;
use subfuse_core::extractor::build_visual_timeline_default;
use subfuse_core::fusion::{fuse, FusionAudit};
use subfuse_core::lm::{read_arpa, score_text, train_lm, write_arpa, NGramModel};
use subfuse_core::model::{
    parse_asr_segments, parse_ocr_frames, parse_timeline_json, write_asr_json, write_ocr_json,
    write_srt, write_timeline_json, AsrDocument, Timeline,
};
use subfuse_core::synth::{default_truth_lines, generate_corpus, rotated_lines, NoiseProfile};
use subfuse_core::tracker::{position_filter, run_tracker};
use subfuse_core::{eval_timelines, parse_emissions, prefix_beam_search, DualLm};

#[derive(Parser)]
#[command(
    name = "subfuse",
    version,
    about = "Subtitle extraction from OCR and ASR output"
)]
struct Cli {
    /// Flat key=value config file; CLI flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for directory inputs (default 1).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track OCR detections across frames and keep the subtitle band.
    Track {
        /// OCR JSON file, or a directory of `*.ocr.json` files.
        input: PathBuf,
        /// Output directory (default: alongside the input).
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Build a visual-only subtitle timeline (and SRT) from OCR JSON.
    Extract {
        /// OCR JSON file, or a directory of `*.ocr.json` files.
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Train a character n-gram language model and write it as ARPA text.
    LmTrain {
        /// Training corpus, one line of text per line.
        corpus: PathBuf,
        /// Output model path.
        #[arg(short, long, value_name = "FILE")]
        output: PathBuf,
        /// Model order (overrides `lm_order` from the config file).
        #[arg(long)]
        order: Option<usize>,
        /// Backoff penalty in (0, 1] (overrides `backoff_alpha`).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Score a text under a trained model (mean log10 per character).
    LmScore { model: PathBuf, text: String },
    /// Beam-search a CTC emission matrix into an n-best list.
    Decode {
        /// Emission JSON: token list plus per-frame log probabilities.
        emissions: PathBuf,
        /// ARPA model for general text (needs --lm-domain too).
        #[arg(long, value_name = "FILE")]
        lm_universal: Option<PathBuf>,
        /// ARPA model for in-domain text (needs --lm-universal too).
        #[arg(long, value_name = "FILE")]
        lm_domain: Option<PathBuf>,
        /// Beam width (overrides `beam_width`).
        #[arg(long)]
        beam_width: Option<usize>,
        /// Hypotheses to keep (overrides `n_best`).
        #[arg(long)]
        n_best: Option<usize>,
        /// Write the n-best JSON here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Fuse a visual timeline with ASR segments.
    Fuse {
        /// Visual timeline JSON file, or a directory of `*.timeline.json`.
        visual: PathBuf,
        /// ASR JSON file, or a directory of `*.asr.json`.
        asr: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Report character error rate of hypothesis timelines vs references.
    Eval {
        /// Reference timeline JSON file or directory.
        reference: PathBuf,
        /// Hypothesis timeline JSON file or directory.
        hypothesis: PathBuf,
    },
    /// Generate a synthetic corpus: OCR, ASR, and truth files per video.
    Synth {
        /// Base RNG seed; video `i` uses seed + i. Overrides the profile's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Noise profile JSON (all rates default to zero).
        #[arg(long, value_name = "FILE")]
        profile: Option<PathBuf>,
        /// Number of videos to generate.
        #[arg(long, default_value_t = 1)]
        videos: usize,
        /// Subtitle lines per video, rotated through the built-in pool.
        #[arg(long, default_value_t = 8)]
        lines: usize,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        let io = err.chain().any(|cause| cause.is::<std::io::Error>());
        std::process::exit(if io { 2 } else { 1 });
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::parse(&read_text(path)?)?,
        None => PipelineConfig::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(1))
        .build()
        .context("building thread pool")?;

    match cli.command {
        Command::Track { input, out_dir } => {
            each_video(&pool, &input, "ocr", out_dir, |id, bytes| {
                let doc = parse_ocr_frames(bytes)?;
                let tracks = run_tracker(&doc.frames, &cfg.tracker)?;
                let tracks = if cfg.extractor.position_filter_enabled {
                    position_filter(tracks, cfg.extractor.frame_height, &cfg.tracker)
                } else {
                    tracks
                };
                let summary = format!("{id}: {} tracks", tracks.len());
                Ok((
                    vec![(format!("{id}.tracks.json"), pretty_json(&tracks)?)],
                    summary,
                ))
            })
        }
        Command::Extract { input, out_dir } => {
            each_video(&pool, &input, "ocr", out_dir, |id, bytes| {
                let doc = parse_ocr_frames(bytes)?;
                let timeline = build_visual_timeline_default(&doc, &cfg.tracker, &cfg.extractor)?;
                let summary = format!("{id}: {} segments", timeline.segments.len());
                Ok((
                    vec![
                        (
                            format!("{id}.timeline.json"),
                            write_timeline_json(&timeline)?,
                        ),
                        (format!("{id}.srt"), write_srt(&timeline)?),
                    ],
                    summary,
                ))
            })
        }
        Command::LmTrain {
            corpus,
            output,
            order,
            alpha,
        } => {
            let text = read_text(&corpus)?;
            let lines = text.lines().filter(|l| !l.trim().is_empty());
            let model = train_lm(lines, order.unwrap_or(cfg.lm_order))?
                .with_backoff_alpha(alpha.unwrap_or(cfg.backoff_alpha))?;
            write_bytes(&output, write_arpa(&model)?.as_bytes())?;
            println!(
                "trained order-{} model over {} characters -> {}",
                model.order(),
                model.vocab_size(),
                output.display()
            );
            Ok(())
        }
        Command::LmScore { model, text } => {
            let model = read_arpa(&read_text(&model)?)?;
            println!("{:.6}", score_text(&model, &text)?);
            Ok(())
        }
        Command::Decode {
            emissions,
            lm_universal,
            lm_domain,
            beam_width,
            n_best,
            out,
        } => {
            let em = parse_emissions(&read_text(&emissions)?)?;
            let models = load_dual_models(
                lm_universal.or_else(|| cfg.lm_universal.clone()),
                lm_domain.or_else(|| cfg.lm_domain.clone()),
            )?;
            let lms = models.as_ref().map(|(u, d)| DualLm::new(u, d, cfg.dual_lm));
            let mut params = cfg.beam;
            if let Some(w) = beam_width {
                params.beam_width = w;
            }
            if let Some(n) = n_best {
                params.n_best = n;
            }
            let hyps = prefix_beam_search(&em, &params, lms.as_ref())?;
            let entries: Vec<NBestEntry> = hyps
                .iter()
                .enumerate()
                .map(|(rank, h)| NBestEntry {
                    rank: rank + 1,
                    text: em.labels_to_text(&h.labels),
                    labels: h.labels.clone(),
                    log_prob: h.log_prob,
                    lm_log10: h.lm_log10,
                    fused_score: h.fused_score,
                })
                .collect();
            let json = pretty_json(&entries)?;
            match out {
                Some(path) => write_bytes(&path, &json)?,
                None => print!("{}", String::from_utf8_lossy(&json)),
            }
            Ok(())
        }
        Command::Fuse {
            visual,
            asr,
            out_dir,
        } => {
            let models = load_dual_models(cfg.lm_universal.clone(), cfg.lm_domain.clone())?;
            let lms = models.as_ref().map(|(u, d)| DualLm::new(u, d, cfg.dual_lm));
            let asr_docs = load_asr_inputs(&asr)?;
            each_video(&pool, &visual, "timeline", out_dir, |id, bytes| {
                let timeline = parse_timeline_json(bytes)?;
                let asr_doc = asr_docs
                    .get(&timeline.video_id)
                    .with_context(|| format!("no ASR input for video \"{}\"", timeline.video_id))?;
                let (fused, audit) = fuse(&timeline, &asr_doc.segments, lms.as_ref(), &cfg.fusion);
                let summary = format!(
                    "{id}: {} -> {} segments ({} removed, {} padded)",
                    audit.input_segments,
                    audit.output_segments,
                    audit.removed_segments,
                    audit.padded_segments
                );
                Ok((
                    vec![
                        (format!("{id}.fused.json"), write_timeline_json(&fused)?),
                        (format!("{id}.fused.srt"), write_srt(&fused)?),
                        (
                            format!("{id}.audit.json"),
                            pretty_json::<FusionAudit>(&audit)?,
                        ),
                    ],
                    summary,
                ))
            })
        }
        Command::Eval {
            reference,
            hypothesis,
        } => {
            let refs = load_timelines(&reference)?;
            let hyps = load_timelines(&hypothesis)?;
            let report = eval_timelines(&refs, &hyps)?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Synth {
            seed,
            profile,
            videos,
            lines,
            out_dir,
        } => {
            let base = match profile {
                Some(path) => serde_json::from_str::<NoiseProfile>(&read_text(&path)?)
                    .with_context(|| format!("parsing noise profile {}", path.display()))?,
                None => NoiseProfile::default(),
            };
            let base_seed = seed.unwrap_or(base.seed);
            let pool_lines = default_truth_lines();
            let jobs: Vec<usize> = (0..videos).collect();
            let outputs: Vec<Vec<(String, Vec<u8>)>> = pool.install(|| {
                jobs.par_iter()
                    .map(|&v| {
                        let id = format!("video-{v:02}");
                        let mut profile = base.clone();
                        profile.seed = base_seed.wrapping_add(v as u64);
                        let truth_lines = rotated_lines(&pool_lines, v, lines);
                        let (ocr, asr, truth) = generate_corpus(
                            &truth_lines,
                            &profile,
                            cfg.fps,
                            (cfg.extractor.frame_width, cfg.extractor.frame_height),
                            &id,
                        )?;
                        let asr_doc = AsrDocument {
                            video_id: id.clone(),
                            segments: asr,
                        };
                        Ok(vec![
                            (format!("{id}.ocr.json"), write_ocr_json(&ocr)),
                            (format!("{id}.asr.json"), write_asr_json(&asr_doc)),
                            (format!("{id}.truth.json"), write_timeline_json(&truth)?),
                        ])
                    })
                    .collect::<Result<_>>()
            })?;
            for files in &outputs {
                for (name, bytes) in files {
                    write_bytes(&out_dir.join(name), bytes)?;
                }
            }
            println!("wrote {videos} video(s) to {}", out_dir.display());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct NBestEntry {
    rank: usize,
    text: String,
    labels: Vec<usize>,
    log_prob: f64,
    lm_log10: Option<f64>,
    fused_score: f64,
}

/// Output files (name, bytes) plus a one-line summary for one video.
type VideoOutput = (Vec<(String, Vec<u8>)>, String);

/// Runs `job` over one file or every matching file of a directory, in
/// parallel, then writes output files and prints summaries in input order.
fn each_video(
    pool: &rayon::ThreadPool,
    input: &Path,
    kind: &str,
    out_dir: Option<PathBuf>,
    job: impl Fn(&str, &[u8]) -> Result<VideoOutput> + Sync,
) -> Result<()> {
    let inputs = collect_inputs(input, kind)?;
    let out_dir = out_dir.unwrap_or_else(|| {
        if input.is_dir() {
            input.to_path_buf()
        } else {
            input
                .parent()
                .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
        }
    });
    let results: Vec<VideoOutput> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let bytes =
                    fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                job(&video_stem(path), &bytes)
                    .with_context(|| format!("processing {}", path.display()))
            })
            .collect::<Result<_>>()
    })?;
    for (files, summary) in &results {
        for (name, bytes) in files {
            write_bytes(&out_dir.join(name), bytes)?;
        }
        println!("{summary}");
    }
    Ok(())
}

/// A single file, or every `*.<kind>.json` (falling back to `*.json`)
/// inside a directory, sorted by name.
fn collect_inputs(input: &Path, kind: &str) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut tagged = Vec::new();
    let mut plain = Vec::new();
    for entry in fs::read_dir(input).with_context(|| format!("listing {}", input.display()))? {
        let path = entry
            .with_context(|| format!("listing {}", input.display()))?
            .path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name.ends_with(&format!(".{kind}.json")) {
            tagged.push(path);
        } else if name.ends_with(".json") {
            plain.push(path);
        }
    }
    let mut chosen = if tagged.is_empty() { plain } else { tagged };
    if chosen.is_empty() {
        bail!("no .{kind}.json or .json files in {}", input.display());
    }
    chosen.sort();
    Ok(chosen)
}

/// File name without its final `.json` and an optional kind tag, so
/// `video-03.ocr.json` and `video-03.timeline.json` both map to `video-03`.
fn video_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = name.strip_suffix(".json").unwrap_or(&name);
    for tag in [
        ".ocr",
        ".asr",
        ".timeline",
        ".truth",
        ".fused",
        ".tracks",
        ".audit",
    ] {
        if let Some(stripped) = name.strip_suffix(tag) {
            return stripped.to_string();
        }
    }
    name.to_string()
}

fn load_asr_inputs(path: &Path) -> Result<BTreeMap<String, AsrDocument>> {
    let mut docs = BTreeMap::new();
    for file in collect_inputs(path, "asr")? {
        let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
        let doc =
            parse_asr_segments(&bytes).with_context(|| format!("parsing {}", file.display()))?;
        docs.insert(doc.video_id.clone(), doc);
    }
    Ok(docs)
}

fn load_timelines(path: &Path) -> Result<BTreeMap<String, Timeline>> {
    let mut timelines = BTreeMap::new();
    for file in collect_inputs(path, "timeline")? {
        let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
        let timeline =
            parse_timeline_json(&bytes).with_context(|| format!("parsing {}", file.display()))?;
        timelines.insert(timeline.video_id.clone(), timeline);
    }
    Ok(timelines)
}

fn load_dual_models(
    universal: Option<PathBuf>,
    domain: Option<PathBuf>,
) -> Result<Option<(NGramModel, NGramModel)>> {
    match (universal, domain) {
        (Some(u), Some(d)) => {
            let u = read_arpa(&read_text(&u)?).context("universal model")?;
            let d = read_arpa(&read_text(&d)?).context("domain model")?;
            Ok(Some((u, d)))
        }
        (None, None) => Ok(None),
        _ => bail!("language model fusion needs both a universal and a domain model"),
    }
}

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).context("serializing output")?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
