//! Subcommand implementations. Every output file is written atomically;
//! stdout carries the machine-readable result, stderr the diagnostics.

use crate::config::{resolve_objective, resolve_selector_params, resolve_signal_config, FileConfig};
use crate::{CliError, SelectorKind, TimingArg};
use psfr_core::evolve::{
    load_checkpoint, run_evolution, EvalContext, EvolveConfig, TimingMode,
};
use psfr_core::media::{ResizeSpec, VideoSource};
use psfr_core::metrics::{
    combined_objective, drop_missing_supervision, read_annotations, EvidenceInstance,
    SelectionOutcome,
};
use psfr_core::selector::{psfr_select, uniform_select, validate_selection, SelectionRequest};
use psfr_core::signals::{extract_signals, read_cache, write_cache, SignalTrack};
use psfr_core::synth;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn parse_resize(spec: Option<&str>) -> Result<Option<ResizeSpec>, CliError> {
    let Some(text) = spec else { return Ok(None) };
    let (w, h) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| CliError::usage(format!("--resize expects WxH, got {text:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| CliError::usage(format!("--resize expects WxH, got {text:?}")))
    };
    let spec = ResizeSpec::new(parse(w)?, parse(h)?)
        .map_err(|e| CliError::usage(format!("--resize: {e}")))?;
    Ok(Some(spec))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| CliError::from(e.error))?;
    Ok(())
}

fn cache_path(cache_dir: &Path, video_id: &str) -> PathBuf {
    cache_dir.join(format!("{video_id}.psfc"))
}

/// Digest over the video's frame files plus everything that shapes the
/// cache contents, so any input or config change forces re-extraction.
fn content_digest(
    dir: &Path,
    resize: Option<ResizeSpec>,
    cfg: &psfr_core::signals::SignalConfig,
) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    hasher.update(b"psfc-digest-v1\n");
    hasher.update(serde_json::to_vec(cfg).expect("config serializes"));
    if let Some(r) = resize {
        hasher.update(r.width.to_le_bytes());
        hasher.update(r.height.to_le_bytes());
    }
    let mut frame_files: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg" | "pgry")) {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            frame_files.push((name, path));
        }
    }
    frame_files.sort();
    for (name, path) in frame_files {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        let mut file = std::fs::File::open(&path)?;
        std::io::copy(&mut file, &mut hasher)?;
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn cmd_signals(
    videos: &[PathBuf],
    cache_dir: &Path,
    resize: Option<&str>,
    force: bool,
    file_cfg: &FileConfig,
) -> Result<(), CliError> {
    let resize = parse_resize(resize)?;
    let cfg = resolve_signal_config(file_cfg)?;
    std::fs::create_dir_all(cache_dir)?;

    let mut failures: Vec<String> = Vec::new();
    for dir in videos {
        let outcome = (|| -> Result<String, CliError> {
            let src = VideoSource::open_frame_dir(dir, resize)?;
            let id = src.id().to_string();
            let digest = content_digest(dir, resize, &cfg)?;
            let cache = cache_path(cache_dir, &id);
            let sidecar = cache_dir.join(format!("{id}.sha256"));
            if !force
                && std::fs::read_to_string(&sidecar)
                    .map(|s| s.trim() == digest)
                    .unwrap_or(false)
            {
                if let Ok(track) = read_cache(&cache) {
                    return Ok(format!("{id}: up to date ({} frames), skipped", track.frames()));
                }
            }
            let start = Instant::now();
            let track = extract_signals(&src, &cfg)?;
            let elapsed = start.elapsed().as_secs_f64();
            write_cache(&track, &cache)?;
            write_atomic(&sidecar, format!("{digest}\n").as_bytes())?;
            Ok(format!(
                "{id}: {} frames in {:.2} s ({:.4} s/frame) -> {}",
                track.frames(),
                elapsed,
                elapsed / track.frames() as f64,
                cache.display()
            ))
        })();
        match outcome {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                failures.push(dir.display().to_string());
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "{} of {} videos failed: {}",
            failures.len(),
            videos.len(),
            failures.join(", ")
        )))
    }
}

/// Loads the cache for every video the instances reference. Instances whose
/// cache is missing are collected for error reporting.
fn load_tracks(
    cache_dir: &Path,
    instances: &[EvidenceInstance],
) -> Result<BTreeMap<String, SignalTrack>, CliError> {
    let mut tracks: BTreeMap<String, SignalTrack> = BTreeMap::new();
    let mut missing: Vec<&str> = Vec::new();
    for inst in instances {
        if tracks.contains_key(&inst.video_id) {
            continue;
        }
        let path = cache_path(cache_dir, &inst.video_id);
        if !path.is_file() {
            missing.push(&inst.instance_id);
            continue;
        }
        tracks.insert(inst.video_id.clone(), read_cache(&path)?);
    }
    if missing.is_empty() {
        Ok(tracks)
    } else {
        Err(CliError::data(format!(
            "missing signal caches for instances: {}",
            missing.join(", ")
        )))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_select(
    cache_dir: &Path,
    annotations: &Path,
    k: Option<usize>,
    selector: SelectorKind,
    params_path: Option<&PathBuf>,
    timing: TimingArg,
    out: &Path,
    file_cfg: &FileConfig,
) -> Result<(), CliError> {
    let objective = resolve_objective(file_cfg, None, None, None, k)?;
    let budget = objective.budget_k;
    let params = resolve_selector_params(file_cfg, params_path)?;
    let instances = read_annotations(annotations)?;
    let tracks = load_tracks(cache_dir, &instances)?;

    let mut lines = String::new();
    for inst in &instances {
        let track = &tracks[&inst.video_id];
        let req = SelectionRequest {
            track,
            candidates: &inst.candidates,
            budget,
        };
        let result = match selector {
            SelectorKind::Uniform => uniform_select(&req),
            SelectorKind::Psfr => psfr_select(&req, &params),
        }
        .map_err(|e| CliError::data(format!("instance {}: {e}", inst.instance_id)))?;
        let elapsed_s = match timing {
            TimingArg::Wallclock => result.elapsed_s,
            TimingArg::Zero => 0.0,
        };
        let valid =
            validate_selection(&result.indices, &inst.candidates, budget, elapsed_s, None)
                .is_ok();
        let outcome = SelectionOutcome {
            instance_id: inst.instance_id.clone(),
            indices: result.indices,
            elapsed_s,
            valid: Some(valid),
        };
        lines.push_str(&serde_json::to_string(&outcome)?);
        lines.push('\n');
    }
    write_atomic(out, lines.as_bytes())?;
    println!(
        "selected for {} instances -> {}",
        instances.len(),
        out.display()
    );
    Ok(())
}

fn read_selections(path: &Path) -> Result<Vec<SelectionOutcome>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let outcome: SelectionOutcome = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(outcome);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    selections: &Path,
    annotations: &Path,
    alpha: Option<f64>,
    gamma: Option<f64>,
    t_max: Option<f64>,
    k: Option<usize>,
    out: Option<&PathBuf>,
    file_cfg: &FileConfig,
) -> Result<(), CliError> {
    let cfg = resolve_objective(file_cfg, alpha, gamma, t_max, k)?;
    let outcomes = read_selections(selections)?;
    let instances = read_annotations(annotations)?;

    let known: std::collections::BTreeSet<&str> =
        instances.iter().map(|i| i.instance_id.as_str()).collect();
    let mut by_id: BTreeMap<&str, &SelectionOutcome> = BTreeMap::new();
    for outcome in &outcomes {
        if !known.contains(outcome.instance_id.as_str()) {
            return Err(CliError::data(format!(
                "selection for unknown instance {:?}",
                outcome.instance_id
            )));
        }
        if by_id.insert(&outcome.instance_id, outcome).is_some() {
            return Err(CliError::data(format!(
                "duplicate selection for instance {:?}",
                outcome.instance_id
            )));
        }
    }

    let (kept, dropped) = drop_missing_supervision(instances);
    let mut results: Vec<SelectionOutcome> = Vec::with_capacity(kept.len());
    for inst in &kept {
        match by_id.get(inst.instance_id.as_str()) {
            Some(outcome) => results.push((*outcome).clone()),
            None => {
                return Err(CliError::data(format!(
                    "no selection for instance {:?}",
                    inst.instance_id
                )))
            }
        }
    }

    let report = combined_objective(&results, &kept, &cfg)?;
    let mut doc = serde_json::to_value(&report)?;
    doc["dropped"] = dropped.into();
    doc["config"] = serde_json::json!({
        "alpha": cfg.alpha,
        "gamma": cfg.gamma,
        "t_max": cfg.t_max,
        "budget_k": cfg.budget_k,
    });
    let pretty = serde_json::to_string_pretty(&doc)?;
    println!("{pretty}");
    if let Some(path) = out {
        write_atomic(path, pretty.as_bytes())?;
    }
    Ok(())
}

pub struct EvolveArgs<'a> {
    pub cache_dir: &'a Path,
    pub annotations: &'a Path,
    pub islands: Option<usize>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub sigma: Option<f64>,
    pub flip_prob: Option<f64>,
    pub migration_interval: Option<usize>,
    pub archive_size: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub t_max: Option<f64>,
    pub k: Option<usize>,
    pub timing: TimingArg,
    pub checkpoint_dir: Option<&'a PathBuf>,
    pub resume: Option<&'a PathBuf>,
    pub out: Option<&'a PathBuf>,
}

pub fn cmd_evolve(args: EvolveArgs, file_cfg: &FileConfig) -> Result<(), CliError> {
    let objective = resolve_objective(file_cfg, args.alpha, args.gamma, args.t_max, args.k)?;
    let defaults = EvolveConfig::default();
    let o = &file_cfg.evolve;
    let pick_usize = |flag: Option<usize>, file: Option<usize>, def: usize| {
        flag.or(file).unwrap_or(def)
    };
    let pick_f64 =
        |flag: Option<f64>, file: Option<f64>, def: f64| flag.or(file).unwrap_or(def);
    let cfg = EvolveConfig {
        islands: pick_usize(args.islands, o.islands, defaults.islands),
        population: pick_usize(args.population, o.population, defaults.population),
        generations: pick_usize(args.generations, o.generations, defaults.generations),
        sigma: pick_f64(args.sigma, o.sigma, defaults.sigma),
        flip_prob: pick_f64(args.flip_prob, o.flip_prob, defaults.flip_prob),
        migration_interval: pick_usize(
            args.migration_interval,
            o.migration_interval,
            defaults.migration_interval,
        ),
        archive_size: pick_usize(args.archive_size, o.archive_size, defaults.archive_size),
        seed: args.seed.or(file_cfg.seed).unwrap_or(0),
        objective,
        timing: match args.timing {
            TimingArg::Wallclock => TimingMode::Wallclock,
            TimingArg::Zero => TimingMode::DeterministicZero,
        },
        checkpoint_dir: args.checkpoint_dir.cloned(),
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let all = read_annotations(args.annotations)?;
    let (instances, dropped) = drop_missing_supervision(all);
    if instances.is_empty() {
        return Err(CliError::data(
            "no instances with evidence sets to evolve against",
        ));
    }
    if dropped > 0 {
        eprintln!("dropped {dropped} instances without evidence sets");
    }
    let tracks = load_tracks(args.cache_dir, &instances)?;
    let ctx = EvalContext {
        tracks: &tracks,
        instances: &instances,
        objective: cfg.objective,
        timing: cfg.timing,
    };
    let resume = args.resume.map(|p| load_checkpoint(p)).transpose()?;
    let (report, _state) = run_evolution(&cfg, &ctx, resume)?;

    let pretty = serde_json::to_string_pretty(&report)?;
    println!("{pretty}");
    if let Some(path) = args.out {
        write_atomic(path, pretty.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_bench(
    input: &Path,
    reps: usize,
    k: Option<usize>,
    params_path: Option<&PathBuf>,
    resize: Option<&str>,
    file_cfg: &FileConfig,
) -> Result<(), CliError> {
    if reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let budget = resolve_objective(file_cfg, None, None, None, k)?.budget_k;
    let params = resolve_selector_params(file_cfg, params_path)?;

    let track = if input.is_dir() {
        let resize = parse_resize(resize)?;
        let cfg = resolve_signal_config(file_cfg)?;
        let src = VideoSource::open_frame_dir(input, resize)?;
        let start = Instant::now();
        let track = extract_signals(&src, &cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        println!(
            "extraction: {} frames in {:.3} s ({:.6} s/frame)",
            track.frames(),
            elapsed,
            elapsed / track.frames() as f64
        );
        track
    } else {
        let track = read_cache(input)?;
        println!("extraction: skipped ({} cached frames)", track.frames());
        track
    };

    let candidates: Vec<usize> = (0..track.frames()).collect();
    let req = SelectionRequest {
        track: &track,
        candidates: &candidates,
        budget,
    };
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let result = psfr_select(&req, &params)?;
        times.push(result.elapsed_s);
    }
    let mean = times.iter().sum::<f64>() / reps as f64;
    let std = if reps > 1 {
        (times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (reps - 1) as f64).sqrt()
    } else {
        0.0
    };
    println!(
        "selection: {:.6} ± {:.6} s over {} reps (T={}, K={})",
        mean,
        std,
        reps,
        track.frames(),
        budget
    );
    Ok(())
}

pub fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::usage(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let mut corpus: synth::CorpusSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid spec {}: {e}", spec_path.display())))?;
    if let Some(seed) = seed {
        corpus.seed = seed;
    }
    corpus
        .validate()
        .map_err(|e| CliError::usage(format!("invalid spec {}: {e}", spec_path.display())))?;

    let specs = synth::write_corpus(&corpus, out)?;
    let mut lines = String::new();
    let mut total_frames = 0usize;
    for video in &specs {
        total_frames += video.total_frames();
        let inst = EvidenceInstance {
            instance_id: video.name.clone(),
            video_id: video.name.clone(),
            candidates: (0..video.total_frames()).collect(),
            evidence_sets: synth::evidence_sets(video, corpus.evidence),
            weights: None,
        };
        lines.push_str(&serde_json::to_string(&inst)?);
        lines.push('\n');
    }
    let annotations = out.join("annotations.jsonl");
    write_atomic(&annotations, lines.as_bytes())?;
    println!(
        "wrote {} videos ({} frames) and {}",
        specs.len(),
        total_frames,
        annotations.display()
    );
    Ok(())
}
