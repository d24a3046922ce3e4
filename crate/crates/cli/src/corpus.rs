//! Files on disk: manifests, score folders and histogram streams.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bandmate_core::ingest::{
    filter_score, parse_manifest, read_score_file, transpose_to_c, write_musicxml, FilterOutcome,
    FilterPolicy, ManifestRecord, ManifestStatus, Song,
};
use bandmate_core::music::{bar_histogram, ChordVocabulary, PitchHistogram};
use bandmate_core::synth::{generate_corpus, CorpusSpec};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

fn is_score(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("xml" | "musicxml" | "mxl")
    )
}

/// Score files under each input, directories walked recursively, sorted.
pub fn score_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut pending: Vec<PathBuf> = inputs.to_vec();
    while let Some(path) = pending.pop() {
        if path.is_dir() {
            for entry in
                fs::read_dir(&path).with_context(|| format!("reading {}", path.display()))?
            {
                pending.push(entry?.path());
            }
        } else if path.is_file() {
            if is_score(&path) {
                out.push(path);
            }
        } else {
            bail!("{} does not exist", path.display());
        }
    }
    out.sort();
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "score".into())
}

/// Filters every score, writes accepted ones transposed to C into `out_dir`
/// and returns one manifest record per input file. Accepted records point at
/// the written copy, relative to `out_dir`.
pub fn ingest(
    inputs: &[PathBuf],
    out_dir: &Path,
    vocabulary: ChordVocabulary,
) -> Result<Vec<ManifestRecord>> {
    fs::create_dir_all(out_dir)?;
    let policy = FilterPolicy::new(vocabulary);
    let mut records = Vec::new();
    let mut used = std::collections::HashSet::new();
    for path in score_files(inputs)? {
        let outcome = read_score_file(&path)
            .map_err(|e| e.to_string())
            .and_then(|score| match filter_score(&score, &policy) {
                FilterOutcome::Accept(s) => Ok(s),
                FilterOutcome::Reject(reason) => Err(reason),
            })
            .and_then(|s| match Song::from_score("", &s) {
                Ok(_) => Ok(s),
                Err(e) => Err(e.to_string()),
            });
        let record = match outcome {
            Ok(score) => {
                let stem = file_stem(&path);
                let mut name = format!("{stem}.musicxml");
                let mut n = 1;
                while !used.insert(name.clone()) {
                    n += 1;
                    name = format!("{stem}-{n}.musicxml");
                }
                fs::write(out_dir.join(&name), write_musicxml(&score))?;
                ManifestRecord {
                    path: name,
                    status: ManifestStatus::Accepted,
                    reason: None,
                }
            }
            Err(reason) => {
                log::info!("rejected {}: {reason}", path.display());
                ManifestRecord {
                    path: path.display().to_string(),
                    status: ManifestStatus::Rejected,
                    reason: Some(reason),
                }
            }
        };
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes the synthetic corpus as MusicXML plus its manifest.
pub fn write_synthetic(out_dir: &Path, spec: &CorpusSpec) -> Result<Vec<ManifestRecord>> {
    fs::create_dir_all(out_dir)?;
    let mut records = Vec::new();
    for song in generate_corpus(spec)? {
        let name = format!("{}.musicxml", song.id);
        fs::write(out_dir.join(&name), write_musicxml(&song.score))?;
        records.push(ManifestRecord {
            path: name,
            status: ManifestStatus::Accepted,
            reason: None,
        });
    }
    write_manifest(&out_dir.join(MANIFEST_NAME), &records)?;
    Ok(records)
}

/// Accepted songs of a manifest; relative paths resolve against its folder.
pub fn load_manifest(path: &Path) -> Result<Vec<Song>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = parse_manifest(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut songs = Vec::new();
    for r in records
        .into_iter()
        .filter(|r| r.status == ManifestStatus::Accepted)
    {
        let file = base.join(&r.path);
        let score =
            read_score_file(&file).with_context(|| format!("reading {}", file.display()))?;
        let song = Song::from_score(file_stem(&file), &transpose_to_c(&score))
            .with_context(|| format!("{}", file.display()))?;
        songs.push(song);
    }
    if songs.is_empty() {
        bail!("{} lists no accepted scores", path.display());
    }
    Ok(songs)
}

fn parse_histogram_line(line: &str) -> Result<PitchHistogram> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    let weights = match &value {
        serde_json::Value::Object(map) => {
            map.get("mass").cloned().unwrap_or(serde_json::Value::Null)
        }
        other => other.clone(),
    };
    let weights: [f64; 12] = serde_json::from_value(weights)
        .context("expected 12 weights, as an array or under \"mass\"")?;
    Ok(PitchHistogram::from_weights(weights)?)
}

/// Per-bar histograms from a score (transposed to C) or from a JSON-lines file
/// with one 12-weight array per bar.
pub fn read_histograms(path: &Path) -> Result<Vec<PitchHistogram>> {
    if is_score(path) {
        let score = transpose_to_c(&read_score_file(path)?);
        return Ok(score.bars.iter().map(bar_histogram).collect());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let bars = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_histogram_line(l).with_context(|| format!("line {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    if bars.is_empty() {
        bail!("{} holds no bars", path.display());
    }
    Ok(bars)
}
