//! Master side of the pipeline: partition, dispatch map tasks to a bounded
//! pool of in-process workers, reduce, and describe the run in a report.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chunking::{partition, process_chunk, ChunkError, ChunkRange, ChunkResult};
use crate::config_io::{write_detections_to, ConfigError, SceneConfig};
use crate::tracker::Detection;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CHUNKCOUNT_WORKERS";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error("reports describe different scenes ({a} vs {b})")]
    SceneMismatch { a: String, b: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSummary {
    /// Half-open `[start, end)`.
    pub range: [u64; 2],
    pub counted: u64,
    pub filtered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WallTimes {
    pub partition: f64,
    pub map: f64,
    pub reduce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountReport {
    pub run_id: String,
    /// Label of the scene, normally the path it was loaded from.
    pub scene: String,
    /// Digest of the canonical scene document; reports are comparable only
    /// when these agree.
    pub scene_digest: String,
    pub chunks: usize,
    pub total_frames: u64,
    pub total: u64,
    pub per_chunk: Vec<ChunkSummary>,
    pub dedup: bool,
    /// Single-pass reference run.
    pub oracle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub timestamp: String,
    pub wall_time_ms: WallTimes,
}

impl CountReport {
    /// One compact JSON line, newline-terminated.
    pub fn to_canonical_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("report serializes");
        line.push('\n');
        line
    }

    pub fn to_canonical_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Canonical form without the fields that vary between identical runs
    /// (`run_id`, `timestamp`, `wall_time_ms`).
    pub fn canonical_content(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        let map = value.as_object_mut().expect("report is an object");
        for key in ["run_id", "timestamp", "wall_time_ms"] {
            map.remove(key);
        }
        value.to_string()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sum: u64 = self.per_chunk.iter().map(|c| c.counted).sum();
        if sum != self.total {
            return Err(ConfigError::invalid(
                "total",
                format!("{} differs from the per-chunk sum {sum}", self.total),
            ));
        }
        let mut expect = 0;
        for c in &self.per_chunk {
            if c.range[0] != expect || c.range[1] <= c.range[0] {
                return Err(ConfigError::invalid(
                    "per_chunk",
                    "ranges must be contiguous and non-empty from frame 0",
                ));
            }
            expect = c.range[1];
        }
        if !self.per_chunk.is_empty() && expect != self.total_frames {
            return Err(ConfigError::invalid(
                "per_chunk",
                format!("ranges end at {expect}, not {}", self.total_frames),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub chunks: usize,
    pub workers: usize,
    pub dedup: bool,
    /// Length of the video; defaults to one past the last detection frame.
    pub total_frames: Option<u64>,
    pub scene_label: String,
    pub seed: Option<u64>,
}

impl PipelineOptions {
    pub fn new(chunks: usize) -> Self {
        Self {
            chunks,
            workers: 1,
            dedup: true,
            total_frames: None,
            scene_label: String::new(),
            seed: None,
        }
    }
}

/// Worker count from `CHUNKCOUNT_WORKERS`, else the available parallelism.
pub fn default_workers() -> Result<usize, OrchestratorError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(invalid(
                "workers",
                format!("{WORKERS_ENV}={v:?} is not a positive integer"),
            )),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn is_frame_ordered(detections: &[Detection]) -> bool {
    detections.windows(2).all(|w| w[0].frame <= w[1].frame)
}

/// Runs `process_chunk` for every range on at most `workers` threads.
///
/// Results come back in range order regardless of scheduling. On failure the
/// error of the lowest-index failing chunk is returned: tasks below a known
/// failure always run, tasks above it are skipped.
pub fn map_chunks(
    detections: &[Detection],
    scene: &SceneConfig,
    ranges: &[ChunkRange],
    workers: usize,
    dedup: bool,
) -> Result<Vec<ChunkResult>, OrchestratorError> {
    if workers < 1 {
        return Err(invalid("workers", "must be at least 1"));
    }
    // Slicing happens here, before dispatch.
    let slices: Vec<&[Detection]> = ranges
        .iter()
        .map(|r| {
            let lo = detections.partition_point(|d| d.frame < r.start_frame);
            let hi = detections.partition_point(|d| d.frame < r.end_frame);
            &detections[lo..hi]
        })
        .collect();

    let next = AtomicUsize::new(0);
    let first_failure = AtomicUsize::new(usize::MAX);
    let slots: Vec<Mutex<Option<Result<ChunkResult, ChunkError>>>> =
        ranges.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|s| {
        for _ in 0..workers.min(ranges.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= ranges.len() {
                    break;
                }
                if i > first_failure.load(Ordering::Acquire) {
                    continue;
                }
                let out = process_chunk(slices[i], scene, &ranges[i], dedup);
                if out.is_err() {
                    first_failure.fetch_min(i, Ordering::AcqRel);
                }
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });

    let mut results = Vec::with_capacity(ranges.len());
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(r)) => results.push(r),
            Some(Err(e)) => return Err(e.into()),
            None => unreachable!("tasks are only skipped above a failure"),
        }
    }
    Ok(results)
}

/// Totals chunk results in any order. The ranges must form a partition
/// starting at frame 0.
pub fn reduce(results: &[ChunkResult]) -> Result<(u64, Vec<ChunkSummary>), OrchestratorError> {
    let mut sorted: Vec<&ChunkResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.range.index);
    let mut expect = 0;
    for (i, r) in sorted.iter().enumerate() {
        if r.range.index != i {
            return Err(invalid(
                "chunks",
                format!("chunk {i} is missing or duplicated"),
            ));
        }
        if r.range.start_frame != expect || r.range.is_empty() {
            return Err(invalid(
                "chunks",
                format!(
                    "chunk {i} covers [{}, {}) but should start at {expect}",
                    r.range.start_frame, r.range.end_frame
                ),
            ));
        }
        expect = r.range.end_frame;
    }
    let per_chunk: Vec<ChunkSummary> = sorted
        .iter()
        .map(|r| ChunkSummary {
            range: [r.range.start_frame, r.range.end_frame],
            counted: r.counted,
            filtered: r.filtered,
        })
        .collect();
    Ok((per_chunk.iter().map(|c| c.counted).sum(), per_chunk))
}

fn short_hex(bytes: &[u8]) -> String {
    hex::encode(&bytes[..8])
}

pub fn scene_digest(scene: &SceneConfig) -> String {
    short_hex(&Sha256::digest(scene.to_canonical_json().as_bytes()))
}

fn run_id(
    scene: &SceneConfig,
    detections: &[Detection],
    opts: &PipelineOptions,
    total_frames: u64,
    timestamp: &str,
) -> String {
    let mut stream = Vec::new();
    write_detections_to(&mut stream, detections).expect("writing to memory");
    let mut h = Sha256::new();
    h.update(scene.to_canonical_json().as_bytes());
    h.update(&stream);
    h.update(
        format!(
            "chunks={} dedup={} frames={total_frames} seed={:?}\n",
            opts.chunks, opts.dedup, opts.seed
        )
        .as_bytes(),
    );
    h.update(timestamp.as_bytes());
    short_hex(&h.finalize())
}

/// Elapsed milliseconds, rounded to whole microseconds.
fn millis(since: Instant) -> f64 {
    since.elapsed().as_micros() as f64 / 1e3
}

fn pipeline(
    detections: &[Detection],
    scene: &SceneConfig,
    opts: &PipelineOptions,
    oracle: bool,
) -> Result<CountReport, OrchestratorError> {
    if opts.chunks < 1 {
        return Err(invalid("chunks", "must be at least 1"));
    }
    if opts.workers < 1 {
        return Err(invalid("workers", "must be at least 1"));
    }
    if !is_frame_ordered(detections) {
        return Err(invalid("detections", "must be ordered by frame"));
    }
    let needed = detections.last().map_or(0, |d| d.frame + 1);
    let total_frames = match opts.total_frames {
        Some(n) if n < needed => {
            return Err(invalid(
                "total_frames",
                format!("{n} is shorter than the detection stream ({needed} frames)"),
            ))
        }
        Some(n) => n,
        None => needed,
    };

    let t = Instant::now();
    let ranges = if total_frames == 0 {
        Vec::new()
    } else {
        partition(total_frames, opts.chunks)?
    };
    let partition_ms = millis(t);

    let t = Instant::now();
    let results = map_chunks(detections, scene, &ranges, opts.workers, opts.dedup)?;
    let map_ms = millis(t);

    let t = Instant::now();
    let (total, per_chunk) = reduce(&results)?;
    if per_chunk.last().is_some_and(|c| c.range[1] != total_frames) {
        return Err(invalid("chunks", "ranges do not cover the video"));
    }
    let reduce_ms = millis(t);

    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    Ok(CountReport {
        run_id: run_id(scene, detections, opts, total_frames, &timestamp),
        scene: opts.scene_label.clone(),
        scene_digest: scene_digest(scene),
        chunks: opts.chunks,
        total_frames,
        total,
        per_chunk,
        dedup: opts.dedup,
        oracle,
        seed: opts.seed,
        timestamp,
        wall_time_ms: WallTimes {
            partition: partition_ms,
            map: map_ms,
            reduce: reduce_ms,
        },
    })
}

/// Chunked counting; `detections` must be frame-ordered.
pub fn run_pipeline(
    detections: &[Detection],
    scene: &SceneConfig,
    opts: &PipelineOptions,
) -> Result<CountReport, OrchestratorError> {
    pipeline(detections, scene, opts, false)
}

/// The single-pass reference: one chunk, deduplication on.
pub fn run_single(
    detections: &[Detection],
    scene: &SceneConfig,
    opts: &PipelineOptions,
) -> Result<CountReport, OrchestratorError> {
    let opts = PipelineOptions {
        chunks: 1,
        workers: 1,
        dedup: true,
        ..opts.clone()
    };
    pipeline(detections, scene, &opts, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkDiffRow {
    pub index: usize,
    pub a: Option<ChunkSummary>,
    pub b: Option<ChunkSummary>,
}

impl ChunkDiffRow {
    pub fn differs(&self) -> bool {
        self.a != self.b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportDiff {
    pub total_a: u64,
    pub total_b: u64,
    pub rows: Vec<ChunkDiffRow>,
}

impl ReportDiff {
    /// `total_b - total_a`.
    pub fn delta(&self) -> i64 {
        self.total_b as i64 - self.total_a as i64
    }

    pub fn totals_equal(&self) -> bool {
        self.total_a == self.total_b
    }

    /// No difference in totals or in any chunk.
    pub fn is_empty(&self) -> bool {
        self.totals_equal() && !self.rows.iter().any(ChunkDiffRow::differs)
    }
}

impl fmt::Display for ReportDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |c: &Option<ChunkSummary>| match c {
            Some(c) => format!(
                "[{}, {}) {}/{}",
                c.range[0], c.range[1], c.counted, c.filtered
            ),
            None => "-".to_string(),
        };
        writeln!(
            f,
            "total: a={} b={} delta={:+}{}",
            self.total_a,
            self.total_b,
            self.delta(),
            if self.totals_equal() {
                ""
            } else {
                "  MISMATCH"
            }
        )?;
        writeln!(
            f,
            "{:>5}  {:<28}{:<28}",
            "chunk", "a counted/filtered", "b counted/filtered"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>5}  {:<28}{:<28}{}",
                r.index,
                cell(&r.a),
                cell(&r.b),
                if r.differs() { "*" } else { "" }
            )?;
        }
        Ok(())
    }
}

pub fn compare(a: &CountReport, b: &CountReport) -> Result<ReportDiff, OrchestratorError> {
    if a.scene_digest != b.scene_digest {
        return Err(OrchestratorError::SceneMismatch {
            a: format!("{} ({})", a.scene, a.scene_digest),
            b: format!("{} ({})", b.scene, b.scene_digest),
        });
    }
    let n = a.per_chunk.len().max(b.per_chunk.len());
    Ok(ReportDiff {
        total_a: a.total,
        total_b: b.total,
        rows: (0..n)
            .map(|index| ChunkDiffRow {
                index,
                a: a.per_chunk.get(index).copied(),
                b: b.per_chunk.get(index).copied(),
            })
            .collect(),
    })
}
