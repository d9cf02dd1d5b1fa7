//! Map side of the pipeline: split the frame range, track each chunk on its
//! own, and decide which finished tracks the chunk is responsible for.
//!
//! A chunk counts a vehicle when either
//!
//! * its track crosses the counting line along the street direction inside
//!   the chunk (first such crossing wins), or
//! * the track is only ever seen past the line, appears within
//!   `grace_frames` of the chunk start, moves along the street direction, and
//!   extrapolating it backwards puts its crossing no earlier than the last
//!   frame of the previous chunk. Such a crossing completes in the step
//!   between two chunks, which neither chunk observes directly.
//!
//! Every other track is filtered. A vehicle first seen past the line whose
//! back-extrapolated crossing lies earlier was already counted upstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_io::SceneConfig;
use crate::geometry::{crossing, side_of_line, Point2, EPS_GEOM};
use crate::tracker::{Detection, Track, Tracker, TrackerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChunkError {
    #[error("cannot split {total_frames} frames into {chunks} chunks")]
    InvalidPartition { total_frames: u64, chunks: usize },
    #[error("track {track_id} has an empty history")]
    EmptyHistory { track_id: u32 },
    #[error("detection at frame {frame} lies outside chunk [{start}, {end})")]
    OutOfRange { frame: u64, start: u64, end: u64 },
    #[error("chunk {index}: {source}")]
    Tracker {
        index: usize,
        #[source]
        source: TrackerError,
    },
}

/// Half-open frame range `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkRange {
    pub index: usize,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl ChunkRange {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start_frame..self.end_frame).contains(&frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Counted,
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    CrossedInChunk,
    AfterLineAtStart,
    NeverCrossed,
    WrongDirection,
    OutsideGrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackVerdict {
    pub track_id: u32,
    pub decision: Decision,
    pub reason: Reason,
    /// Frame the crossing is attributed to; always set when counted.
    pub crossing_frame: Option<u64>,
}

impl TrackVerdict {
    fn counted(track_id: u32, reason: Reason, frame: u64) -> Self {
        Self {
            track_id,
            decision: Decision::Counted,
            reason,
            crossing_frame: Some(frame),
        }
    }

    fn filtered(track_id: u32, reason: Reason) -> Self {
        Self {
            track_id,
            decision: Decision::Filtered,
            reason,
            crossing_frame: None,
        }
    }

    pub fn is_counted(&self) -> bool {
        self.decision == Decision::Counted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkResult {
    pub range: ChunkRange,
    pub verdicts: Vec<TrackVerdict>,
    pub counted: u64,
    pub filtered: u64,
}

impl ChunkResult {
    fn from_verdicts(range: ChunkRange, verdicts: Vec<TrackVerdict>) -> Self {
        let counted = verdicts.iter().filter(|v| v.is_counted()).count() as u64;
        let filtered = verdicts.len() as u64 - counted;
        Self {
            range,
            verdicts,
            counted,
            filtered,
        }
    }
}

/// `chunks` contiguous ranges covering `[0, total_frames)`; lengths differ by
/// at most one and the longer ranges come first.
pub fn partition(total_frames: u64, chunks: usize) -> Result<Vec<ChunkRange>, ChunkError> {
    if chunks < 1 || total_frames < 1 || chunks as u64 > total_frames {
        return Err(ChunkError::InvalidPartition {
            total_frames,
            chunks,
        });
    }
    let k = chunks as u64;
    let base = total_frames / k;
    let extra = total_frames % k;
    let mut start = 0;
    Ok((0..k)
        .map(|i| {
            let len = base + u64::from(i < extra);
            let range = ChunkRange {
                index: i as usize,
                start_frame: start,
                end_frame: start + len,
            };
            start += len;
            range
        })
        .collect())
}

/// In-direction crossings along the observed history, as `(frame, movement)`.
/// Positions on the line are skipped; a crossing completes on the first
/// position strictly past it.
fn crossings<'a>(
    history: &'a [(u64, Point2)],
    scene: &'a SceneConfig,
) -> impl Iterator<Item = (u64, bool)> + 'a {
    let line = &scene.counting_line;
    let mut last_sided: Option<Point2> = None;
    history.iter().filter_map(move |&(frame, p)| {
        if side_of_line(p, line) == 0 {
            return None;
        }
        let prev = last_sided.replace(p)?;
        crossing(prev, p, line).map(|_| (frame, (p - prev).dot(scene.street_direction) > 0.0))
    })
}

/// Least-squares velocity over the history, in pixels per frame.
fn fitted_velocity(history: &[(u64, Point2)]) -> Option<Point2> {
    if history.len() < 2 {
        return None;
    }
    let n = history.len() as f64;
    let t0 = history[0].0 as f64;
    let mean_t = history.iter().map(|(f, _)| *f as f64 - t0).sum::<f64>() / n;
    let mean_p = history
        .iter()
        .fold(Point2::default(), |acc, (_, p)| acc + *p)
        * (1.0 / n);
    let mut stt = 0.0;
    let mut stp = Point2::default();
    for (f, p) in history {
        let dt = *f as f64 - t0 - mean_t;
        stt += dt * dt;
        stp = stp + (*p - mean_p) * dt;
    }
    (stt > 0.0).then(|| stp * (1.0 / stt))
}

/// Decides whether this chunk is responsible for counting the track.
pub fn classify_track(
    track: &Track,
    scene: &SceneConfig,
    chunk: &ChunkRange,
) -> Result<TrackVerdict, ChunkError> {
    let id = track.id;
    if track.history.is_empty() {
        return Err(ChunkError::EmptyHistory { track_id: id });
    }

    let mut opposing = false;
    for (frame, along) in crossings(&track.history, scene) {
        if along {
            return Ok(TrackVerdict::counted(id, Reason::CrossedInChunk, frame));
        }
        opposing = true;
    }
    if opposing {
        return Ok(TrackVerdict::filtered(id, Reason::WrongDirection));
    }

    let line = &scene.counting_line;
    let after = scene.after_side();
    // Seen past the line and never before it; positions on the line are
    // neutral.
    let sides = || track.history.iter().map(|&(_, p)| side_of_line(p, line));
    if sides().any(|s| s == -after) || !sides().any(|s| s == after) {
        return Ok(TrackVerdict::filtered(id, Reason::NeverCrossed));
    }
    // The first chunk has no predecessor whose frames could have missed a
    // crossing.
    if chunk.start_frame == 0 {
        return Ok(TrackVerdict::filtered(id, Reason::NeverCrossed));
    }
    if track.first_frame - chunk.start_frame > scene.grace_frames {
        return Ok(TrackVerdict::filtered(id, Reason::OutsideGrace));
    }
    let Some(velocity) = fitted_velocity(&track.history) else {
        return Ok(TrackVerdict::filtered(id, Reason::NeverCrossed));
    };
    if velocity.dot(scene.street_direction) <= 0.0 {
        return Ok(TrackVerdict::filtered(id, Reason::WrongDirection));
    }

    // Distance past the line and approach speed, both measured along the
    // normal pointing to the after side.
    let first = track.history[0].1;
    let sign = f64::from(after);
    let depth = sign * line.signed_distance(first);
    let approach = sign * line.vector().cross(velocity) / line.length();
    if approach <= 0.0 {
        return Ok(TrackVerdict::filtered(id, Reason::NeverCrossed));
    }
    let frames_since = depth / approach;
    let crossed_at = track.first_frame as f64 - frames_since;
    // The crossing completes on frame floor(crossed_at) + 1, which must not
    // precede the chunk.
    if crossed_at < chunk.start_frame as f64 - 1.0 {
        return Ok(TrackVerdict::filtered(id, Reason::OutsideGrace));
    }
    let meet = first - velocity * frames_since;
    let d = line.vector();
    let u = (meet - line.a).dot(d) / d.dot(d);
    let slack = EPS_GEOM / line.length();
    if !(-slack..=1.0 + slack).contains(&u) {
        return Ok(TrackVerdict::filtered(id, Reason::NeverCrossed));
    }
    Ok(TrackVerdict::counted(
        id,
        Reason::AfterLineAtStart,
        track.first_frame,
    ))
}

/// Counting without boundary deduplication: any in-direction crossing or any
/// sighting past the line counts.
pub fn classify_naive(track: &Track, scene: &SceneConfig) -> Result<TrackVerdict, ChunkError> {
    let id = track.id;
    if track.history.is_empty() {
        return Err(ChunkError::EmptyHistory { track_id: id });
    }
    if let Some((frame, _)) = crossings(&track.history, scene).find(|&(_, along)| along) {
        return Ok(TrackVerdict::counted(id, Reason::CrossedInChunk, frame));
    }
    let line = &scene.counting_line;
    let after = scene.after_side();
    match track
        .history
        .iter()
        .find(|&&(_, p)| side_of_line(p, line) == after)
    {
        Some(&(frame, _)) => Ok(TrackVerdict::counted(id, Reason::AfterLineAtStart, frame)),
        None => Ok(TrackVerdict::filtered(id, Reason::NeverCrossed)),
    }
}

/// The map task: track one chunk from scratch and judge every track.
///
/// `detections` must be frame-ordered and inside the chunk.
pub fn process_chunk(
    detections: &[Detection],
    scene: &SceneConfig,
    chunk: &ChunkRange,
    dedup: bool,
) -> Result<ChunkResult, ChunkError> {
    if let Some(d) = detections.iter().find(|d| !chunk.contains(d.frame)) {
        return Err(ChunkError::OutOfRange {
            frame: d.frame,
            start: chunk.start_frame,
            end: chunk.end_frame,
        });
    }
    let tracker_err = |source| ChunkError::Tracker {
        index: chunk.index,
        source,
    };
    let mut tracker = Tracker::new(scene.tracker);
    let mut rest = detections;
    for frame in chunk.start_frame..chunk.end_frame {
        let n = rest.iter().take_while(|d| d.frame == frame).count();
        let (now, later) = rest.split_at(n);
        tracker.step(frame, now, scene).map_err(tracker_err)?;
        rest = later;
    }
    if let Some(d) = rest.first() {
        // Unsorted input leaves records behind.
        return Err(tracker_err(TrackerError::NonMonotoneFrame {
            frame: d.frame,
            previous: chunk.end_frame - 1,
        }));
    }
    let verdicts = tracker
        .finalize()
        .iter()
        .map(|t| {
            if dedup {
                classify_track(t, scene, chunk)
            } else {
                classify_naive(t, scene)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChunkResult::from_verdicts(*chunk, verdicts))
}
