//! Per-chunk multi-object tracker: constant-velocity Kalman prediction,
//! Hungarian association and a simple hit/miss lifecycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_assignment, AssignmentError, CostMatrix};
use crate::config_io::SceneConfig;
use crate::geometry::{point_in_polygon, Point2};
use crate::kalman::{self, KalmanError, KalmanParams, KalmanState};

/// One detector output at a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    /// Simulator ground truth. Never consulted by tracking or counting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_id: Option<u64>,
}

impl Detection {
    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    /// Name of the first field violating the record invariants.
    pub fn invalid_field(&self) -> Option<&'static str> {
        if !self.cx.is_finite() {
            Some("cx")
        } else if !self.cy.is_finite() {
            Some("cy")
        } else if !(self.w.is_finite() && self.w >= 0.0) {
            Some("w")
        } else if !(self.h.is_finite() && self.h >= 0.0) {
            Some("h")
        } else if !(0.0..=1.0).contains(&self.score) {
            Some("score")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

/// Association cost between a predicted track and a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMetric {
    /// Pixel distance; the gate is in pixels.
    #[default]
    Euclidean,
    /// Squared Mahalanobis distance under the innovation covariance; the gate
    /// is in squared standard deviations.
    Mahalanobis,
}

impl AssociationMetric {
    fn is_default(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerParams {
    #[serde(default = "defaults::max_age")]
    pub max_age: u32,
    /// Values above 1 delay confirmation and can drop vehicles that straddle
    /// a chunk boundary, which breaks chunked/single-pass agreement.
    #[serde(default = "defaults::min_hits")]
    pub min_hits: u32,
    #[serde(default = "defaults::gate")]
    pub gate: f64,
    #[serde(default)]
    pub kalman: KalmanParams,
    #[serde(default, skip_serializing_if = "AssociationMetric::is_default")]
    pub metric: AssociationMetric,
}

mod defaults {
    pub fn max_age() -> u32 {
        5
    }
    pub fn min_hits() -> u32 {
        1
    }
    pub fn gate() -> f64 {
        50.0
    }
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            max_age: defaults::max_age(),
            min_hits: defaults::min_hits(),
            gate: defaults::gate(),
            kalman: KalmanParams::default(),
            metric: AssociationMetric::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Chunk-local, starting at 1.
    pub id: u32,
    pub state: KalmanState,
    /// Post-update position estimates. Coasting frames are not recorded.
    pub history: Vec<(u64, Point2)>,
    /// Ground-truth tags of the detections this track consumed, aligned with
    /// `history`. Diagnostic only.
    pub truth_ids: Vec<Option<u64>>,
    pub hits: u32,
    pub misses_in_a_row: u32,
    pub status: TrackStatus,
    pub first_frame: u64,
    /// Box extent of the latest matched detection; not filtered.
    pub extent: (f64, f64),
    confirmed_once: bool,
}

impl Track {
    pub fn last_position(&self) -> Point2 {
        self.history.last().map(|&(_, p)| p).unwrap_or_default()
    }

    /// Whether the track ever reached `min_hits`.
    pub fn was_confirmed(&self) -> bool {
        self.confirmed_once
    }

    /// A confirmed track with the given observed history.
    #[cfg(test)]
    pub(crate) fn from_history(id: u32, history: Vec<(u64, Point2)>, kp: &KalmanParams) -> Self {
        let (first_frame, p) = history[0];
        Self {
            id,
            state: kalman::init_state(p, kp),
            truth_ids: vec![None; history.len()],
            hits: history.len() as u32,
            history,
            misses_in_a_row: 0,
            status: TrackStatus::Confirmed,
            first_frame,
            extent: (40.0, 40.0),
            confirmed_once: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("frame {frame} stepped after frame {previous}; frames must strictly increase")]
    NonMonotoneFrame { frame: u64, previous: u64 },
    #[error("detection for frame {detection_frame} passed to step for frame {frame}")]
    WrongFrame { frame: u64, detection_frame: u64 },
    #[error("detection at frame {frame} has invalid {field}")]
    InvalidDetection { frame: u64, field: &'static str },
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// Tracker state for one chunk. Single owner, stepped strictly in frame order.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u32,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(
        &mut self,
        frame: u64,
        detections: &[Detection],
        scene: &SceneConfig,
    ) -> Result<(), TrackerError> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(TrackerError::NonMonotoneFrame { frame, previous });
            }
        }
        for d in detections {
            if d.frame != frame {
                return Err(TrackerError::WrongFrame {
                    frame,
                    detection_frame: d.frame,
                });
            }
            if let Some(field) = d.invalid_field() {
                return Err(TrackerError::InvalidDetection { frame, field });
            }
        }
        self.last_frame = Some(frame);

        let inside: Vec<&Detection> = detections
            .iter()
            .filter(|d| point_in_polygon(d.center(), &scene.region))
            .collect();

        let kp = self.params.kalman;
        let live: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].status != TrackStatus::Dead)
            .collect();
        for &i in &live {
            let t = &mut self.tracks[i];
            t.state = kalman::predict(&t.state, &kp);
        }

        let matrix = self.cost_matrix(&live, &inside)?;
        let assignment = solve_assignment(&matrix);

        for &(row, col) in &assignment.pairs {
            let d = inside[col];
            let min_hits = self.params.min_hits;
            let t = &mut self.tracks[live[row]];
            let (posterior, _) = kalman::update(&t.state, d.center(), &kp)?;
            t.state = posterior;
            t.history.push((frame, t.state.position()));
            t.truth_ids.push(d.truth_id);
            t.extent = (d.w, d.h);
            t.hits += 1;
            t.misses_in_a_row = 0;
            if t.hits >= min_hits {
                t.status = TrackStatus::Confirmed;
                t.confirmed_once = true;
            }
        }
        for &row in &assignment.unmatched_rows {
            let t = &mut self.tracks[live[row]];
            t.misses_in_a_row += 1;
            if t.misses_in_a_row >= self.params.max_age {
                t.status = TrackStatus::Dead;
            }
        }
        for &col in &assignment.unmatched_cols {
            self.spawn(frame, inside[col], &kp);
        }
        Ok(())
    }

    fn cost_matrix(
        &self,
        live: &[usize],
        inside: &[&Detection],
    ) -> Result<CostMatrix, TrackerError> {
        if live.is_empty() || inside.is_empty() {
            return Ok(CostMatrix::empty(live.len(), inside.len()));
        }
        let kp = &self.params.kalman;
        let mut cost = Vec::with_capacity(live.len() * inside.len());
        for &i in live {
            let state = &self.tracks[i].state;
            for d in inside {
                let c = match self.params.metric {
                    AssociationMetric::Euclidean => state.position().distance(d.center()),
                    AssociationMetric::Mahalanobis => state.mahalanobis_sq(d.center(), kp)?,
                };
                cost.push(c);
            }
        }
        Ok(CostMatrix::new(
            live.len(),
            inside.len(),
            cost,
            self.params.gate,
        )?)
    }

    fn spawn(&mut self, frame: u64, d: &Detection, kp: &KalmanParams) {
        let state = kalman::init_state(d.center(), kp);
        let confirmed = self.params.min_hits <= 1;
        self.tracks.push(Track {
            id: self.next_id,
            history: vec![(frame, state.position())],
            truth_ids: vec![d.truth_id],
            state,
            hits: 1,
            misses_in_a_row: 0,
            status: if confirmed {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            },
            first_frame: frame,
            extent: (d.w, d.h),
            confirmed_once: confirmed,
        });
        self.next_id += 1;
    }

    /// Every track that reached `min_hits`, dead ones included, in id order.
    pub fn finalize(self) -> Vec<Track> {
        self.tracks
            .into_iter()
            .filter(Track::was_confirmed)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::street;

    fn det(frame: u64, x: f64, y: f64, truth: u64) -> Detection {
        Detection {
            frame,
            cx: x,
            cy: y,
            w: 10.0,
            h: 10.0,
            score: 1.0,
            truth_id: Some(truth),
        }
    }

    #[test]
    fn empty_frames_create_nothing() {
        let scene = street::scene();
        let mut tr = Tracker::new(scene.tracker);
        for f in 0..30 {
            tr.step(f, &[], &scene).unwrap();
        }
        assert!(tr.tracks().is_empty());
        assert!(tr.finalize().is_empty());
        assert!(Tracker::new(TrackerParams::default()).finalize().is_empty());
    }

    #[test]
    fn single_vehicle_single_track() {
        let scene = street::scene();
        let mut tr = Tracker::new(scene.tracker);
        for f in 0..20 {
            tr.step(f, &[det(f, 300.0, 100.0 + 7.0 * f as f64, 0)], &scene)
                .unwrap();
        }
        let tracks = tr.finalize();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].status, TrackStatus::Confirmed);
        assert_eq!(tracks[0].history.len(), 20);
        assert_eq!(tracks[0].id, 1);
    }

    #[test]
    fn parallel_lanes_do_not_switch() {
        let scene = street::scene();
        let mut tr = Tracker::new(scene.tracker);
        for f in 0..30 {
            let t = f as f64;
            let dets = [
                det(f, 300.0, 50.0 + 9.0 * t, 1),
                det(f, 500.0, 60.0 + 8.5 * t, 2),
            ];
            tr.step(f, &dets, &scene).unwrap();
        }
        let tracks = tr.finalize();
        assert_eq!(tracks.len(), 2);
        for t in &tracks {
            assert_eq!(t.history.len(), 30);
            let first = t.truth_ids[0];
            assert!(t.truth_ids.iter().all(|id| *id == first));
        }
    }

    #[test]
    fn death_keeps_history() {
        let scene = street::scene();
        let params = TrackerParams {
            max_age: 3,
            ..scene.tracker
        };
        let mut tr = Tracker::new(params);
        for f in 0..30 {
            let dets: Vec<Detection> = if f < 10 {
                vec![det(f, 300.0, 100.0 + 5.0 * f as f64, 0)]
            } else {
                Vec::new()
            };
            tr.step(f, &dets, &scene).unwrap();
        }
        let tracks = tr.finalize();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].status, TrackStatus::Dead);
        let frames: Vec<u64> = tracks[0].history.iter().map(|(f, _)| *f).collect();
        assert_eq!(frames, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn detections_outside_region_ignored() {
        let scene = street::scene();
        let mut tr = Tracker::new(scene.tracker);
        tr.step(0, &[det(0, -500.0, 100.0, 0)], &scene).unwrap();
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn sequencing_errors() {
        let scene = street::scene();
        let mut tr = Tracker::new(scene.tracker);
        tr.step(4, &[], &scene).unwrap();
        assert_eq!(
            tr.step(4, &[], &scene),
            Err(TrackerError::NonMonotoneFrame {
                frame: 4,
                previous: 4
            })
        );
        assert_eq!(
            tr.step(5, &[det(6, 1.0, 1.0, 0)], &scene),
            Err(TrackerError::WrongFrame {
                frame: 5,
                detection_frame: 6
            })
        );
    }

    #[test]
    fn min_hits_delays_confirmation() {
        let scene = street::scene();
        let params = TrackerParams {
            min_hits: 3,
            ..scene.tracker
        };
        let mut tr = Tracker::new(params);
        tr.step(0, &[det(0, 300.0, 100.0, 0)], &scene).unwrap();
        assert_eq!(tr.tracks()[0].status, TrackStatus::Tentative);
        tr.step(1, &[det(1, 300.0, 105.0, 0)], &scene).unwrap();
        tr.step(2, &[det(2, 300.0, 110.0, 0)], &scene).unwrap();
        assert_eq!(tr.tracks()[0].status, TrackStatus::Confirmed);
        // A one-frame blip never confirms and is not reported.
        tr.step(
            3,
            &[det(3, 300.0, 115.0, 0), det(3, 900.0, 600.0, 9)],
            &scene,
        )
        .unwrap();
        let tracks = tr.finalize();
        assert_eq!(tracks.len(), 1);
    }

    #[test]
    fn mahalanobis_metric_tracks_too() {
        let mut scene = street::scene();
        scene.tracker.metric = AssociationMetric::Mahalanobis;
        scene.tracker.gate = 25.0;
        let mut tr = Tracker::new(scene.tracker);
        for f in 0..15 {
            tr.step(f, &[det(f, 700.0, 100.0 + 6.0 * f as f64, 3)], &scene)
                .unwrap();
        }
        assert_eq!(tr.finalize().len(), 1);
    }
}
