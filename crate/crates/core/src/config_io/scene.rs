use serde::{Deserialize, Serialize};

use super::{from_json, ConfigError};
use crate::geometry::{point_in_polygon, Point2, Polygon, Segment};
use crate::tracker::TrackerParams;

/// How far from unit length a configured direction may be before it is
/// rejected rather than re-normalized.
const DIRECTION_NORM_SLACK: f64 = 1e-6;
/// Minimum |sin| between the street direction and the counting line.
const MIN_CROSSING_SINE: f64 = 1e-6;

/// Where and in which direction vehicles are counted.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub counting_line: Segment,
    /// Detections outside this polygon are ignored.
    pub region: Polygon,
    /// Unit vector of legal travel across the counting line.
    pub street_direction: Point2,
    /// How long after a chunk starts a vehicle first seen past the line may
    /// still be attributed to that chunk.
    pub grace_frames: u64,
    pub tracker: TrackerParams,
    after_side: i8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    a: [f64; 2],
    b: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    counting_line: RawLine,
    region: Vec<[f64; 2]>,
    street_direction: [f64; 2],
    #[serde(default = "default_grace")]
    grace_frames: u64,
    #[serde(default)]
    tracker: TrackerParams,
}

fn default_grace() -> u64 {
    5
}

#[derive(Serialize)]
struct CanonicalScene<'a> {
    counting_line: &'a Segment,
    region: &'a Polygon,
    street_direction: Point2,
    grace_frames: u64,
    tracker: &'a TrackerParams,
}

fn point(field: &str, [x, y]: [f64; 2]) -> Result<Point2, ConfigError> {
    Point2::try_new(x, y).map_err(|e| ConfigError::invalid(field, e.to_string()))
}

impl SceneConfig {
    /// Validates and normalizes a scene.
    pub fn new(
        counting_line: Segment,
        region: Polygon,
        street_direction: Point2,
        grace_frames: u64,
        tracker: TrackerParams,
    ) -> Result<Self, ConfigError> {
        let norm = street_direction.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > DIRECTION_NORM_SLACK {
            return Err(ConfigError::invalid(
                "street_direction",
                format!("must be a unit vector, got norm {norm}"),
            ));
        }
        let street_direction = street_direction * (1.0 / norm);

        if tracker.max_age < 1 {
            return Err(ConfigError::invalid(
                "tracker.max_age",
                "must be at least 1",
            ));
        }
        if tracker.min_hits < 1 {
            return Err(ConfigError::invalid(
                "tracker.min_hits",
                "must be at least 1",
            ));
        }
        if !(tracker.gate.is_finite() && tracker.gate > 0.0) {
            return Err(ConfigError::invalid("tracker.gate", "must be positive"));
        }
        if let Some(name) = tracker.kalman.invalid_field() {
            return Err(ConfigError::invalid(
                format!("tracker.kalman.{name}"),
                "must be a finite non-negative variance",
            ));
        }

        for (end, p) in [("a", counting_line.a), ("b", counting_line.b)] {
            if !point_in_polygon(p, &region) {
                return Err(ConfigError::invalid(
                    "counting_line",
                    format!("endpoint {end} {p} lies outside region"),
                ));
            }
        }

        let line_unit = counting_line.vector() * (1.0 / counting_line.length());
        let sine = line_unit.cross(street_direction);
        if sine.abs() < MIN_CROSSING_SINE {
            return Err(ConfigError::invalid(
                "street_direction",
                "is parallel to counting_line; the crossing side is ambiguous",
            ));
        }
        Ok(Self {
            counting_line,
            region,
            street_direction,
            grace_frames,
            tracker,
            after_side: if sine > 0.0 { 1 } else { -1 },
        })
    }

    /// The side of the counting line (as reported by
    /// [`side_of_line`](crate::geometry::side_of_line)) that legal traffic
    /// moves into.
    pub fn after_side(&self) -> i8 {
        self.after_side
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let raw: RawScene = from_json(text, origin)?;
        let a = point("counting_line", raw.counting_line.a)?;
        let b = point("counting_line", raw.counting_line.b)?;
        let counting_line =
            Segment::new(a, b).map_err(|e| ConfigError::invalid("counting_line", e.to_string()))?;
        let vertices = raw
            .region
            .into_iter()
            .map(|v| point("region", v))
            .collect::<Result<Vec<_>, _>>()?;
        let region =
            Polygon::new(vertices).map_err(|e| ConfigError::invalid("region", e.to_string()))?;
        let direction = point("street_direction", raw.street_direction)?;
        Self::new(
            counting_line,
            region,
            direction,
            raw.grace_frames,
            raw.tracker,
        )
    }

    /// Fixed key order, shortest round-trip float formatting.
    pub fn to_canonical_json(&self) -> String {
        let doc = CanonicalScene {
            counting_line: &self.counting_line,
            region: &self.region,
            street_direction: self.street_direction,
            grace_frames: self.grace_frames,
            tracker: &self.tracker,
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("scene serializes");
        out.push('\n');
        out
    }
}
