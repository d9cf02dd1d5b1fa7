//! Synthetic traffic: constant-velocity vehicles rendered into detection
//! streams, with the exact number of line crossings as ground truth.

mod rng;
pub mod street;

use serde::{Deserialize, Serialize};

pub use rng::SimRng;

use crate::config_io::{from_json, ConfigError, SceneConfig};
use crate::geometry::{Point2, EPS_GEOM};
use crate::tracker::Detection;

/// Box extent reported for vehicle detections.
pub const VEHICLE_EXTENT: (f64, f64) = (40.0, 40.0);
pub const VEHICLE_SCORE: f64 = 0.9;
pub const CLUTTER_EXTENT: (f64, f64) = (20.0, 20.0);
pub const CLUTTER_SCORE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub spawn_frame: u64,
    /// Position at `spawn_frame`.
    pub start: Point2,
    /// Pixels per frame.
    pub velocity: Point2,
    /// Number of frames the vehicle exists, starting at `spawn_frame`.
    pub lifetime: u64,
}

impl VehicleSpec {
    pub fn position_at(&self, frame: u64) -> Point2 {
        self.start + self.velocity * (frame as f64 - self.spawn_frame as f64)
    }

    pub fn alive_at(&self, frame: u64) -> bool {
        frame >= self.spawn_frame && frame - self.spawn_frame < self.lifetime
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub total_frames: u64,
    pub vehicles: Vec<VehicleSpec>,
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    /// Expected false positives per frame.
    pub clutter_rate: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_frames < 1 {
            return Err(ConfigError::invalid("total_frames", "must be at least 1"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(ConfigError::invalid("noise_sigma", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(ConfigError::invalid("dropout_prob", "must lie in [0, 1)"));
        }
        if !(self.clutter_rate.is_finite() && self.clutter_rate >= 0.0) {
            return Err(ConfigError::invalid("clutter_rate", "must be >= 0"));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.lifetime < 1 {
                return Err(ConfigError::invalid(
                    format!("vehicles[{i}].lifetime"),
                    "must be at least 1",
                ));
            }
            if !v.velocity.is_finite() || !v.start.is_finite() {
                return Err(ConfigError::invalid(
                    format!("vehicles[{i}].velocity"),
                    "must be finite",
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let spec: Self = from_json(text, origin)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scenario serializes");
        out.push('\n');
        out
    }
}

/// A crossing counted by the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthCrossing {
    /// Index into `ScenarioSpec::vehicles`.
    pub vehicle: usize,
    /// First frame on the far side of the line.
    pub frame: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub count: u64,
    pub crossings: Vec<TruthCrossing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStream {
    /// Frame-ordered; vehicle detections carry `truth_id` = vehicle index.
    pub detections: Vec<Detection>,
    pub truth: GroundTruth,
}

/// Renders the scenario frame by frame.
///
/// Draw order per frame: for each vehicle alive at the frame, in scenario order,
/// one uniform for dropout then one normal pair for position noise (both
/// always drawn); then one Poisson clutter count, then two uniforms
/// (x, y over the region's bounding box) per clutter detection.
pub fn generate(spec: &ScenarioSpec, scene: &SceneConfig) -> SimulatedStream {
    let mut rng = SimRng::new(spec.seed);
    let (lo, hi) = scene.region.bounding_box();
    let mut detections = Vec::new();
    for frame in 0..spec.total_frames {
        for (id, v) in spec.vehicles.iter().enumerate() {
            if !v.alive_at(frame) {
                continue;
            }
            let dropped = rng.uniform() < spec.dropout_prob;
            let (nx, ny) = rng.normal_pair();
            if dropped {
                continue;
            }
            let p = v.position_at(frame);
            detections.push(Detection {
                frame,
                cx: p.x + spec.noise_sigma * nx,
                cy: p.y + spec.noise_sigma * ny,
                w: VEHICLE_EXTENT.0,
                h: VEHICLE_EXTENT.1,
                score: VEHICLE_SCORE,
                truth_id: Some(id as u64),
            });
        }
        for _ in 0..rng.poisson(spec.clutter_rate) {
            let x = rng.range(lo.x, hi.x);
            let y = rng.range(lo.y, hi.y);
            detections.push(Detection {
                frame,
                cx: x,
                cy: y,
                w: CLUTTER_EXTENT.0,
                h: CLUTTER_EXTENT.1,
                score: CLUTTER_SCORE,
                truth_id: None,
            });
        }
    }
    SimulatedStream {
        detections,
        truth: ground_truth(spec, scene),
    }
}

/// Solves for the moment each noiseless trajectory meets the counting line.
///
/// A vehicle counts when it moves along the street direction, the meeting
/// point lies on the finite counting segment, and the meeting time falls
/// strictly between the vehicle's first and last observable frames (so there
/// are positions on both sides of the line).
pub fn ground_truth(spec: &ScenarioSpec, scene: &SceneConfig) -> GroundTruth {
    let line = &scene.counting_line;
    let d = line.vector();
    let len = line.length();
    let mut truth = GroundTruth::default();
    for (idx, v) in spec.vehicles.iter().enumerate() {
        let first = v.spawn_frame as f64;
        let end = (v.spawn_frame.saturating_add(v.lifetime)).min(spec.total_frames);
        if end <= v.spawn_frame + 1 {
            continue;
        }
        let last = (end - 1) as f64;
        if v.velocity.dot(scene.street_direction) <= 0.0 {
            continue;
        }
        let rate = d.cross(v.velocity) / len;
        if rate == 0.0 {
            continue;
        }
        let offset = line.signed_distance(v.start);
        let t_cross = first - offset / rate;
        if !(t_cross > first && t_cross < last) {
            continue;
        }
        let meet = v.start + v.velocity * (t_cross - first);
        let u = (meet - line.a).dot(d) / (len * len);
        let slack = EPS_GEOM / len;
        if !(-slack..=1.0 + slack).contains(&u) {
            continue;
        }
        truth.count += 1;
        truth.crossings.push(TruthCrossing {
            vehicle: idx,
            frame: t_cross.floor() as u64 + 1,
        });
    }
    truth
}

pub fn ground_truth_count(spec: &ScenarioSpec, scene: &SceneConfig) -> u64 {
    ground_truth(spec, scene).count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Segment;

    fn one_vehicle(velocity: Point2, frames: u64) -> ScenarioSpec {
        ScenarioSpec {
            total_frames: frames,
            vehicles: vec![VehicleSpec {
                spawn_frame: 0,
                start: Point2::new(300.0, 350.0),
                velocity,
                lifetime: frames,
            }],
            noise_sigma: 0.0,
            dropout_prob: 0.0,
            clutter_rate: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn noiseless_vehicle_emits_exact_trajectory() {
        let scene = street::scene();
        let spec = one_vehicle(Point2::new(0.5, 10.0), 10);
        let out = generate(&spec, &scene);
        assert_eq!(out.detections.len(), 10);
        for (f, d) in out.detections.iter().enumerate() {
            assert_eq!(d.frame, f as u64);
            assert_eq!(d.center(), spec.vehicles[0].position_at(f as u64));
            assert_eq!(d.truth_id, Some(0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let scene = street::scene();
        let mut spec = one_vehicle(Point2::new(0.0, 10.0), 200);
        spec.noise_sigma = 3.0;
        spec.dropout_prob = 0.2;
        spec.clutter_rate = 1.5;
        let a = generate(&spec, &scene);
        let b = generate(&spec, &scene);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        crate::config_io::write_detections_to(&mut ba, &a.detections).unwrap();
        crate::config_io::write_detections_to(&mut bb, &b.detections).unwrap();
        assert_eq!(ba, bb);
        assert!(a.detections.windows(2).all(|w| w[0].frame <= w[1].frame));
    }

    #[test]
    fn dropout_fraction_concentrates() {
        // 10^4 vehicle-frames; sd of the fraction is ~0.0046, so +-0.02 is >4 sd.
        let scene = street::scene();
        let mut spec = one_vehicle(Point2::new(0.0, 0.0), 10_000);
        spec.dropout_prob = 0.3;
        let n = generate(&spec, &scene).detections.len();
        let dropped = 1.0 - n as f64 / 10_000.0;
        assert!((dropped - 0.3).abs() <= 0.02, "{dropped}");
    }

    #[test]
    fn direction_gates_ground_truth() {
        let scene = street::scene();
        assert_eq!(
            ground_truth_count(&one_vehicle(Point2::new(0.0, 10.0), 20), &scene),
            1
        );
        let mut back = one_vehicle(Point2::new(0.0, -10.0), 20);
        back.vehicles[0].start = Point2::new(300.0, 450.0);
        assert_eq!(ground_truth_count(&back, &scene), 0);
        // Passing beyond the end of the counting segment.
        let mut wide = one_vehicle(Point2::new(0.0, 10.0), 20);
        wide.vehicles[0].start = Point2::new(1250.0, 350.0);
        let mut scene2 = scene.clone();
        scene2.counting_line =
            Segment::new(Point2::new(0.0, 400.0), Point2::new(1200.0, 400.0)).unwrap();
        assert_eq!(ground_truth_count(&wide, &scene2), 0);
    }

    #[test]
    fn crossing_needs_frames_on_both_sides() {
        let scene = street::scene();
        // Dies before reaching the line.
        let mut spec = one_vehicle(Point2::new(0.0, 10.0), 20);
        spec.vehicles[0].lifetime = 5;
        assert_eq!(ground_truth_count(&spec, &scene), 0);
        // Video ends before the line.
        let spec = one_vehicle(Point2::new(0.0, 10.0), 5);
        assert_eq!(ground_truth_count(&spec, &scene), 0);
    }

    /// Independent oracle: walk every exact trajectory frame by frame and look
    /// for a strict side change whose step meets the counting segment.
    fn scan_count(spec: &ScenarioSpec, scene: &SceneConfig) -> u64 {
        let (a, b) = (scene.counting_line.a, scene.counting_line.b);
        let orient = |p: Point2, q: Point2, r: Point2| {
            let v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
            (v > 0.0) as i8 - (v < 0.0) as i8
        };
        let mut count = 0;
        for v in &spec.vehicles {
            let mut prev: Option<Point2> = None;
            for f in v.spawn_frame..spec.total_frames.min(v.spawn_frame + v.lifetime) {
                let p = v.position_at(f);
                if orient(a, b, p) == 0 {
                    continue;
                }
                if let Some(q) = prev {
                    let changed = orient(a, b, q) != orient(a, b, p);
                    let meets = orient(q, p, a) != orient(q, p, b);
                    if changed && meets && (p - q).dot(scene.street_direction) > 0.0 {
                        count += 1;
                        break;
                    }
                }
                prev = Some(p);
            }
        }
        count
    }

    #[test]
    fn ground_truth_matches_frame_scan() {
        let tilted = SceneConfig::new(
            Segment::new(Point2::new(100.0, 150.0), Point2::new(900.0, 650.0)).unwrap(),
            crate::geometry::Polygon::new(vec![
                Point2::new(0.0, 0.0),
                Point2::new(1000.0, 0.0),
                Point2::new(1000.0, 1000.0),
                Point2::new(0.0, 1000.0),
            ])
            .unwrap(),
            Point2::new(-0.6, 0.8),
            5,
            Default::default(),
        )
        .unwrap();
        let mut rng = SimRng::new(77);
        for seed in 0..50u64 {
            let spec = street::random_traffic(seed, &Default::default());
            let scene = street::scene();
            assert_eq!(ground_truth_count(&spec, &scene), scan_count(&spec, &scene));

            let spec = ScenarioSpec {
                total_frames: 300,
                vehicles: (0..20)
                    .map(|_| VehicleSpec {
                        spawn_frame: rng.int_inclusive(0, 200),
                        start: Point2::new(rng.range(0.0, 1000.0), rng.range(0.0, 1000.0)),
                        velocity: Point2::new(rng.range(-30.0, 30.0), rng.range(-30.0, 30.0)),
                        lifetime: rng.int_inclusive(1, 300),
                    })
                    .collect(),
                noise_sigma: 0.0,
                dropout_prob: 0.0,
                clutter_rate: 0.0,
                seed,
            };
            assert_eq!(
                ground_truth_count(&spec, &tilted),
                scan_count(&spec, &tilted),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn scenario_validation_names_fields() {
        let mut spec = one_vehicle(Point2::new(0.0, 1.0), 10);
        spec.dropout_prob = 1.0;
        assert!(
            matches!(spec.validate(), Err(ConfigError::Invalid { field, .. }) if field == "dropout_prob")
        );
        let mut spec = one_vehicle(Point2::new(0.0, 1.0), 10);
        spec.vehicles[0].lifetime = 0;
        assert!(
            matches!(spec.validate(), Err(ConfigError::Invalid { field, .. }) if field == "vehicles[0].lifetime")
        );
        let mut spec = one_vehicle(Point2::new(0.0, 1.0), 10);
        spec.total_frames = 0;
        assert!(spec.validate().is_err());
    }
}
