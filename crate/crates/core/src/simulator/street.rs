//! A reference street and random traffic on it.
//!
//! The street is a 1200 x 800 px region crossed by a horizontal counting
//! line at `y = 400`; legal traffic moves toward `+y`. Six lanes run along
//! `x = 100, 300, ..., 1100`, four gate widths apart with the default gate.
//! Vehicles in a lane share one speed and enter at least four gate widths
//! apart, so no two vehicles ever come within association range of each
//! other. Vehicles enter from outside the region upstream of the line (or are
//! already on the road, upstream of the line, at frame 0) and leave the
//! region on the far side.

use crate::chunking::partition;
use crate::config_io::SceneConfig;
use crate::geometry::{Point2, Polygon, Segment};
use crate::tracker::TrackerParams;

use super::{ScenarioSpec, SimRng, VehicleSpec};

pub const WIDTH: f64 = 1200.0;
pub const HEIGHT: f64 = 800.0;
pub const LINE_Y: f64 = 400.0;
pub const LANE_X: [f64; 6] = [100.0, 300.0, 500.0, 700.0, 900.0, 1100.0];
/// Entry/exit margin outside the region.
const MARGIN: f64 = 30.0;

pub fn scene() -> SceneConfig {
    SceneConfig::new(
        Segment::new(Point2::new(0.0, LINE_Y), Point2::new(WIDTH, LINE_Y)).expect("line"),
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(WIDTH, 0.0),
            Point2::new(WIDTH, HEIGHT),
            Point2::new(0.0, HEIGHT),
        ])
        .expect("region"),
        Point2::new(0.0, 1.0),
        5,
        TrackerParams::default(),
    )
    .expect("reference scene is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficOptions {
    pub vehicles: (usize, usize),
    pub frames: (u64, u64),
    pub min_speed: f64,
    pub max_speed: f64,
    /// Odd lanes carry traffic against the street direction.
    pub oncoming: bool,
    /// Allow vehicles already on the road at frame 0.
    pub preexisting: bool,
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    pub clutter_rate: f64,
}

impl Default for TrafficOptions {
    fn default() -> Self {
        let gate = TrackerParams::default().gate;
        Self {
            vehicles: (5, 50),
            frames: (300, 2000),
            min_speed: 3.0,
            max_speed: gate / 2.0,
            oncoming: true,
            preexisting: true,
            noise_sigma: 0.0,
            dropout_prob: 0.0,
            clutter_rate: 0.0,
        }
    }
}

struct Lane {
    x: f64,
    speed: f64,
    /// +1 along the street direction, -1 against it.
    heading: f64,
    next_free: u64,
    gap: u64,
    used: bool,
}

impl Lane {
    fn vehicle(&self, spawn_frame: u64, y: f64) -> VehicleSpec {
        let exit_y = if self.heading > 0.0 {
            HEIGHT + MARGIN
        } else {
            -MARGIN
        };
        let travel = (exit_y - y).abs();
        VehicleSpec {
            spawn_frame,
            start: Point2::new(self.x, y),
            velocity: Point2::new(0.0, self.heading * self.speed),
            lifetime: (travel / self.speed).ceil() as u64 + 1,
        }
    }

    fn entry_y(&self) -> f64 {
        if self.heading > 0.0 {
            -MARGIN
        } else {
            HEIGHT + MARGIN
        }
    }
}

fn lanes(rng: &mut SimRng, opts: &TrafficOptions, reserved: &[usize]) -> Vec<Lane> {
    let spacing = 4.0 * TrackerParams::default().gate;
    LANE_X
        .iter()
        .enumerate()
        .filter(|(i, _)| !reserved.contains(i))
        .map(|(i, &x)| {
            let speed = rng.range(opts.min_speed, opts.max_speed);
            Lane {
                x,
                speed,
                heading: if opts.oncoming && i % 2 == 1 {
                    -1.0
                } else {
                    1.0
                },
                next_free: 0,
                gap: (spacing / speed).ceil() as u64 + 1,
                used: false,
            }
        })
        .collect()
}

fn fill(
    rng: &mut SimRng,
    opts: &TrafficOptions,
    lanes: &mut [Lane],
    count: usize,
    total_frames: u64,
) -> Vec<VehicleSpec> {
    let mut vehicles = Vec::with_capacity(count);
    // Average spacing that spreads `count` vehicles over the video.
    let spread = (total_frames as f64 * lanes.len() as f64 / count as f64).max(1.0);
    while vehicles.len() < count {
        let open: Vec<usize> = (0..lanes.len())
            .filter(|&i| lanes[i].next_free + 1 < total_frames)
            .collect();
        if open.is_empty() {
            break;
        }
        let pick = rng.int_inclusive(0, open.len() as u64 - 1) as usize;
        let lane = &mut lanes[open[pick]];
        if !lane.used && opts.preexisting && rng.uniform() < 0.5 {
            // Already on the road, upstream of the line.
            let y = if lane.heading > 0.0 {
                rng.range(-MARGIN, LINE_Y - 20.0)
            } else {
                rng.range(LINE_Y + 20.0, HEIGHT + MARGIN)
            };
            vehicles.push(lane.vehicle(0, y));
            lane.next_free = lane.gap;
            lane.used = true;
            continue;
        }
        let jitter = (rng.uniform() * spread) as u64;
        let spawn = lane.next_free + jitter;
        if spawn + 1 >= total_frames {
            lane.next_free = total_frames;
            continue;
        }
        vehicles.push(lane.vehicle(spawn, lane.entry_y()));
        lane.next_free = spawn + lane.gap;
        lane.used = true;
    }
    vehicles
}

/// Random well-separated traffic on the reference street.
pub fn random_traffic(seed: u64, opts: &TrafficOptions) -> ScenarioSpec {
    let mut rng = SimRng::new(seed ^ 0x5eed_7a1f_f1c0_0001);
    let total_frames = rng.int_inclusive(opts.frames.0, opts.frames.1);
    let count = rng.int_inclusive(opts.vehicles.0 as u64, opts.vehicles.1 as u64) as usize;
    let mut lanes = lanes(&mut rng, opts, &[]);
    let vehicles = fill(&mut rng, opts, &mut lanes, count, total_frames);
    ScenarioSpec {
        total_frames,
        vehicles,
        noise_sigma: opts.noise_sigma,
        dropout_prob: opts.dropout_prob,
        clutter_rate: opts.clutter_rate,
        seed,
    }
}

/// Where the constructed boundary vehicles were placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Straddle {
    /// First frame of the chunk after the boundary.
    pub boundary: u64,
    /// Index of the vehicle crossing between the two chunks' frames.
    pub gap_vehicle: usize,
    /// Index of the vehicle crossing just before the boundary and still
    /// visible past the line afterwards.
    pub late_vehicle: usize,
}

/// Random traffic plus two vehicles crossing at a boundary of the
/// `chunks`-way partition: one between the last frame of a chunk and the
/// first frame of the next, and one three frames before the boundary.
pub fn straddle_traffic(seed: u64, chunks: u64, opts: &TrafficOptions) -> (ScenarioSpec, Straddle) {
    assert!(chunks >= 2, "a boundary needs at least two chunks");
    let mut rng = SimRng::new(seed ^ 0x57ad_d1e0_0000_0002);
    // Chunks stay longer than the straddlers' approach to the line.
    let min_frames = opts.frames.0.max(chunks * 40);
    let total_frames = rng.int_inclusive(min_frames, opts.frames.1.max(min_frames));
    let ranges = partition(total_frames, chunks as usize).expect("valid partition");
    let cut = rng.int_inclusive(1, chunks - 1) as usize;
    let boundary = ranges[cut].start_frame;

    let reserved = [2usize, 4];
    let count = rng.int_inclusive(opts.vehicles.0 as u64, opts.vehicles.1 as u64) as usize;
    let mut lanes = lanes(&mut rng, opts, &reserved);
    let mut vehicles = fill(
        &mut rng,
        opts,
        &mut lanes,
        count.saturating_sub(2),
        total_frames,
    );

    let crossing_vehicle = |x: f64, cross_time: f64, rng: &mut SimRng| {
        let speed = rng.range(opts.min_speed, opts.max_speed);
        let lane = Lane {
            x,
            speed,
            heading: 1.0,
            next_free: 0,
            gap: 0,
            used: false,
        };
        let approach = (LINE_Y + MARGIN) / speed;
        let spawn = (cross_time - approach).floor().max(0.0);
        let y = LINE_Y + speed * (spawn - cross_time);
        lane.vehicle(spawn as u64, y)
    };
    let b = boundary as f64;
    let gap_time = b - 1.0 + rng.range(0.1, 0.9);
    let late_time = b - 3.0 + rng.range(0.1, 0.9);
    vehicles.push(crossing_vehicle(LANE_X[reserved[0]], gap_time, &mut rng));
    vehicles.push(crossing_vehicle(LANE_X[reserved[1]], late_time, &mut rng));
    let n = vehicles.len();
    (
        ScenarioSpec {
            total_frames,
            vehicles,
            noise_sigma: opts.noise_sigma,
            dropout_prob: opts.dropout_prob,
            clutter_rate: opts.clutter_rate,
            seed,
        },
        Straddle {
            boundary,
            gap_vehicle: n - 2,
            late_vehicle: n - 1,
        },
    )
}
