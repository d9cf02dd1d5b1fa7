//! Vehicle counting over a detection stream split into independently
//! processed chunks.
//!
//! Each chunk is tracked on its own (constant-velocity Kalman filter plus
//! Hungarian association), every finished track is judged against a directed
//! counting line, and a per-track boundary rule keeps vehicles near chunk
//! edges from being counted twice or not at all. The chunked total matches a
//! single pass over the whole stream.

pub mod assignment;
pub mod chunking;
pub mod cli;
pub mod config_io;
pub mod geometry;
pub mod kalman;
pub mod orchestrator;
pub mod simulator;
pub mod tracker;

pub use assignment::{solve_assignment, Assignment, CostMatrix};
pub use chunking::{partition, process_chunk, ChunkRange, ChunkResult, TrackVerdict};
pub use config_io::{ConfigError, SceneConfig};
pub use geometry::{Point2, Polygon, Segment};
pub use orchestrator::{run_pipeline, run_single, CountReport, PipelineOptions};
pub use simulator::{generate, ground_truth_count, ScenarioSpec};
pub use tracker::{Detection, Track, Tracker, TrackerParams};
