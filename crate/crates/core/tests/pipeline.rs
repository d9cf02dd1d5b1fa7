use chunkcount::chunking::{partition, process_chunk, ChunkResult};
use chunkcount::orchestrator::{map_chunks, reduce, run_pipeline, run_single, PipelineOptions};
use chunkcount::simulator::street::{self, random_traffic, TrafficOptions};
use chunkcount::simulator::{generate, ground_truth_count, SimRng};

#[test]
fn four_chunks_equal_single_pass() {
    let scene = street::scene();
    let opts = TrafficOptions {
        vehicles: (30, 30),
        frames: (1200, 1200),
        ..TrafficOptions::default()
    };
    let spec = random_traffic(2024, &opts);
    let dets = generate(&spec, &scene).detections;
    let frames = Some(spec.total_frames);
    let single = run_single(
        &dets,
        &scene,
        &PipelineOptions {
            total_frames: frames,
            ..PipelineOptions::new(1)
        },
    )
    .unwrap();
    let four = run_pipeline(
        &dets,
        &scene,
        &PipelineOptions {
            workers: 4,
            total_frames: frames,
            ..PipelineOptions::new(4)
        },
    )
    .unwrap();
    assert_eq!(single.total, ground_truth_count(&spec, &scene));
    assert_eq!(four.total, single.total);
    assert_eq!(four.per_chunk.len(), 4);
}

#[test]
fn reduce_matches_independent_recount() {
    let scene = street::scene();
    let mut rng = SimRng::new(50);
    for seed in 0..50u64 {
        let spec = random_traffic(seed, &TrafficOptions::default());
        let dets = generate(&spec, &scene).detections;
        let k = rng.int_inclusive(1, 12) as usize;
        let ranges = partition(spec.total_frames, k).unwrap();
        let mut results = map_chunks(&dets, &scene, &ranges, 3, true).unwrap();

        // Recount from raw verdicts, one chunk at a time, serially.
        let mut recount = 0;
        for r in &ranges {
            let part: Vec<_> = dets
                .iter()
                .filter(|d| r.contains(d.frame))
                .cloned()
                .collect();
            let res = process_chunk(&part, &scene, r, true).unwrap();
            recount += res.verdicts.iter().filter(|v| v.is_counted()).count() as u64;
        }

        // Shuffle before reducing.
        for i in (1..results.len()).rev() {
            let j = rng.int_inclusive(0, i as u64) as usize;
            results.swap(i, j);
        }
        let (total, per_chunk) = reduce(&results).unwrap();
        assert_eq!(total, recount, "seed {seed}");
        assert!(per_chunk.windows(2).all(|w| w[0].range[1] == w[1].range[0]));
    }
}

#[test]
fn map_results_are_in_range_order() {
    let scene = street::scene();
    let spec = random_traffic(3, &TrafficOptions::default());
    let dets = generate(&spec, &scene).detections;
    let ranges = partition(spec.total_frames, 16).unwrap();
    let results: Vec<ChunkResult> = map_chunks(&dets, &scene, &ranges, 5, true).unwrap();
    let order: Vec<usize> = results.iter().map(|r| r.range.index).collect();
    assert_eq!(order, (0..16).collect::<Vec<_>>());
}

#[test]
fn naive_never_below_dedup() {
    let scene = street::scene();
    for seed in 0..30u64 {
        let spec = random_traffic(300 + seed, &TrafficOptions::default());
        let dets = generate(&spec, &scene).detections;
        for k in [2usize, 5] {
            let mut o = PipelineOptions::new(k);
            o.total_frames = Some(spec.total_frames);
            let dedup = run_pipeline(&dets, &scene, &o).unwrap().total;
            o.dedup = false;
            let naive = run_pipeline(&dets, &scene, &o).unwrap().total;
            assert!(naive >= dedup, "seed {seed} k={k}");
        }
    }
}
