mod common;

#[test]
fn hundred_random_schedules_match_ground_truth() {
    let detail = common::oracle_equivalence(100).unwrap_or_else(|e| panic!("{e}"));
    println!("{detail}");
}

#[test]
fn presets_match_ground_truth() {
    for (name, _) in browsetrace::synth::PRESETS {
        let t = common::trace(browsetrace::synth::preset(name).unwrap(), 9);
        common::compare_with_oracle(&t).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn coarse_and_fine_grids() {
    for (seed, grid_ms) in [(1, 1), (2, 7), (3, 250), (4, 60_000)] {
        let params = browsetrace::synth::RandomParams { grid_ms, ..Default::default() };
        let t = common::trace(browsetrace::synth::random_schedule(seed, &params), seed);
        common::compare_with_oracle(&t).unwrap_or_else(|e| panic!("grid {grid_ms}: {e}"));
    }
}
