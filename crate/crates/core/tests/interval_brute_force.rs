mod common;

#[test]
fn sweep_line_and_algebra_match_per_millisecond_counts() {
    let detail = common::brute_force(200).unwrap_or_else(|e| panic!("{e}"));
    println!("{detail}");
}
