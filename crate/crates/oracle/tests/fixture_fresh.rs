use std::path::Path;

#[test]
fn committed_fixture_matches_regeneration() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden_vectors.tsv");
    let committed = std::fs::read_to_string(&path).expect("fixture present; run `cargo run -p lorafree-oracle`");
    assert!(
        committed == lorafree_oracle::generate(),
        "fixture is stale; regenerate with `cargo run -p lorafree-oracle`"
    );
}
