use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let path = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden_vectors.tsv")
    });
    let body = lorafree_oracle::generate();
    if let Err(e) = std::fs::write(&path, &body) {
        eprintln!("cannot write {}: {e}", path.display());
        return ExitCode::FAILURE;
    }
    println!("{} vectors -> {}", body.lines().count() - 1, path.display());
    ExitCode::SUCCESS
}
