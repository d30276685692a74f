//! Writes the bundled synthetic corpus and its Brown paths file.
//!
//! cargo run --example make_synthetic -- crates/core/data/synthetic

use std::path::PathBuf;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into()));
    std::fs::create_dir_all(&dir)?;
    let corpus = stancekit::synthetic::generate(stancekit::synthetic::BUNDLED_SEED);
    std::fs::write(dir.join("corpus.jsonl"), corpus.to_jsonl())?;
    std::fs::write(dir.join("brown_paths.txt"), &corpus.brown_paths)?;
    println!("wrote {} instances to {}", corpus.instances.len(), dir.display());
    Ok(())
}
