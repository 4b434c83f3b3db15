//! Locating the checkpoint and datasets that integration tests run against.
//!
//! The heavyweight assets (GPT-2 small checkpoint, evaluation corpora) are
//! not checked in; `scripts/fetch_assets.sh` downloads them into `models/`
//! and `data/` at the repository root. Tests and benches call
//! [`require_assets_root`] to find that root regardless of where cargo runs
//! them from.

use std::path::{Path, PathBuf};

use crate::config::ModelPaths;

/// The file whose presence marks a usable assets root.
const SENTINEL: &str = "models/gpt2/model.safetensors";

fn holds_assets(dir: &Path) -> bool {
    dir.join(SENTINEL).is_file()
}

/// Find the directory holding `models/` and `data/`.
///
/// Checked in order: the `ARACH_ASSETS` environment variable, the current
/// directory and its ancestors, then this crate's source location and its
/// ancestors (which covers `cargo test` run from any workspace directory).
pub fn find_assets_root() -> Option<PathBuf> {
    if let Some(root) = std::env::var_os("ARACH_ASSETS") {
        let root = PathBuf::from(root);
        if holds_assets(&root) {
            return Some(root);
        }
    }
    if let Ok(cwd) = std::env::current_dir() {
        for dir in cwd.ancestors() {
            if holds_assets(dir) {
                return Some(dir.to_path_buf());
            }
        }
    }
    for dir in Path::new(env!("CARGO_MANIFEST_DIR")).ancestors() {
        if holds_assets(dir) {
            return Some(dir.to_path_buf());
        }
    }
    None
}

/// [`find_assets_root`], or a panic explaining how to fetch the assets.
///
/// Panicking (rather than erroring) is deliberate: callers are tests and
/// benches, and a missing checkpoint means the environment is not set up,
/// not that the code under test failed.
pub fn require_assets_root() -> PathBuf {
    find_assets_root().unwrap_or_else(|| {
        panic!(
            "model checkpoint not found: run scripts/fetch_assets.sh from the repository \
             root (or point ARACH_ASSETS at a directory containing {SENTINEL})"
        )
    })
}

/// Checkpoint and tokenizer paths under an assets root.
pub fn model_paths(root: &Path) -> ModelPaths {
    ModelPaths {
        weights: root.join("models/gpt2/model.safetensors"),
        vocab: root.join("models/gpt2/vocab.json"),
        merges: root.join("models/gpt2/merges.txt"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_gates_the_search() {
        let dir = tempfile::tempdir().unwrap();
        assert!(!holds_assets(dir.path()));
        std::fs::create_dir_all(dir.path().join("models/gpt2")).unwrap();
        std::fs::write(dir.path().join(SENTINEL), b"x").unwrap();
        assert!(holds_assets(dir.path()));
    }

    #[test]
    fn model_paths_hang_off_the_root() {
        let paths = model_paths(Path::new("/r"));
        assert_eq!(paths.weights, Path::new("/r/models/gpt2/model.safetensors"));
        assert_eq!(paths.vocab, Path::new("/r/models/gpt2/vocab.json"));
        assert_eq!(paths.merges, Path::new("/r/models/gpt2/merges.txt"));
    }
}
