use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

/// Manifest path for a file output: `<out>.manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write<C: Serialize>(path: &Path, command: &str, config: &C, outputs: &[&Path], results: Value) -> Result<()> {
    let doc = json!({
        "tool": "kvar",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": config,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "results": results,
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    kvar::io_util::write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}
