//! Parsers for the small text formats the CLI consumes: key-set files
//! and vertex placement files. Graph files are parsed by the library.
//!
//! Both formats are line oriented. Blank lines and lines starting with
//! `#` are skipped, and errors carry 1-based line numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
}

/// Reads a key-set file: one decimal key per line. Keys must be unique
/// and lie in `[0, m)`.
pub fn read_key_set(path: &Path, m: u64) -> Result<BTreeSet<u64>, CliError> {
    let text = read(path)?;
    let mut keys = BTreeSet::new();
    for (line_no, line) in content_lines(&text) {
        let key: u64 = line.parse().map_err(|_| {
            CliError::Config(format!(
                "{}:{}: cannot parse key `{}`",
                path.display(),
                line_no,
                line
            ))
        })?;
        if key >= m {
            return Err(CliError::Config(format!(
                "{}:{}: key {} outside [0, {})",
                path.display(),
                line_no,
                key,
                m
            )));
        }
        if !keys.insert(key) {
            return Err(CliError::Config(format!(
                "{}:{}: duplicate key {}",
                path.display(),
                line_no,
                key
            )));
        }
    }
    Ok(keys)
}

/// Reads a placement file: one `vertex party` pair per line. Each vertex
/// may appear at most once; party labels are validated by the simulator.
pub fn read_placement(path: &Path) -> Result<BTreeMap<u32, u32>, CliError> {
    let text = read(path)?;
    let mut placement = BTreeMap::new();
    for (line_no, line) in content_lines(&text) {
        let mut parts = line.split_whitespace();
        let entry = (|| {
            let vertex: u32 = parts.next()?.parse().ok()?;
            let party: u32 = parts.next()?.parse().ok()?;
            if parts.next().is_some() {
                return None;
            }
            Some((vertex, party))
        })();
        let (vertex, party) = entry.ok_or_else(|| {
            CliError::Config(format!(
                "{}:{}: expected `vertex party`, got `{}`",
                path.display(),
                line_no,
                line
            ))
        })?;
        if placement.insert(vertex, party).is_some() {
            return Err(CliError::Config(format!(
                "{}:{}: vertex {} placed twice",
                path.display(),
                line_no,
                vertex
            )));
        }
    }
    Ok(placement)
}

/// Reads a graph file, mapping parse failures to config errors.
pub fn read_graph(path: &Path) -> Result<cpsketch::gossip::Graph, CliError> {
    let text = read(path)?;
    cpsketch::gossip::Graph::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))
}
