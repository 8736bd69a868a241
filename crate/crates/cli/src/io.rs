use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use xtq::estimate::ModelFile;
use xtq::events::{parse_events, EventFormat, EventRecord, MinutesLedger};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    print!("{}", to_json(value)?);
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let parsed = parse_events(open(path)?, EventFormat::NeutralJsonl, &path.display().to_string())
        .with_context(|| format!("reading events from {}", path.display()))?;
    Ok(parsed.events)
}

pub fn read_ledger(path: &Path) -> Result<MinutesLedger> {
    MinutesLedger::read_csv(open(path)?).with_context(|| format!("reading minutes from {}", path.display()))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let f: ModelFile =
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing model {}", path.display()))?;
    Ok(f)
}

/// Writes a plot and the table it was drawn from, `name.svg` + `name.csv`.
pub fn write_plot(svg_path: &Path, svg: &str, csv: &str) -> Result<PathBuf> {
    write_text(svg_path, svg)?;
    let csv_path = svg_path.with_extension("csv");
    write_text(&csv_path, csv)?;
    Ok(csv_path)
}
