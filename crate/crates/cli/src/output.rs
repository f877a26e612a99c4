use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Version of every JSON document and CSV table this tool writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, command: &str, body: &T) -> Result<()> {
    let mut out = open(path)?;
    let envelope = Envelope { schema_version: SCHEMA_VERSION, command, body };
    serde_json::to_writer_pretty(&mut out, &envelope)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = open(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// CSV writer whose first column is `schema_version`.
pub struct Table {
    writer: csv::Writer<Box<dyn Write>>,
}

impl Table {
    pub fn new(path: Option<&Path>, columns: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(open(path)?);
        writer.write_record(std::iter::once("schema_version").chain(columns.iter().copied()))?;
        Ok(Table { writer })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        let version = SCHEMA_VERSION.to_string();
        self.writer
            .write_record(std::iter::once(version.as_str()).chain(fields.iter().map(String::as_str)))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}
