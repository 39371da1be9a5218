use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    format_version: u32,
    command: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

/// Seventeen significant digits, enough to read back the same double.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn write_json<T: Serialize>(
    out: Option<&Path>,
    command: &str,
    config: &RunConfig,
    result: &T,
) -> Result<(), CliError> {
    let mut w = sink(out)?;
    let env = Envelope { format_version: FORMAT_VERSION, command, config, result };
    serde_json::to_writer_pretty(&mut w, &env).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// CSV with the format version and resolved config as leading `#` lines.
pub fn write_csv(
    out: Option<&Path>,
    command: &str,
    config: &RunConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut w = sink(out)?;
    writeln!(w, "# format_version={FORMAT_VERSION}")?;
    writeln!(w, "# command={command}")?;
    let cfg = serde_json::to_string(config).map_err(std::io::Error::from)?;
    writeln!(w, "# config={cfg}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(header)?;
    for r in rows {
        c.write_record(r)?;
    }
    c.flush()?;
    Ok(())
}
