//! Versioned CSV tables shared by every emitted artifact.

use std::io::{self, BufRead, Write};

/// First line of every CSV file written by this crate.
pub const SCHEMA_LINE: &str = "# schema=1";

/// Writes the schema line, a header and the rows.
pub fn write_csv<W, R, S>(out: W, header: &[&str], rows: R) -> io::Result<()>
where
    W: Write,
    R: IntoIterator<Item = Vec<S>>,
    S: AsRef<str>,
{
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header).map_err(io::Error::other)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref())).map_err(io::Error::other)?;
    }
    w.flush()
}

/// Shortest round-trip decimal representation.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Reads a CSV with an optional leading `#` comment block. Returns the
/// header and the raw string records.
pub fn read_csv<R: BufRead>(input: R) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(io::Error::other)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}
