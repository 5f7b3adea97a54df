use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::OutputFormat;
use crate::error::{Error, Result};
use crate::kernel::ResolvedPopulation;
use crate::simulator::{FinalSizeRecord, OutbreakClass};

/// First line of every records CSV; bump the version when columns change.
pub const RECORDS_HEADER: &str = "# epifrost records v1";

pub fn write_records(path: &Path, format: OutputFormat, records: &[FinalSizeRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => {
            writeln!(out, "{RECORDS_HEADER}")?;
            let m = records.first().map_or(0, |r| r.t_inf.len());
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec!["replicate".to_string(), "seed".to_string()];
            header.extend((1..=m).map(|i| format!("t_{i}")));
            header.extend(["total", "generations", "class"].map(String::from));
            w.write_record(&header)?;
            for r in records {
                let mut row = vec![r.replicate.to_string(), r.seed.to_string()];
                row.extend(r.t_inf.iter().map(u64::to_string));
                row.push(r.total().to_string());
                row.push(r.generations.to_string());
                row.push(r.outbreak_class.as_str().to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        OutputFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Reads a records CSV back. Population counts are not stored in the CSV,
/// so the returned records carry empty populations.
pub fn read_records_csv(path: &Path) -> Result<Vec<FinalSizeRecord>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != RECORDS_HEADER {
        return Err(Error::Config(format!("{} is not a records file", path.display())));
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let m = rdr.headers()?.len().saturating_sub(5);
    let bad = |what: &str| Error::Config(format!("bad {what} in records file"));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| row[i].parse::<u64>().map_err(|_| bad("number"));
        let t_inf = (0..m).map(|i| num(2 + i)).collect::<Result<Vec<_>>>()?;
        let outbreak_class = match &row[m + 4] {
            "major" => OutbreakClass::Major,
            "minor" => OutbreakClass::Minor,
            _ => return Err(bad("class")),
        };
        out.push(FinalSizeRecord {
            replicate: num(0)? as usize,
            seed: num(1)?,
            t_inf,
            generations: num(m + 3)?,
            outbreak_class,
            population: ResolvedPopulation { susceptible: Vec::new(), infective: Vec::new() },
        });
    }
    Ok(out)
}
