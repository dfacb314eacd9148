//! CSV results with a JSON provenance sidecar.
//!
//! The CSV holds one row per record in write order; floats carry 17
//! significant digits so that reading a file back reproduces every value
//! bit for bit. The sidecar lives next to the CSV as `<name>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::WorkEntropyRecord;
use crate::sweep::{Provenance, SweepResult};

pub const CSV_COLUMNS: [&str; 12] = [
    "drive",
    "T",
    "U",
    "tau",
    "method",
    "W_avg",
    "W_ext",
    "dF",
    "dS",
    "steps",
    "clamped_flag",
    "error_floor_flag",
];

/// `results.csv` → `results.csv.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse(format!("{kind:?}")),
    }
}

pub fn write_csv<W: Write>(records: &[WorkEntropyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.drive.as_str(),
            &float(r.temperature),
            &float(r.interaction),
            &float(r.tau),
            r.method.as_str(),
            &float(r.w_avg),
            &float(r.w_ext),
            &float(r.d_f),
            &float(r.d_s),
            &r.steps.to_string(),
            flag(r.clamped),
            flag(r.error_floor),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<WorkEntropyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    for (i, want) in CSV_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) if header.iter().any(|h| h == *want) => {
                return Err(Error::Parse(format!("column {} is '{got}', expected '{want}'", i + 1)));
            }
            _ => return Err(Error::Parse(format!("missing column '{want}'"))),
        }
    }
    if header.len() > CSV_COLUMNS.len() {
        return Err(Error::Parse(format!("unexpected column '{}'", &header[CSV_COLUMNS.len()])));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse(format!("line {line}: {}", csv_error(e)))
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing value for column '{}'", CSV_COLUMNS[i])))
        };
        let bad = |i: usize, v: &str, what: &str| {
            Error::Parse(format!("line {line}, column '{}': cannot read '{v}' as {what}", CSV_COLUMNS[i]))
        };
        let num = |i: usize| -> Result<f64> {
            let v = field(i)?;
            v.parse().map_err(|_| bad(i, v, "a number"))
        };
        let boolean = |i: usize| -> Result<bool> {
            match field(i)? {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(bad(i, v, "a 0/1 flag")),
            }
        };
        let drive = field(0)?.parse().map_err(|_| bad(0, &row[0], "a drive"))?;
        let method = field(4)?.parse().map_err(|_| bad(4, &row[4], "a method"))?;
        let steps = field(9)?.parse().map_err(|_| bad(9, &row[9], "a step count"))?;
        records.push(WorkEntropyRecord {
            drive,
            temperature: num(1)?,
            interaction: num(2)?,
            tau: num(3)?,
            method,
            w_avg: num(5)?,
            w_ext: num(6)?,
            d_f: num(7)?,
            d_s: num(8)?,
            steps,
            clamped: boolean(10)?,
            error_floor: boolean(11)?,
        });
    }
    Ok(records)
}

/// Writes the CSV at `path` and the provenance sidecar beside it.
pub fn persist(result: &SweepResult, path: &Path) -> Result<()> {
    let mut csv = BufWriter::new(File::create(path)?);
    write_csv(&result.records, &mut csv)?;
    csv.flush()?;
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut side, &result.provenance).map_err(|e| Error::Io(e.into()))?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SweepResult> {
    let records = read_csv(BufReader::new(File::open(path)?))
        .map_err(|e| prefix(e, path))?;
    let side = sidecar_path(path);
    let provenance: Provenance = serde_json::from_reader(BufReader::new(File::open(&side)?)).map_err(|e| {
        Error::Parse(format!("{}: line {}, column {}: {e}", side.display(), e.line(), e.column()))
    })?;
    Ok(SweepResult { records, provenance })
}

fn prefix(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::DriveKind;
    use crate::metrics::Method;
    use crate::propagate::StepPolicy;
    use crate::sweep::{run_sweep, SweepConfig};

    fn tiny() -> SweepResult {
        let config = SweepConfig {
            sites: 2,
            drives: vec![DriveKind::Comb, DriveKind::MiddleIsland],
            temperatures: vec![0.2, 2.5],
            u_values: vec![0.0, 3.0],
            tau_values: vec![0.5, 1.0 / 3.0],
            steps: StepPolicy::Fixed(40),
            methods: Method::ALL.to_vec(),
            output: None,
        };
        run_sweep(&config, &|_, _| {}).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = tiny();
        let mut buf = Vec::new();
        write_csv(&r.records, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, r.records);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("drive,T,U,tau,method,W_avg,W_ext,dF,dS,steps,clamped_flag,error_floor_flag\n"));
    }

    #[test]
    fn empty_file_has_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 1);
        assert!(read_csv(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn parse_errors_name_the_problem() {
        let header = CSV_COLUMNS.join(",");
        let missing = header.replace(",dS", "");
        let err = read_csv(missing.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("'dS'"), "{err}");

        let row = "comb,0.2,1,2,exact,1,-1,0.5,x,10,0,0";
        let err = read_csv(format!("{header}\n{row}\n").as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("'dS'"), "{err}");

        let short = "comb,0.2,1,2,exact";
        assert!(read_csv(format!("{header}\n{short}\n").as_bytes()).is_err());
    }
}
