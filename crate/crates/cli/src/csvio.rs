//! Two-column tables in and out. Numbers are written in the shortest form
//! that parses back to the same `f64`.

use std::io::Write;
use std::path::Path;

use levelset::lemma::PsiTable;

use crate::error::CliError;

/// Accepted headers for `(k, value)` tables.
pub const TABLE_HEADERS: [&str; 2] = ["psi", "measure"];

pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Reads a `k,psi` or `k,measure` table with strictly increasing `k`.
pub fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    let ok = headers.len() == 2 && &headers[0] == "k" && TABLE_HEADERS.contains(&&headers[1]);
    if !ok {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header \"k,psi\" or \"k,measure\", found \"{}\"",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut ks = Vec::new();
    let mut vs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| CliError::Csv {
            path: path.to_path_buf(),
            line,
            message,
        };
        let parse = |field: &str| {
            field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("\"{field}\" is not a finite number")))
        };
        let k = parse(&record[0])?;
        let v = parse(&record[1])?;
        if let Some(&prev) = ks.last() {
            if !(k > prev) {
                return Err(bad(format!("k must be strictly increasing ({prev} then {k})")));
            }
        }
        ks.push(k);
        vs.push(v);
    }
    if ks.is_empty() {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "table has no rows".into(),
        });
    }
    Ok((ks, vs))
}

pub fn read_psi_table(path: &Path, k0: f64) -> Result<PsiTable, CliError> {
    let (ks, vs) = read_table(path)?;
    PsiTable::new(ks, vs, k0).map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

fn csv_error(path: &Path, e: &csv::Error) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Writes a header and rows to `out`.
pub fn write_rows<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(false).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

pub fn write_pairs<W: Write>(out: W, header: [&str; 2], xs: &[f64], ys: &[f64]) -> std::io::Result<()> {
    let rows: Vec<Vec<String>> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| vec![fmt_num(x), fmt_num(y)])
        .collect();
    write_rows(out, &header, &rows)
}

pub fn write_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_rows(std::io::BufWriter::new(file), header, rows).map_err(|e| CliError::io(path, e))
}
