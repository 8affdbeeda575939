//! File formats: expression matrices, label files, z-score and posterior
//! tables. Numbers are written with 17 significant digits and undefined
//! values as empty cells.

use crate::error::{CliError, CliResult};
use snsm::preprocess::{ExpressionMatrix, ZScoreSet};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map(num).unwrap_or_default()
}

fn sniff_delimiter(path: &Path) -> CliResult<u8> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut first = String::new();
    BufReader::new(f)
        .read_line(&mut first)
        .map_err(|e| CliError::io(path, e))?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

fn reader(path: &Path, headers: bool) -> CliResult<csv::Reader<File>> {
    let delim = sniff_delimiter(path)?;
    csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::parse(path, e.to_string()))
}

pub fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::parse(path, e.to_string()))
}

pub fn write_row<W: Write>(w: &mut csv::Writer<W>, path: &Path, row: &[String]) -> CliResult<()> {
    w.write_record(row).map_err(|e| CliError::parse(path, e.to_string()))
}

pub fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_f64(path: &Path, row: usize, col: usize, s: &str) -> CliResult<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::parse(
            path,
            format!("row {row}, column {col}: cannot read {s:?} as a finite number"),
        )),
    }
}

/// Header row of sample IDs after a leading gene-ID column, one gene per row.
pub fn read_expression(path: &Path, labels: &HashMap<String, u8>) -> CliResult<ExpressionMatrix> {
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| CliError::parse(path, e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(CliError::parse(path, "header needs a gene column and sample columns"));
    }
    let mut groups = Vec::with_capacity(header.len() - 1);
    for (j, id) in header.iter().enumerate().skip(1) {
        match labels.get(id) {
            Some(&g) => groups.push(g),
            None => {
                return Err(CliError::parse(
                    path,
                    format!("row 1, column {}: sample {id:?} has no group label", j + 1),
                ))
            }
        }
    }
    let mut values = Vec::new();
    let mut genes = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CliError::parse(path, format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(CliError::parse(
                path,
                format!("row {row}: expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        genes.push(rec[0].to_string());
        let vals = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, s)| parse_f64(path, row, j + 1, s))
            .collect::<CliResult<Vec<_>>>()?;
        values.push(vals);
    }
    Ok(ExpressionMatrix::new(values, genes, groups)?)
}

/// `sample_id, group` pairs with groups in `{1, 2}`; a header row is optional.
pub fn read_labels(path: &Path) -> CliResult<HashMap<String, u8>> {
    let mut rdr = reader(path, false)?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::parse(path, format!("row {row}: {e}")))?;
        if rec.len() < 2 {
            return Err(CliError::parse(path, format!("row {row}: expected sample_id and group")));
        }
        let group = match rec[1].parse::<u8>() {
            Ok(g @ (1 | 2)) => g,
            _ if row == 1 => continue,
            _ => {
                return Err(CliError::parse(
                    path,
                    format!("row {row}, column 2: group {:?} is not 1 or 2", &rec[1]),
                ))
            }
        };
        if out.insert(rec[0].to_string(), group).is_some() {
            return Err(CliError::parse(path, format!("row {row}: duplicate sample {:?}", &rec[0])));
        }
    }
    if out.is_empty() {
        return Err(CliError::parse(path, "no labels"));
    }
    Ok(out)
}

pub fn write_zscores(path: &Path, set: &ZScoreSet) -> CliResult<()> {
    let mut w = writer(path)?;
    let head = ["gene_id", "t", "nu", "p_value", "z", "excluded", "reason"];
    write_row(&mut w, path, &head.map(String::from))?;
    for r in &set.records {
        write_row(
            &mut w,
            path,
            &[
                r.gene_id.clone(),
                opt_num(r.t),
                r.nu.to_string(),
                opt_num(r.p_value),
                opt_num(r.z),
                r.excluded.is_some().to_string(),
                r.excluded.map(|e| e.to_string()).unwrap_or_default(),
            ],
        )?;
    }
    finish(w, path)
}

fn column(header: &csv::StringRecord, name: &str) -> Option<usize> {
    header.iter().position(|h| h.eq_ignore_ascii_case(name))
}

/// Retained `(gene_id, value)` pairs from a table with a named numeric
/// column. Rows with an empty value or `excluded = true` are skipped.
pub fn read_column(path: &Path, name: &str) -> CliResult<(Vec<String>, Vec<f64>)> {
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| CliError::parse(path, e.to_string()))?.clone();
    let col = column(&header, name).ok_or_else(|| CliError::parse(path, format!("no {name:?} column")))?;
    let gene_col = column(&header, "gene_id");
    let excl_col = column(&header, "excluded");
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CliError::parse(path, format!("row {row}: {e}")))?;
        let cell = rec.get(col).unwrap_or("");
        let excluded = excl_col.and_then(|c| rec.get(c)).is_some_and(|s| s == "true" || s == "1");
        if excluded || cell.is_empty() {
            continue;
        }
        vals.push(parse_f64(path, row, col + 1, cell)?);
        ids.push(gene_col.and_then(|c| rec.get(c)).map_or_else(|| format!("g{}", row - 1), String::from));
    }
    Ok((ids, vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(opt_num(None), "");
        assert_eq!(opt_num(Some(f64::NAN)), "");
    }

    #[test]
    fn labels_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "sample,group\na,1\nb,2\n").unwrap();
        let m = read_labels(&p).unwrap();
        assert_eq!(m["a"], 1);
        std::fs::write(&p, "a\t1\nb\t3\n").unwrap();
        let e = read_labels(&p).unwrap_err().to_string();
        assert!(e.contains("row 2, column 2"), "{e}");
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "gene,a,b\ng1,1,2\ng2,3,oops\n").unwrap();
        let labels = HashMap::from([("a".to_string(), 1), ("b".to_string(), 2)]);
        let e = read_expression(&p, &labels).unwrap_err().to_string();
        assert!(e.contains("row 3, column 3"), "{e}");
    }
}
