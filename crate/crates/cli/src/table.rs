//! CSV ingestion. The header row names columns; the target, weight and group
//! columns are picked out by name and every other column is a numeric feature.

use std::path::Path;

use figs::Dataset;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Required unless reading inputs for prediction.
    pub target_column: Option<String>,
    pub weight_column: Option<String>,
    pub group_column: Option<String>,
    /// Explicit feature columns; defaults to all remaining columns.
    pub feature_columns: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub groups: Option<Vec<String>>,
    pub has_target: bool,
}

fn column(header: &[String], name: &str) -> CliResult<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| CliError::input(format!("missing column `{name}`")))
}

fn parse_cell(cell: &str, row: usize, name: &str) -> CliResult<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::input(format!("row {row}, column `{name}`: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::input(format!("row {row}, column `{name}`: non-finite value")));
    }
    Ok(v)
}

/// Reads a table. When `require_target` is false a missing target column is
/// allowed and the targets are filled with zeros.
pub fn read_table(path: &Path, schema: &CsvSchema, require_target: bool) -> CliResult<Table> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::input("CSV header row is required"));
    }
    let target = match &schema.target_column {
        Some(t) if require_target => Some(column(&header, t)?),
        Some(t) => header.iter().position(|h| h == t),
        None if require_target => return Err(CliError::input("no target column given")),
        None => None,
    };
    let weight = schema.weight_column.as_deref().map(|w| column(&header, w)).transpose()?;
    let group = schema.group_column.as_deref().map(|g| column(&header, g)).transpose()?;
    let features: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| column(&header, n)).collect::<CliResult<_>>()?,
        None => (0..header.len()).filter(|&j| Some(j) != target && Some(j) != weight && Some(j) != group).collect(),
    };
    if features.is_empty() {
        return Err(CliError::input("no feature columns"));
    }
    let (mut x, mut y, mut w, mut g) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for &j in &features {
            x.push(parse_cell(&record[j], row, &header[j])?);
        }
        y.push(match target {
            Some(j) => parse_cell(&record[j], row, &header[j])?,
            None => 0.0,
        });
        if let Some(j) = weight {
            w.push(parse_cell(&record[j], row, &header[j])?);
        }
        if let Some(j) = group {
            g.push(record[j].trim().to_string());
        }
    }
    if y.is_empty() {
        return Err(CliError::input("CSV has no data rows"));
    }
    let feature_names: Vec<String> = features.iter().map(|&j| header[j].clone()).collect();
    let mut dataset = Dataset::from_flat(y.len(), features.len(), x, y)?.with_feature_names(feature_names.clone())?;
    if weight.is_some() {
        dataset = dataset.with_weights(w)?;
    }
    Ok(Table { dataset, feature_names, groups: group.map(|_| g), has_target: target.is_some() })
}

/// Writes a CSV with the given header and rows of numbers.
pub fn write_numeric_csv<W: std::io::Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(target: &str) -> CsvSchema {
        CsvSchema { target_column: Some(target.into()), ..Default::default() }
    }

    #[test]
    fn remaining_columns_are_features() {
        let f = file("a,y,b,g\n1,0,2,u\n3,1,4,v\n");
        let s = CsvSchema { group_column: Some("g".into()), ..schema("y") };
        let t = read_table(f.path(), &s, true).unwrap();
        assert_eq!(t.feature_names, ["a", "b"]);
        assert_eq!(t.dataset.row(1), &[3.0, 4.0]);
        assert_eq!(t.dataset.targets(), &[0.0, 1.0]);
        assert_eq!(t.groups.unwrap(), ["u", "v"]);
    }

    #[test]
    fn schema_errors() {
        let f = file("a,b\n1,2\n");
        assert!(matches!(read_table(f.path(), &schema("y"), true), Err(CliError::Input(_))));
        let f = file("a,y\nfoo,1\n");
        assert!(read_table(f.path(), &schema("y"), true).is_err());
        let f = file("a,y\nNaN,1\n");
        assert!(read_table(f.path(), &schema("y"), true).is_err());
        let f = file("a,y\n");
        assert!(read_table(f.path(), &schema("y"), true).is_err());
    }

    #[test]
    fn target_optional_for_prediction() {
        let f = file("a,b\n1,2\n");
        let t = read_table(f.path(), &schema("y"), false).unwrap();
        assert!(!t.has_target);
        assert_eq!(t.dataset.targets(), &[0.0]);
    }
}
