use std::io::Read;
use std::path::Path;

use super::SemanticsError;

/// Rows of text cells; `None` is a null.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, column: usize) -> Option<&str> {
        self.rows[row].get(column).and_then(|c| c.as_deref())
    }

    /// Reads CSV with a header row. Empty fields are nulls.
    pub fn from_csv(reader: impl Read) -> Result<Self, SemanticsError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let columns = rdr
            .headers()
            .map_err(|e| SemanticsError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut table = Table::new(columns);
        for record in rdr.records() {
            let record = record.map_err(|e| SemanticsError::Csv(e.to_string()))?;
            table
                .rows
                .push(record.iter().map(|f| (!f.is_empty()).then(|| f.to_string())).collect());
        }
        Ok(table)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, SemanticsError> {
        let file = std::fs::File::open(path).map_err(|e| SemanticsError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(file)
    }

    /// Reads a JSON array of flat objects. Column order follows first appearance.
    pub fn from_json(text: &str) -> Result<Self, SemanticsError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| SemanticsError::Json(e.to_string()))?;
        let objects = value
            .as_array()
            .ok_or_else(|| SemanticsError::Json("expected an array of objects".into()))?;
        let mut table = Table::default();
        for obj in objects {
            let obj = obj
                .as_object()
                .ok_or_else(|| SemanticsError::Json("expected an array of objects".into()))?;
            for key in obj.keys() {
                if table.column(key).is_none() {
                    table.columns.push(key.clone());
                }
            }
        }
        for obj in objects {
            let obj = obj.as_object().expect("checked above");
            let mut row = Vec::with_capacity(table.columns.len());
            for col in &table.columns {
                row.push(match obj.get(col) {
                    None | Some(serde_json::Value::Null) => None,
                    Some(serde_json::Value::String(s)) => Some(s.clone()),
                    Some(v @ (serde_json::Value::Number(_) | serde_json::Value::Bool(_))) => Some(v.to_string()),
                    Some(_) => return Err(SemanticsError::Json(format!("column `{col}` holds a nested value"))),
                });
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn to_csv(&self) -> Result<String, SemanticsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| SemanticsError::Csv(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))
                .map_err(|e| SemanticsError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| SemanticsError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}
