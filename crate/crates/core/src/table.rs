//! Named-column trajectory tables.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::dsl::ast::format_number;
use crate::dsl::{Schema, SchemaError};

pub const EPISODE_COLUMN: &str = "episode_id";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table has no rows")]
    Empty,
    #[error("row width {found} does not match schema width {expected}")]
    Width { expected: usize, found: usize },
    #[error("non-finite value in column '{column}' at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("malformed table header: {0}")]
    Header(String),
    #[error("malformed value '{value}' at line {line}")]
    Value { value: String, line: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rectangular transition data: one row per step with `s.*`, `a.*`,
/// `sn.*` columns plus the episode index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    schema: Schema,
    data: Vec<f64>,
    episodes: Vec<u32>,
}

impl TrajectoryTable {
    pub fn new(schema: Schema) -> Self {
        Self {
            schema,
            data: Vec::new(),
            episodes: Vec::new(),
        }
    }

    pub fn with_capacity(schema: Schema, rows: usize) -> Self {
        let width = schema.row_width();
        Self {
            schema,
            data: Vec::with_capacity(rows * width),
            episodes: Vec::with_capacity(rows),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.row_width()
    }

    /// Append one transition. Non-finite values are rejected so the table
    /// invariant holds for every consumer.
    pub fn push(
        &mut self,
        state: &[f64],
        action: &[f64],
        next: &[f64],
        episode: u32,
    ) -> Result<(), TableError> {
        let found = state.len() + action.len() + next.len();
        if state.len() != self.schema.state_dim()
            || next.len() != self.schema.state_dim()
            || action.len() != self.schema.action_dim()
        {
            return Err(TableError::Width {
                expected: self.width(),
                found,
            });
        }
        let start = self.data.len();
        self.data.extend_from_slice(state);
        self.data.extend_from_slice(action);
        self.data.extend_from_slice(next);
        if let Some(bad) = self.data[start..].iter().position(|x| !x.is_finite()) {
            self.data.truncate(start);
            return Err(TableError::NonFinite {
                column: self.schema.columns()[bad].clone(),
                row: self.len(),
            });
        }
        self.episodes.push(episode);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.width().max(1))
    }

    pub fn episode_ids(&self) -> &[u32] {
        &self.episodes
    }

    pub fn episode_count(&self) -> usize {
        let mut ids: Vec<u32> = self.episodes.clone();
        ids.dedup();
        ids.len()
    }

    /// Values of a qualified column such as `s.pole_angle`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if name == EPISODE_COLUMN {
            return Some(self.episodes.iter().map(|&e| f64::from(e)).collect());
        }
        let idx = self.schema.columns().iter().position(|c| c == name)?;
        Some(self.rows().map(|r| r[idx]).collect())
    }

    /// Same data under different column names. The new schema must have
    /// the same state and action counts.
    pub fn relabel(&self, schema: Schema) -> Result<Self, TableError> {
        if schema.state_dim() != self.schema.state_dim()
            || schema.action_dim() != self.schema.action_dim()
        {
            return Err(TableError::Width {
                expected: self.width(),
                found: schema.row_width(),
            });
        }
        Ok(Self {
            schema,
            data: self.data.clone(),
            episodes: self.episodes.clone(),
        })
    }

    /// Concatenate tables sharing a schema, keeping episode ids.
    pub fn extend(&mut self, other: &TrajectoryTable) -> Result<(), TableError> {
        if other.schema != self.schema {
            return Err(TableError::Width {
                expected: self.width(),
                found: other.width(),
            });
        }
        self.data.extend_from_slice(&other.data);
        self.episodes.extend_from_slice(&other.episodes);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.schema.columns();
        header.push(EPISODE_COLUMN.to_string());
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for (row, ep) in self.rows().zip(&self.episodes) {
            record.clear();
            record.extend(row.iter().map(|&x| format_number(x)));
            record.push(ep.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TableError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parse a headered CSV table. The schema is recovered from the
    /// header, which must list `s.*`, `a.*`, `sn.*` then `episode_id`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TableError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let schema = schema_from_header(&header)?;
        let width = schema.row_width();
        let mut table = TrajectoryTable::new(schema);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != width + 1 {
                return Err(TableError::Width {
                    expected: width + 1,
                    found: rec.len(),
                });
            }
            let parse = |s: &str| -> Result<f64, TableError> {
                s.trim().parse::<f64>().map_err(|_| TableError::Value {
                    value: s.to_string(),
                    line,
                })
            };
            let vals: Vec<f64> = rec.iter().take(width).map(parse).collect::<Result<_, _>>()?;
            let ep: u32 = rec[width].trim().parse().map_err(|_| TableError::Value {
                value: rec[width].to_string(),
                line,
            })?;
            let s = table.schema.state_dim();
            let a = table.schema.action_dim();
            table.push(&vals[..s], &vals[s..s + a], &vals[s + a..], ep)?;
        }
        Ok(table)
    }

    pub fn load_csv(path: &Path) -> Result<Self, TableError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn schema_from_header(header: &[String]) -> Result<Schema, TableError> {
    let Some((last, cols)) = header.split_last() else {
        return Err(TableError::Header("empty header".into()));
    };
    if last != EPISODE_COLUMN {
        return Err(TableError::Header(format!(
            "last column must be '{EPISODE_COLUMN}', found '{last}'"
        )));
    }
    let strip = |prefix: &str| -> Vec<String> {
        cols.iter()
            .filter_map(|c| c.strip_prefix(prefix).map(str::to_string))
            .collect()
    };
    let states = strip("s.");
    let actions = strip("a.");
    let schema = Schema::new(states, actions)?;
    if schema.columns() != cols {
        return Err(TableError::Header(
            "columns must be ordered s.*, a.*, sn.* with matching state names".into(),
        ));
    }
    Ok(schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(["x", "v"], ["f"]).unwrap()
    }

    #[test]
    fn push_and_columns() {
        let mut t = TrajectoryTable::new(schema());
        t.push(&[1.0, 2.0], &[0.5], &[1.1, 2.1], 0).unwrap();
        t.push(&[1.1, 2.1], &[-0.5], &[1.2, 2.0], 1).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.column("a.f").unwrap(), vec![0.5, -0.5]);
        assert_eq!(t.column("sn.v").unwrap(), vec![2.1, 2.0]);
        assert_eq!(t.column(EPISODE_COLUMN).unwrap(), vec![0.0, 1.0]);
        assert_eq!(t.episode_count(), 2);
        assert!(t.column("s.nope").is_none());
    }

    #[test]
    fn rejects_non_finite_and_bad_width() {
        let mut t = TrajectoryTable::new(schema());
        assert!(matches!(
            t.push(&[f64::NAN, 0.0], &[0.0], &[0.0, 0.0], 0),
            Err(TableError::NonFinite { .. })
        ));
        assert!(matches!(
            t.push(&[0.0], &[0.0], &[0.0, 0.0], 0),
            Err(TableError::Width { .. })
        ));
        assert!(t.is_empty());
    }

    #[test]
    fn csv_header_and_reload() {
        let mut t = TrajectoryTable::new(schema());
        t.push(&[0.1, 1e-7], &[3.0], &[0.2, -2.5e10], 7).unwrap();
        let text = t.to_csv_string();
        assert!(text.starts_with("s.x,s.v,a.f,sn.x,sn.v,episode_id\n"));
        let back = TrajectoryTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn bad_header_is_rejected() {
        let text = "s.x,a.f,sn.y,episode_id\n0,0,0,0\n";
        assert!(matches!(
            TrajectoryTable::read_csv(text.as_bytes()),
            Err(TableError::Header(_))
        ));
    }
}
