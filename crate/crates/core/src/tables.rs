//! Labelled matrix CSV files: a first label column, then one column per
//! header name.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMatrix {
    pub label_header: String,
    pub row_labels: Vec<String>,
    pub column_names: Vec<String>,
    pub values: Array2<f64>,
}

impl LabelledMatrix {
    pub fn new(label_header: &str, row_labels: Vec<String>, column_names: Vec<String>, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), (row_labels.len(), column_names.len()));
        Self {
            label_header: label_header.to_string(),
            row_labels,
            column_names,
            values,
        }
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.label_header.clone()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(self.values.outer_iter()) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let (label_header, column_names) = header
            .split_first()
            .map(|(l, rest)| (l.clone(), rest.to_vec()))
            .ok_or_else(|| Error::MissingColumn("row label".into()))?;
        let mut row_labels = Vec::new();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            row_labels.push(rec.get(0).unwrap_or("").to_string());
            for cell in rec.iter().skip(1) {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{cell}` is not a number"),
                })?;
                data.push(v);
            }
        }
        let values = Array2::from_shape_vec((row_labels.len(), column_names.len()), data)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self {
            label_header,
            row_labels,
            column_names,
            values,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }
}
