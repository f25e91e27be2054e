//! Labeled vector datasets on disk: a header row, feature columns, and a
//! final `y` column in {−1, 1} (0/1 is accepted and mapped to −1/+1).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Client, Label};
use crate::error::{invalid, Error, Result};
use crate::output::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub records: Vec<(Vec<f64>, Label)>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, records: Vec<(Vec<f64>, Label)>) -> Result<Self> {
        let d = feature_names.len();
        if let Some((i, _)) = records.iter().enumerate().find(|(_, (x, _))| x.len() != d) {
            return Err(Error::Schema(format!("record {i} does not have {d} features")));
        }
        Ok(Self { feature_names, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Random train/test split. Features are divided per column by the
    /// training portion's max-abs and the test side is clipped to [−1, 1].
    pub fn split_rescaled<R: Rng + ?Sized>(&self, test_fraction: f64, rng: &mut R) -> Result<(Vec<Client>, Vec<Client>)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(invalid(format!("test fraction must lie in (0, 1), got {test_fraction}")));
        }
        let n_test = ((self.len() as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test >= self.len() {
            return Err(invalid(format!(
                "{} records cannot be split with test fraction {test_fraction}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let (test_idx, train_idx) = order.split_at(n_test);
        let mut scale = vec![0.0f64; self.dim()];
        for &i in train_idx {
            for (s, v) in scale.iter_mut().zip(&self.records[i].0) {
                *s = s.max(v.abs());
            }
        }
        let encode = |i: usize| {
            let (x, y) = &self.records[i];
            let z = x
                .iter()
                .zip(&scale)
                .map(|(v, s)| if *s > 0.0 { (v / s).clamp(-1.0, 1.0) } else { 0.0 })
                .collect();
            Client::new(z, *y)
        };
        Ok((
            train_idx.iter().map(|&i| encode(i)).collect(),
            test_idx.iter().map(|&i| encode(i)).collect(),
        ))
    }
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim().parse::<f64>().ok()? {
        v if v == 1.0 => Some(Label::Positive),
        v if v == -1.0 || v == 0.0 => Some(Label::Negative),
        _ => None,
    }
}

pub fn read_dataset_csv<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(Error::Schema(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }
    let d = header.len() - 1;
    let feature_names = header.iter().take(d).map(str::to_owned).collect();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != d + 1 {
            return Err(Error::Schema(format!(
                "{} line {line}: expected {} fields, found {}",
                path.display(),
                d + 1,
                row.len()
            )));
        }
        let features = row
            .iter()
            .take(d)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("not a finite number: {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = parse_label(&row[d]).ok_or_else(|| parse_err(line, format!("label must be -1, 0 or 1, got {:?}", &row[d])))?;
        records.push((features, label));
    }
    Dataset::new(feature_names, records)
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset_csv(file, path)
}

/// Writes `x1..xd,y` with full-precision floats.
pub fn write_dataset_csv<W: Write>(w: &mut W, records: &[(Vec<f64>, Label)]) -> Result<()> {
    let d = records.first().map_or(0, |r| r.0.len());
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["y".to_owned()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (x, y) in records {
        if x.len() != d {
            return Err(Error::Schema("records have different widths".into()));
        }
        let mut fields: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        fields.push(y.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
