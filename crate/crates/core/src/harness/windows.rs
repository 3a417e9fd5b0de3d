//! Fixed-length sliding windows over annotated sensor streams.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
    /// A window is positive when its annotation rate is strictly above this.
    pub gamma: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            length: 256,
            stride: 64,
            gamma: 0.5,
        }
    }
}

impl WindowSpec {
    pub fn new(length: usize, stride: usize, gamma: f64) -> Result<Self> {
        let spec = WindowSpec {
            length,
            stride,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.length {
            return Err(Error::config(format!(
                "window stride {} must satisfy 1 <= S <= L = {}",
                self.stride, self.length
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!(
                "gamma = {} must lie in (0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }

    /// `floor((n - L) / S) + 1`, or 0 when the stream is shorter than `L`.
    pub fn window_count(&self, n: usize) -> usize {
        if n < self.length {
            0
        } else {
            (n - self.length) / self.stride + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub values: Vec<f64>,
    pub annotation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub positive_rate: f64,
    pub label: bool,
}

impl Window {
    pub fn samples<'a>(&self, stream: &'a [AnnotatedSample]) -> &'a [AnnotatedSample] {
        &stream[self.start..self.start + self.len]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub windows: Vec<Window>,
    pub warning: Option<String>,
}

pub fn segment_windows(stream: &[AnnotatedSample], spec: &WindowSpec) -> Result<Segmentation> {
    spec.validate()?;
    if stream.len() < spec.length {
        return Ok(Segmentation {
            windows: Vec::new(),
            warning: Some(format!(
                "stream of {} samples is shorter than the window length {}",
                stream.len(),
                spec.length
            )),
        });
    }
    // prefix sums of positive annotations
    let mut positives = Vec::with_capacity(stream.len() + 1);
    positives.push(0usize);
    for s in stream {
        positives.push(positives.last().copied().unwrap_or(0) + usize::from(s.annotation));
    }
    let windows = (0..spec.window_count(stream.len()))
        .map(|k| {
            let start = k * spec.stride;
            let count = positives[start + spec.length] - positives[start];
            let rate = count as f64 / spec.length as f64;
            Window {
                index: k,
                start,
                len: spec.length,
                positive_rate: rate,
                label: rate > spec.gamma,
            }
        })
        .collect();
    Ok(Segmentation {
        windows,
        warning: None,
    })
}

/// Reads a stream CSV: an `annotation` column (0/1) plus any numeric signal columns.
pub fn read_stream<R: Read>(reader: R) -> Result<Vec<AnnotatedSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ann = headers
        .iter()
        .position(|h| h == "annotation")
        .ok_or_else(|| Error::Schema("stream CSV needs an `annotation` column".into()))?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(headers.len() - 1);
        let mut annotation = false;
        for (i, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Row {
                line,
                column: headers.get(i).unwrap_or("?").to_owned(),
                message: format!("`{cell}` is not a number"),
            })?;
            if i == ann {
                annotation = v != 0.0;
            } else {
                values.push(v);
            }
        }
        out.push(AnnotatedSample { values, annotation });
    }
    Ok(out)
}
