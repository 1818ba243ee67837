//! Observations for the two testing problems.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    TwoSample,
    Independence,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::TwoSample => "two-sample",
            Problem::Independence => "independence",
        }
    }
}

/// One paired observation `(x_i, y_i)` with `x_i ~ P`, `y_i ~ Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSamplePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// One HSIC quadruple `(x_i, x_{i+n}, y_i, y_{i+n})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndepQuad {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    TwoSample(Vec<TwoSamplePair>),
    Independence(Vec<IndepQuad>),
}

impl Sample {
    pub fn len(&self) -> usize {
        match self {
            Sample::TwoSample(w) => w.len(),
            Sample::Independence(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn problem(&self) -> Problem {
        match self {
            Sample::TwoSample(_) => Problem::TwoSample,
            Sample::Independence(_) => Problem::Independence,
        }
    }

    /// `(dx, dy)`; for two-sample data both are the shared dimension.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Sample::TwoSample(w) => w.first().map_or((0, 0), |p| (p.x.len(), p.x.len())),
            Sample::Independence(w) => w.first().map_or((0, 0), |q| (q.x1.len(), q.y1.len())),
        }
    }

    /// Keep the items at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Sample {
        match self {
            Sample::TwoSample(w) => Sample::TwoSample(idx.iter().map(|&i| w[i].clone()).collect()),
            Sample::Independence(w) => {
                Sample::Independence(idx.iter().map(|&i| w[i].clone()).collect())
            }
        }
    }

    /// Checks dimension consistency and finiteness of every coordinate.
    pub fn validate(&self) -> Result<()> {
        let (dx, dy) = self.dims();
        if self.is_empty() {
            return Err(Error::Empty("sample"));
        }
        if dx == 0 || dy == 0 {
            return Err(Error::Empty("observation vector"));
        }
        let check = |v: &[f64], d: usize| -> Result<()> {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("observation"));
            }
            Ok(())
        };
        match self {
            Sample::TwoSample(w) => {
                for p in w {
                    check(&p.x, dx)?;
                    check(&p.y, dx)?;
                }
            }
            Sample::Independence(w) => {
                for q in w {
                    check(&q.x1, dx)?;
                    check(&q.x2, dx)?;
                    check(&q.y1, dy)?;
                    check(&q.y2, dy)?;
                }
            }
        }
        Ok(())
    }

    /// Write one row per item with a header naming the columns.
    pub fn write_delimited<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let (dx, dy) = self.dims();
        let cols = |prefix: &'static str, d: usize| (0..d).map(move |k| format!("{prefix}_{k}"));
        let fmt = |v: &[f64]| v.iter().map(|c| format!("{c}")).collect::<Vec<_>>();
        match self {
            Sample::TwoSample(w) => {
                let header: Vec<String> = cols("x", dx).chain(cols("y", dx)).collect();
                writeln!(out, "{}", header.join(","))?;
                for p in w {
                    let mut row = fmt(&p.x);
                    row.extend(fmt(&p.y));
                    writeln!(out, "{}", row.join(","))?;
                }
            }
            Sample::Independence(w) => {
                let header: Vec<String> = cols("x1", dx)
                    .chain(cols("x2", dx))
                    .chain(cols("y1", dy))
                    .chain(cols("y2", dy))
                    .collect();
                writeln!(out, "{}", header.join(","))?;
                for q in w {
                    let mut row = fmt(&q.x1);
                    row.extend(fmt(&q.x2));
                    row.extend(fmt(&q.y1));
                    row.extend(fmt(&q.y2));
                    writeln!(out, "{}", row.join(","))?;
                }
            }
        }
        Ok(())
    }

    /// Parse the format written by [`Sample::write_delimited`]; the header
    /// decides the problem (`x_*`/`y_*` or `x1_*`/`x2_*`/`y1_*`/`y2_*`).
    pub fn read_delimited(text: &str) -> Result<Sample> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or(Error::Empty("data file"))?.split(',').map(str::trim).collect();
        let count = |prefix: &str| header.iter().filter(|h| h.strip_prefix(prefix).is_some_and(|k| k.parse::<usize>().is_ok())).count();
        let (nx, ny, nx2, ny2) = (count("x_"), count("y_"), count("x1_"), count("y1_"));
        let parts: Vec<usize> = if nx > 0 && ny > 0 && nx2 == 0 {
            if nx != ny {
                return Err(Error::DimensionMismatch { expected: nx, got: ny });
            }
            vec![nx, ny]
        } else if nx2 > 0 && ny2 > 0 && nx == 0 {
            vec![nx2, count("x2_"), ny2, count("y2_")]
        } else {
            return Err(invalid("data", "header must name x_*/y_* or x1_*/x2_*/y1_*/y2_* columns"));
        };
        let width: usize = parts.iter().sum();
        if width != header.len() {
            return Err(invalid("data", format!("header has {} columns, expected {width}", header.len())));
        }
        let mut rows = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| invalid("data", format!("row {}: {e}", line_no + 1)))?;
            if vals.len() != width {
                return Err(invalid("data", format!("row {} has {} values, expected {width}", line_no + 1, vals.len())));
            }
            let mut chunks = Vec::with_capacity(parts.len());
            let mut off = 0;
            for &p in &parts {
                chunks.push(vals[off..off + p].to_vec());
                off += p;
            }
            rows.push(chunks);
        }
        let sample = if parts.len() == 2 {
            Sample::TwoSample(
                rows.into_iter()
                    .map(|mut c| TwoSamplePair { y: c.pop().unwrap(), x: c.pop().unwrap() })
                    .collect(),
            )
        } else {
            Sample::Independence(
                rows.into_iter()
                    .map(|mut c| {
                        let y2 = c.pop().unwrap();
                        let y1 = c.pop().unwrap();
                        let x2 = c.pop().unwrap();
                        let x1 = c.pop().unwrap();
                        IndepQuad { x1, x2, y1, y2 }
                    })
                    .collect(),
            )
        };
        sample.validate()?;
        Ok(sample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_mixed_dimensions() {
        let s = Sample::TwoSample(vec![
            TwoSamplePair { x: vec![0.0, 1.0], y: vec![1.0, 1.0] },
            TwoSamplePair { x: vec![0.0], y: vec![1.0, 1.0] },
        ]);
        assert!(matches!(s.validate(), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn validate_rejects_nan() {
        let s = Sample::TwoSample(vec![TwoSamplePair { x: vec![f64::NAN], y: vec![1.0] }]);
        assert!(matches!(s.validate(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn delimited_export_has_header_and_rows() {
        let s = Sample::TwoSample(vec![TwoSamplePair { x: vec![0.5, 1.0], y: vec![2.0, 3.0] }]);
        let mut buf = Vec::new();
        s.write_delimited(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x_0,x_1,y_0,y_1\n0.5,1,2,3\n");
    }

    #[test]
    fn delimited_round_trip() {
        let s = Sample::Independence(vec![
            IndepQuad { x1: vec![0.25, -1.0], x2: vec![3.0, 4.5], y1: vec![1e-3], y2: vec![-7.0] },
            IndepQuad { x1: vec![1.0, 2.0], x2: vec![0.0, 0.1], y1: vec![2.0], y2: vec![0.3] },
        ]);
        let mut buf = Vec::new();
        s.write_delimited(&mut buf).unwrap();
        assert_eq!(Sample::read_delimited(std::str::from_utf8(&buf).unwrap()).unwrap(), s);
        let t = Sample::read_delimited("x_0,y_0\n1,2\n3,4\n").unwrap();
        assert_eq!(t.problem(), Problem::TwoSample);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn delimited_reader_rejects_bad_input() {
        assert!(Sample::read_delimited("").is_err());
        assert!(Sample::read_delimited("a,b\n1,2\n").is_err());
        assert!(Sample::read_delimited("x_0,y_0\n1\n").is_err());
        assert!(Sample::read_delimited("x_0,y_0\n1,abc\n").is_err());
        assert!(Sample::read_delimited("x_0,x_1,y_0\n1,2,3\n").is_err());
    }
}
