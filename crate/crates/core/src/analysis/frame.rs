//! Minimal column store for trial tables.

use std::collections::BTreeMap;
use std::io::Read;

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Blank cells are NaN.
    Num(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    order: Vec<String>,
    columns: BTreeMap<String, Column>,
    rows: usize,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse CSV text. A column is numeric when every non-blank cell parses
    /// as a number; otherwise it is kept as text.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(AnalysisError::Parse(format!(
                    "row {} has {} fields, header has {}",
                    cells[0].len() + 2,
                    rec.len(),
                    headers.len()
                )));
            }
            for (c, field) in rec.iter().enumerate() {
                cells[c].push(field.to_string());
            }
        }
        let mut frame = Frame::new();
        for (name, raw) in headers.into_iter().zip(cells) {
            let parsed: Option<Vec<f64>> = raw
                .iter()
                .map(|s| if s.is_empty() { Some(f64::NAN) } else { s.parse().ok() })
                .collect();
            let col = match parsed {
                Some(v) => Column::Num(v),
                None => Column::Text(raw),
            };
            frame.insert(&name, col)?;
        }
        Ok(frame)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// Add or replace a column.
    pub fn insert(&mut self, name: &str, col: Column) -> Result<(), AnalysisError> {
        if !self.order.is_empty() && col.len() != self.rows {
            return Err(AnalysisError::Parse(format!(
                "column {name} has {} rows, frame has {}",
                col.len(),
                self.rows
            )));
        }
        self.rows = col.len();
        if self.columns.insert(name.to_string(), col).is_none() {
            self.order.push(name.to_string());
        }
        Ok(())
    }

    pub fn insert_num(&mut self, name: &str, v: Vec<f64>) -> Result<(), AnalysisError> {
        self.insert(name, Column::Num(v))
    }

    pub fn column(&self, name: &str) -> Result<&Column, AnalysisError> {
        self.columns.get(name).ok_or_else(|| AnalysisError::Schema {
            missing: vec![name.to_string()],
        })
    }

    pub fn num(&self, name: &str) -> Result<&[f64], AnalysisError> {
        match self.column(name)? {
            Column::Num(v) => Ok(v),
            Column::Text(_) => Err(AnalysisError::Parse(format!("column {name} is not numeric"))),
        }
    }

    /// Text view; numeric columns are rendered with `Display`.
    pub fn text(&self, name: &str) -> Result<Vec<String>, AnalysisError> {
        Ok(match self.column(name)? {
            Column::Text(v) => v.clone(),
            Column::Num(v) => v.iter().map(|x| if x.is_nan() { String::new() } else { x.to_string() }).collect(),
        })
    }

    /// Error listing every absent column.
    pub fn require(&self, names: &[&str]) -> Result<(), AnalysisError> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| !self.has(n))
            .map(|n| n.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(AnalysisError::Schema { missing })
        }
    }

    /// Subset of rows where `keep` is true.
    pub fn filter(&self, keep: &[bool]) -> Frame {
        let mut out = Frame::new();
        for name in &self.order {
            let col = match &self.columns[name] {
                Column::Num(v) => Column::Num(pick(v, keep)),
                Column::Text(v) => Column::Text(pick(v, keep)),
            };
            out.insert(name, col).expect("filtered columns share a length");
        }
        out
    }
}

fn pick<T: Clone>(v: &[T], keep: &[bool]) -> Vec<T> {
    v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| x.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_types_and_blanks() {
        let f = Frame::from_csv("a,b,c\n1,x,\n2.5,y,3\n".as_bytes()).unwrap();
        assert_eq!(f.rows(), 2);
        assert_eq!(f.num("a").unwrap(), &[1.0, 2.5]);
        assert!(f.num("c").unwrap()[0].is_nan());
        assert_eq!(f.text("b").unwrap(), vec!["x", "y"]);
        assert!(f.num("b").is_err());
        match f.require(&["a", "zz", "yy"]) {
            Err(AnalysisError::Schema { missing }) => assert_eq!(missing, vec!["zz", "yy"]),
            other => panic!("{other:?}"),
        }
        let g = f.filter(&[false, true]);
        assert_eq!(g.num("a").unwrap(), &[2.5]);
        assert_eq!(g.names(), f.names());
    }
}
