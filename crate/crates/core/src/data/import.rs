//! Comma-separated feature tables for externally pooled vectors.
//!
//! A header row is required. Each data row is
//! `subject_id,site_id,label,v0,...,v{6D-1}` with label 0/HC or 1/PD.
//! Row numbers in errors are 1-based file lines (the header is line 1).

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, ImportError, Result};
use crate::pool::{FeatureVector, Label, STATISTICS};

const KEY_COLUMNS: usize = 3;

pub fn import_features(path: impl AsRef<Path>, embedding_dim: usize) -> Result<Vec<FeatureVector>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(file, embedding_dim)
}

pub fn parse_features(reader: impl Read, embedding_dim: usize) -> Result<Vec<FeatureVector>> {
    let width = STATISTICS * embedding_dim;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows = csv.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::Import { row: 1, kind: ImportError::Csv(e.to_string()) }),
        None => return Err(Error::Import { row: 1, kind: ImportError::Header }),
    };
    if header.get(0) != Some("subject_id") || header.get(1) != Some("site_id") || header.get(2) != Some("label") {
        return Err(Error::Import { row: 1, kind: ImportError::Header });
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Import {
            row: line,
            kind: ImportError::Csv(e.to_string()),
        })?;
        let fail = |kind| Error::Import { row: line, kind };
        let found = row.len().saturating_sub(KEY_COLUMNS);
        if row.len() < KEY_COLUMNS || found != width {
            return Err(fail(ImportError::Width { expected: width, found }));
        }
        let subject_id = row[0].to_string();
        let site_id = row[1].to_string();
        let label = match row[2].parse::<Label>().ok() {
            Some(l) => l,
            None => return Err(fail(ImportError::Label(row[2].to_string()))),
        };
        let values = row
            .iter()
            .skip(KEY_COLUMNS)
            .map(|cell| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(fail(ImportError::Value(cell.to_string()))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if !seen.insert((subject_id.clone(), site_id.clone())) {
            return Err(fail(ImportError::Duplicate {
                subject: subject_id,
                site: site_id,
            }));
        }
        out.push(FeatureVector {
            values,
            label,
            subject_id,
            site_id,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &str, &str, usize)]) -> String {
        let d = 2;
        let mut s = String::from("subject_id,site_id,label");
        for k in 0..STATISTICS * d {
            s.push_str(&format!(",f{k}"));
        }
        s.push('\n');
        for (subj, site, label, width) in rows {
            s.push_str(&format!("{subj},{site},{label}"));
            for k in 0..*width {
                s.push_str(&format!(",{}", k as f64 * 0.5));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn well_formed() {
        let t = table(&[("a", "x", "0", 12), ("b", "x", "1", 12), ("a", "y", "1", 12)]);
        let v = parse_features(t.as_bytes(), 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[1].label, Label::Parkinson);
        assert_eq!(v[2].values[3], 1.5);
    }

    #[test]
    fn width_error_cites_row() {
        let t = table(&[("a", "x", "0", 12), ("b", "x", "1", 11)]);
        match parse_features(t.as_bytes(), 2) {
            Err(Error::Import {
                row: 3,
                kind: ImportError::Width { expected: 12, found: 11 },
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reference_width_off_by_one() {
        let mut s = String::from("subject_id,site_id,label\ns,x,1");
        for _ in 0..4607 {
            s.push_str(",0.0");
        }
        let err = parse_features(s.as_bytes(), 768).unwrap_err();
        assert!(matches!(
            err,
            Error::Import {
                row: 2,
                kind: ImportError::Width { expected: 4608, found: 4607 }
            }
        ));
    }

    #[test]
    fn duplicate_and_label_errors() {
        let t = table(&[("a", "x", "0", 12), ("a", "x", "1", 12)]);
        assert!(matches!(
            parse_features(t.as_bytes(), 2),
            Err(Error::Import { row: 3, kind: ImportError::Duplicate { .. } })
        ));
        let t = table(&[("a", "x", "2", 12)]);
        assert!(matches!(
            parse_features(t.as_bytes(), 2),
            Err(Error::Import { row: 2, kind: ImportError::Label(_) })
        ));
        assert!(matches!(
            parse_features("".as_bytes(), 2),
            Err(Error::Import { row: 1, kind: ImportError::Header })
        ));
    }
}
