use nalgebra::DMatrix;

use super::{ParseError, ParseErrorKind, PointCloud};

/// One point per line, two or three comma-separated reals.
///
/// Blank lines are skipped. An empty input yields an empty 3-D cloud.
pub fn parse_csv(bytes: &[u8]) -> Result<PointCloud, ParseError> {
    let mut coords = Vec::new();
    let mut dim: Option<usize> = None;
    let mut line_start = 0;
    for raw in bytes.split(|&b| b == b'\n') {
        let start = line_start;
        line_start += raw.len() + 1;
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let mut fields = 0;
        let mut field_start = start;
        for field in line.split(|&b| b == b',') {
            let at = field_start;
            field_start += field.len() + 1;
            fields += 1;
            if fields > 3 {
                return Err(ParseError {
                    offset: at,
                    kind: ParseErrorKind::FieldCount(fields),
                });
            }
            let text = std::str::from_utf8(field)
                .ok()
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .ok_or(ParseError {
                    offset: at,
                    kind: ParseErrorKind::BadNumber,
                })?;
            let v: f64 = text.parse().map_err(|_| ParseError {
                offset: at,
                kind: ParseErrorKind::BadNumber,
            })?;
            if !v.is_finite() {
                return Err(ParseError {
                    offset: at,
                    kind: ParseErrorKind::NonFinite,
                });
            }
            coords.push(v);
        }
        if fields < 2 {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::FieldCount(fields),
            });
        }
        match dim {
            None => dim = Some(fields),
            Some(d) if d != fields => {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::MixedDimension {
                        expected: d,
                        found: fields,
                    },
                })
            }
            Some(_) => {}
        }
    }
    let n = dim.unwrap_or(3);
    Ok(PointCloud::from_trusted(DMatrix::from_column_slice(
        n,
        coords.len() / n,
        &coords,
    )))
}

/// Inverse of [`parse_csv`]; reals use the shortest round-tripping form.
pub fn write_csv(cloud: &PointCloud) -> Vec<u8> {
    let mut out = String::new();
    for col in cloud.points().column_iter() {
        let fields: Vec<String> = col.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_single() {
        let c = parse_csv(b"").unwrap();
        assert!(c.is_empty());
        assert_eq!(c.points().nrows(), 3);
        let c = parse_csv(b"1,2,3").unwrap();
        assert_eq!(c.points().column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn planar_rows_with_crlf() {
        let c = parse_csv(b"1, 2\r\n\r\n-3.5,4e1\r\n").unwrap();
        assert_eq!(c.points(), &DMatrix::from_column_slice(2, 2, &[1.0, 2.0, -3.5, 40.0]));
    }

    #[test]
    fn error_offsets() {
        let e = parse_csv(b"1,2,3\n4,x,6\n").unwrap_err();
        assert_eq!((e.offset, e.kind), (8, ParseErrorKind::BadNumber));
        let e = parse_csv(b"1,2,3\n4,5\n").unwrap_err();
        assert_eq!(e.offset, 6);
        assert!(matches!(
            e.kind,
            ParseErrorKind::MixedDimension { expected: 3, found: 2 }
        ));
        let e = parse_csv(b"1,2,3,4\n").unwrap_err();
        assert_eq!((e.offset, e.kind), (6, ParseErrorKind::FieldCount(4)));
        let e = parse_csv(b"7\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::FieldCount(1));
        assert_eq!(parse_csv(b"inf,0\n").unwrap_err().kind, ParseErrorKind::NonFinite);
    }
}
