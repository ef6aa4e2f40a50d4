use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{ParseError, ParseErrorKind, PointCloud};

/// Upper bound on elements reserved before the body has been seen.
const PREALLOC_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn err(offset: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { offset, kind }
}

fn header_err(offset: usize, msg: impl Into<String>) -> ParseError {
    err(offset, ParseErrorKind::Header(msg.into()))
}

fn parse_header(bytes: &[u8]) -> Result<Header, ParseError> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, &str), ParseError> {
        let start = *pos;
        let rest = &bytes[start..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(err(bytes.len(), ParseErrorKind::Truncated));
        };
        *pos = start + nl + 1;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| header_err(start, "header is not valid UTF-8"))?;
        Ok((start, line.trim_end_matches('\r')))
    };

    let (_, magic) = next_line(&mut pos)?;
    if magic != "ply" {
        return Err(header_err(0, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (at, line) = next_line(&mut pos)?;
        let mut words = line.split_ascii_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let f = match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err(err(at, ParseErrorKind::Unsupported(format!("format {other}")))),
                    None => return Err(header_err(at, "format line without a format")),
                };
                if words.next() != Some("1.0") {
                    return Err(header_err(at, "unsupported format version"));
                }
                format = Some(f);
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| header_err(at, "element without a name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| header_err(at, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err(at, "property before any element"))?;
                let ty = words.next().ok_or_else(|| header_err(at, "property without a type"))?;
                let prop = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    match (count, item, words.next()) {
                        (Some(count), Some(item), Some(_)) if !count.is_float() => Property::List { count, item },
                        _ => return Err(header_err(at, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| err(at, ParseErrorKind::Unsupported(format!("property type {ty}"))))?;
                    let name = words.next().ok_or_else(|| header_err(at, "property without a name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(header_err(at, format!("unknown header keyword {other}"))),
        }
    }
    let format = format.ok_or_else(|| header_err(0, "no format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: pos,
    })
}

/// Indices of x, y and (optionally) z within the vertex properties.
fn vertex_columns(element: &Element, at: usize) -> Result<[Option<usize>; 3], ParseError> {
    let mut cols = [None; 3];
    for (i, p) in element.properties.iter().enumerate() {
        if let Property::Scalar { name, ty } = p {
            let slot = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            if !ty.is_float() {
                return Err(err(
                    at,
                    ParseErrorKind::Unsupported(format!("vertex {name} must be float or double")),
                ));
            }
            if cols[slot].is_some() {
                return Err(header_err(at, format!("duplicate vertex property {name}")));
            }
            cols[slot] = Some(i);
        }
    }
    if cols[0].is_none() || cols[1].is_none() {
        return Err(header_err(at, "vertex element lacks x or y"));
    }
    Ok(cols)
}

struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Body<'_> {
    fn ascii_token(&mut self) -> Result<(usize, &str), ParseError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err(start, ParseErrorKind::Truncated));
        }
        let tok =
            std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| err(start, ParseErrorKind::BadNumber))?;
        Ok((start, tok))
    }

    fn ascii_value(&mut self, ty: Scalar) -> Result<(usize, f64), ParseError> {
        let (at, tok) = self.ascii_token()?;
        let v = if ty.is_float() {
            tok.parse::<f64>().ok()
        } else {
            tok.parse::<i64>().ok().map(|v| v as f64)
        };
        v.map(|v| (at, v)).ok_or_else(|| err(at, ParseErrorKind::BadNumber))
    }

    fn binary_value(&mut self, ty: Scalar) -> Result<(usize, f64), ParseError> {
        let at = self.pos;
        let end = at
            .checked_add(ty.size())
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| err(self.bytes.len(), ParseErrorKind::Truncated))?;
        self.pos = end;
        Ok((at, ty.read_le(&self.bytes[at..end])))
    }

    fn value(&mut self, format: Format, ty: Scalar) -> Result<(usize, f64), ParseError> {
        match format {
            Format::Ascii => self.ascii_value(ty),
            Format::BinaryLe => self.binary_value(ty),
        }
    }

    fn list_len(&mut self, format: Format, ty: Scalar) -> Result<usize, ParseError> {
        let (at, v) = self.value(format, ty)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(err(at, ParseErrorKind::BadNumber));
        }
        Ok(v as usize)
    }
}

/// Parses vertex positions from an ASCII or binary little-endian PLY file.
///
/// Elements other than `vertex` and non-coordinate properties are skipped.
/// The cloud is 3-D when a `z` property exists and planar otherwise.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, ParseError> {
    let header = parse_header(bytes)?;
    let vertex = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err(0, "no vertex element"))?;
    let cols = vertex_columns(&header.elements[vertex], 0)?;
    let n = if cols[2].is_some() { 3 } else { 2 };
    let count = header.elements[vertex].count;

    let mut coords: Vec<f64> = Vec::with_capacity(count.min(PREALLOC_LIMIT).saturating_mul(n));
    let mut body = Body {
        bytes,
        pos: header.body_offset,
    };
    for (ei, element) in header.elements.iter().enumerate() {
        if ei > vertex {
            // Nothing after the vertices is needed.
            break;
        }
        for _ in 0..element.count {
            let mut point = [0.0; 3];
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let (at, v) = body.value(header.format, *ty)?;
                        if ei == vertex {
                            if let Some(slot) = cols.iter().position(|c| *c == Some(pi)) {
                                if !v.is_finite() {
                                    return Err(err(at, ParseErrorKind::NonFinite));
                                }
                                point[slot] = v;
                            }
                        }
                    }
                    Property::List { count, item } => {
                        let len = body.list_len(header.format, *count)?;
                        for _ in 0..len {
                            body.value(header.format, *item)?;
                        }
                    }
                }
            }
            if ei == vertex {
                coords.extend_from_slice(&point[..n]);
            }
        }
    }
    let points = DMatrix::from_column_slice(n, coords.len() / n, &coords);
    Ok(PointCloud::from_trusted(points))
}

fn write_header(cloud: &PointCloud, format: &str, ty: &str) -> String {
    let mut h = String::new();
    writeln!(h, "ply\nformat {format} 1.0\nelement vertex {}", cloud.len()).unwrap();
    for axis in ["x", "y", "z"].iter().take(cloud.points().nrows()) {
        writeln!(h, "property {ty} {axis}").unwrap();
    }
    h.push_str("end_header\n");
    h
}

/// ASCII PLY; coordinates use the shortest round-tripping decimal form.
pub fn write_ply_ascii(cloud: &PointCloud) -> Vec<u8> {
    let mut out = write_header(cloud, "ascii", "double");
    for col in cloud.points().column_iter() {
        let line: Vec<String> = col.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_ply_binary(cloud: &PointCloud) -> Vec<u8> {
    let mut out = write_header(cloud, "binary_little_endian", "double").into_bytes();
    for v in cloud.points().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_ascii_vertex() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        let cloud = parse_ply(src).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points().column(0).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn truncated_body_reports_end_offset() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        let e = parse_ply(src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Truncated);
        assert_eq!(e.offset, src.len());
    }

    #[test]
    fn binary_truncation_offset() {
        let mut src = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            src.extend_from_slice(&v.to_le_bytes());
        }
        let e = parse_ply(&src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Truncated);
        assert_eq!(e.offset, src.len());
    }

    #[test]
    fn skips_faces_and_extra_properties() {
        let src = b"ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n0 0 0 255\n1 0 0 0\n0 1 0 9\n";
        assert_eq!(parse_ply(src).unwrap().len(), 3);
        let src = b"ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let cloud = parse_ply(src).unwrap();
        assert_eq!(cloud.points()[(1, 2)], 1.0);
    }

    #[test]
    fn rejects_integer_coordinates() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\nend_header\n0 0 0\n";
        assert!(matches!(
            parse_ply(src).unwrap_err().kind,
            ParseErrorKind::Unsupported(_)
        ));
    }

    #[test]
    fn rejects_big_endian_and_nan() {
        let src = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(
            parse_ply(src).unwrap_err().kind,
            ParseErrorKind::Unsupported(_)
        ));
        let src = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\nNaN 0\n";
        let e = parse_ply(src).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonFinite);
        assert_eq!(e.offset, src.len() - 6);
    }

    #[test]
    fn huge_declared_count_fails_cleanly() {
        let src = b"ply\nformat binary_little_endian 1.0\nelement vertex 18446744073709551615\nproperty double x\nproperty double y\nend_header\n";
        assert_eq!(parse_ply(src).unwrap_err().kind, ParseErrorKind::Truncated);
    }

    #[test]
    fn writers_reparse() {
        let pts = DMatrix::from_column_slice(3, 2, &[0.1, -2.5, 1e-300, 3.0, 0.3333333333333333, -0.0]);
        let cloud = PointCloud::new(pts.clone()).unwrap();
        assert_eq!(parse_ply(&write_ply_ascii(&cloud)).unwrap().points(), &pts);
        assert_eq!(parse_ply(&write_ply_binary(&cloud)).unwrap().points(), &pts);
    }
}
