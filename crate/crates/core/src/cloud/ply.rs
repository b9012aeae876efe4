//! PLY reader and writer for point clouds.
//!
//! Reads ASCII and binary little-endian files. Only the `vertex` element is
//! interpreted: `x`, `y`, `z` and optionally `nx`, `ny`, `nz`; any other
//! vertex property is skipped, as are elements other than `vertex`, provided
//! that in binary files those other elements carry no list properties when
//! they precede the vertices. The writer always emits binary little-endian
//! with `double` properties.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
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
    fn parse(name: &str) -> Option<Scalar> {
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
    List,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: Format,
    elements: Vec<Element>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("ply: {}", msg.into()))
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<Option<String>> {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|e| parse_err(format!("reading header: {e}")))?;
        Ok((n > 0).then(|| line.trim_end_matches(['\r', '\n']).to_string()))
    };
    if next_line(r)?.as_deref() != Some("ply") {
        return Err(parse_err("missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(l) = next_line(r)? else {
            return Err(parse_err("header ended before 'end_header'"));
        };
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLittleEndian),
            ["format", other, ..] => return Err(parse_err(format!("unsupported format '{other}'"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", ..] => elements
                .last_mut()
                .ok_or_else(|| parse_err("property before element"))?
                .properties
                .push(Property::List),
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| parse_err(format!("unknown property type '{ty}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err("property before element"))?
                    .properties
                    .push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
            }
            ["end_header"] => break,
            _ => return Err(parse_err(format!("unexpected header line '{l}'"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| parse_err("missing format line"))?,
        elements,
    })
}

/// Column positions of the fields we read within a vertex record.
struct VertexLayout {
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
}

impl VertexLayout {
    fn new(element: &Element) -> Result<Self> {
        let position = |want: &str| {
            element.properties.iter().position(
                |p| matches!(p, Property::Scalar { name, .. } if name == want),
            )
        };
        let xyz = [position("x"), position("y"), position("z")];
        let [Some(x), Some(y), Some(z)] = xyz else {
            return Err(parse_err("vertex element lacks x, y or z"));
        };
        let normal = match [position("nx"), position("ny"), position("nz")] {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            _ => None,
        };
        Ok(Self {
            xyz: [x, y, z],
            normal,
        })
    }
}

fn assemble(points: Vec<Vector3<f64>>, normals: Option<Vec<Vector3<f64>>>) -> Result<PointCloud> {
    match normals {
        Some(ns) => {
            // Normals written by other tools are often only roughly unit.
            let ns = ns
                .into_iter()
                .map(|n| {
                    let len = n.norm();
                    if len > 0.0 && (len - 1.0).abs() > 1e-9 {
                        n / len
                    } else {
                        n
                    }
                })
                .collect();
            PointCloud::with_normals(points, ns)
        }
        None => PointCloud::new(points),
    }
}

fn read_ascii<R: BufRead>(r: &mut R, header: &Header) -> Result<PointCloud> {
    let mut lines = r.lines();
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    for element in &header.elements {
        if element.name != "vertex" {
            for _ in 0..element.count {
                lines
                    .next()
                    .ok_or_else(|| parse_err(format!("truncated '{}' element", element.name)))?
                    .map_err(|e| parse_err(e.to_string()))?;
            }
            continue;
        }
        if element.properties.iter().any(|p| matches!(p, Property::List)) {
            return Err(parse_err("list properties on vertices are not supported"));
        }
        let layout = VertexLayout::new(element)?;
        has_normals = layout.normal.is_some();
        points.reserve(element.count);
        for i in 0..element.count {
            let line = lines
                .next()
                .ok_or_else(|| parse_err(format!("expected {} vertices, got {i}", element.count)))?
                .map_err(|e| parse_err(e.to_string()))?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(format!("bad number in vertex line {i}")))?;
            if values.len() < element.properties.len() {
                return Err(parse_err(format!("vertex line {i} has too few values")));
            }
            let [x, y, z] = layout.xyz;
            points.push(Vector3::new(values[x], values[y], values[z]));
            if let Some([a, b, c]) = layout.normal {
                normals.push(Vector3::new(values[a], values[b], values[c]));
            }
        }
        break;
    }
    assemble(points, has_normals.then_some(normals))
}

fn read_binary<R: Read>(r: &mut R, header: &Header) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    let read_exact = |r: &mut R, buf: &mut [u8]| {
        r.read_exact(buf)
            .map_err(|e| parse_err(format!("truncated binary body: {e}")))
    };
    for element in &header.elements {
        let mut offsets = Vec::with_capacity(element.properties.len());
        let mut stride = 0;
        for p in &element.properties {
            match p {
                Property::Scalar { ty, .. } => {
                    offsets.push((stride, *ty));
                    stride += ty.size();
                }
                Property::List => {
                    if element.name == "vertex" {
                        return Err(parse_err("list properties on vertices are not supported"));
                    }
                    return Err(parse_err(format!(
                        "cannot skip list property of '{}' before the vertices",
                        element.name
                    )));
                }
            }
        }
        let mut record = vec![0u8; stride];
        if element.name != "vertex" {
            for _ in 0..element.count {
                read_exact(r, &mut record)?;
            }
            continue;
        }
        let layout = VertexLayout::new(element)?;
        has_normals = layout.normal.is_some();
        let field = |record: &[u8], k: usize| {
            let (off, ty) = offsets[k];
            ty.read_le(&record[off..off + ty.size()])
        };
        points.reserve(element.count);
        for _ in 0..element.count {
            read_exact(r, &mut record)?;
            let [x, y, z] = layout.xyz;
            points.push(Vector3::new(field(&record, x), field(&record, y), field(&record, z)));
            if let Some([a, b, c]) = layout.normal {
                normals.push(Vector3::new(field(&record, a), field(&record, b), field(&record, c)));
            }
        }
        break;
    }
    assemble(points, has_normals.then_some(normals))
}

/// Parses a PLY stream.
pub fn read_ply_from<R: BufRead>(mut r: R) -> Result<PointCloud> {
    let header = read_header(&mut r)?;
    if !header.elements.iter().any(|e| e.name == "vertex") {
        return Err(parse_err("no vertex element"));
    }
    match header.format {
        Format::Ascii => read_ascii(&mut r, &header),
        Format::BinaryLittleEndian => read_binary(&mut r, &header),
    }
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(BufReader::new(file)).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes binary little-endian PLY with `double` properties.
pub fn write_ply_to<W: Write>(mut w: W, cloud: &PointCloud) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property double {axis}")?;
    }
    if cloud.normals().is_some() {
        for axis in ["nx", "ny", "nz"] {
            writeln!(w, "property double {axis}")?;
        }
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        for v in p.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(ns) = cloud.normals() {
            for v in ns[i].iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply_to(BufWriter::new(file), cloud).map_err(|e| Error::io(path, e))
}
