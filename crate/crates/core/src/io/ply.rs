use std::path::Path;

use super::{parse_error, read_bytes, unit_normals, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar, String),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(_, n) | Property::List(_, _, n) => n,
        }
    }
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Clone, Debug)]
enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Line number of the first body line (ASCII only).
    body_line: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_error(path, line_no + 1, "header not terminated by end_header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| parse_error(path, line_no + 1, "header is not UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        pos += end + 1;
        line_no += 1;
        let err = |msg: &str| parse_error(path, line_no, format!("{msg}: `{line}`"));
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err("missing `ply` magic"));
            }
            continue;
        }
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLittleEndian),
            ["format", ..] => return Err(err("unsupported format")),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| err("bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err("property before element"))?;
                let c = Scalar::parse(count).ok_or_else(|| err("unknown list count type"))?;
                let t = Scalar::parse(item).ok_or_else(|| err("unknown list item type"))?;
                el.properties.push(Property::List(c, t, name.to_string()));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err("property before element"))?;
                let t = Scalar::parse(ty).ok_or_else(|| err("unknown property type"))?;
                el.properties.push(Property::Scalar(t, name.to_string()));
            }
            ["end_header"] => break,
            _ => return Err(err("unrecognised header line")),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| parse_error(path, line_no, "missing format line"))?,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

/// Every element's items in file order.
fn read_body(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<Vec<Vec<Value>>>> {
    match header.encoding {
        Encoding::Ascii => read_ascii(path, bytes, header),
        Encoding::BinaryLittleEndian => read_binary(path, bytes, header),
    }
}

fn read_ascii(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<Vec<Vec<Value>>>> {
    let text = std::str::from_utf8(&bytes[header.body..])
        .map_err(|_| parse_error(path, header.body_line, "ASCII body is not UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header.body_line + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut out = Vec::with_capacity(header.elements.len());
    for el in &header.elements {
        let mut items = Vec::with_capacity(el.count.min(1 << 20));
        for _ in 0..el.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                parse_error(
                    path,
                    header.body_line,
                    format!("missing `{}` data", el.name),
                )
            })?;
            let mut tokens = line.split_whitespace();
            let mut next = || -> Result<f64> {
                let t = tokens
                    .next()
                    .ok_or_else(|| parse_error(path, line_no, "too few values"))?;
                t.parse()
                    .map_err(|_| parse_error(path, line_no, format!("bad number `{t}`")))
            };
            let mut item = Vec::with_capacity(el.properties.len());
            for p in &el.properties {
                item.push(match p {
                    Property::Scalar(..) => Value::Scalar(next()?),
                    Property::List(..) => {
                        let n = next()?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(parse_error(path, line_no, "bad list length"));
                        }
                        Value::List((0..n as usize).map(|_| next()).collect::<Result<_>>()?)
                    }
                });
            }
            if tokens.next().is_some() {
                return Err(parse_error(path, line_no, "too many values"));
            }
            items.push(item);
        }
        out.push(items);
    }
    Ok(out)
}

fn read_binary(path: &Path, bytes: &[u8], header: &Header) -> Result<Vec<Vec<Vec<Value>>>> {
    let mut pos = header.body;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(parse_error(
                path,
                header.body_line,
                format!("truncated binary body in {what}"),
            ));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    let mut out = Vec::with_capacity(header.elements.len());
    for el in &header.elements {
        let mut items = Vec::with_capacity(el.count.min(1 << 20));
        for _ in 0..el.count {
            let mut item = Vec::with_capacity(el.properties.len());
            for p in &el.properties {
                item.push(match p {
                    Property::Scalar(t, _) => Value::Scalar(t.decode(take(t.size(), &el.name)?)),
                    Property::List(c, t, _) => {
                        let n = c.decode(take(c.size(), &el.name)?);
                        if n < 0.0 {
                            return Err(parse_error(
                                path,
                                header.body_line,
                                "negative list length",
                            ));
                        }
                        let raw = take(n as usize * t.size(), &el.name)?;
                        Value::List(raw.chunks_exact(t.size()).map(|b| t.decode(b)).collect())
                    }
                });
            }
            items.push(item);
        }
        out.push(items);
    }
    Ok(out)
}

struct Parsed {
    points: Vec<Point3>,
    normals: Option<Vec<Point3>>,
    faces: Option<Vec<Vec<f64>>>,
}

fn parse(path: &Path) -> Result<Parsed> {
    let bytes = read_bytes(path)?;
    let header = parse_header(path, &bytes)?;
    let body = read_body(path, &bytes, &header)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_error(path, 0, "no vertex element"))?;
    let vertex = &header.elements[vi];
    let column = |name: &str| vertex.properties.iter().position(|p| p.name() == name);
    let scalar = |item: &[Value], c: usize| match &item[c] {
        Value::Scalar(v) => Ok(*v),
        Value::List(_) => Err(parse_error(path, 0, "list property used as a coordinate")),
    };
    let xyz = ["x", "y", "z"]
        .map(column)
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| parse_error(path, 0, "vertex element lacks x/y/z"))?;
    let nxyz = ["nx", "ny", "nz"]
        .map(column)
        .into_iter()
        .collect::<Option<Vec<_>>>();
    let mut points = Vec::with_capacity(vertex.count);
    let mut normals = Vec::new();
    for item in &body[vi] {
        points.push([
            scalar(item, xyz[0])?,
            scalar(item, xyz[1])?,
            scalar(item, xyz[2])?,
        ]);
        if let Some(n) = &nxyz {
            normals.push([
                scalar(item, n[0])?,
                scalar(item, n[1])?,
                scalar(item, n[2])?,
            ]);
        }
    }
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(parse_error(path, 0, "non-finite vertex coordinate"));
    }
    let faces = header
        .elements
        .iter()
        .position(|e| e.name == "face")
        .map(|fi| {
            let col = header.elements[fi].properties.iter().position(|p| {
                matches!(p, Property::List(..))
                    && (p.name() == "vertex_indices" || p.name() == "vertex_index")
            });
            body[fi]
                .iter()
                .filter_map(|item| match col.map(|c| &item[c]) {
                    Some(Value::List(l)) => Some(l.clone()),
                    _ => None,
                })
                .collect()
        });
    Ok(Parsed {
        points,
        normals: nxyz.map(|_| normals),
        faces,
    })
}

/// Vertex positions, plus normals when `nx/ny/nz` are present. Other
/// elements are ignored.
pub fn read_ply_cloud(path: &Path) -> Result<PointCloud> {
    let p = parse(path)?;
    let normals = p.normals.map(|n| unit_normals(path, n)).transpose()?;
    Ok(PointCloud {
        points: p.points,
        normals,
    })
}

/// Vertices and faces; polygons are fan-triangulated.
pub fn read_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let p = parse(path)?;
    let faces = p
        .faces
        .ok_or_else(|| parse_error(path, 0, "no face element"))?;
    let mut triangles = Vec::with_capacity(faces.len());
    for f in faces {
        if f.len() < 3 {
            return Err(parse_error(path, 0, "face with fewer than three vertices"));
        }
        let idx: Vec<usize> = f
            .iter()
            .map(|&v| {
                if v >= 0.0 && (v as usize) < p.points.len() {
                    Ok(v as usize)
                } else {
                    Err(parse_error(path, 0, format!("face index {v} out of range")))
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    TriangleMesh::new(p.points, triangles).map_err(|e| parse_error(path, 0, e.to_string()))
}

fn header(vertices: usize, normals: bool, faces: Option<usize>) -> String {
    let mut h = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {vertices}\nproperty double x\nproperty double y\nproperty double z\n"
    );
    if normals {
        h.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if let Some(f) = faces {
        h.push_str(&format!(
            "element face {f}\nproperty list uchar int vertex_indices\n"
        ));
    }
    h.push_str("end_header\n");
    h
}

/// Binary little-endian with `double` coordinates, so values round-trip
/// bit-exactly.
pub fn write_ply_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = header(cloud.len(), cloud.has_normals(), None).into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        p.iter()
            .for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
        if let Some(n) = &cloud.normals {
            n[i].iter()
                .for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
        }
    }
    write_bytes(path, &out)
}

pub fn write_ply_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    if mesh.vertices.len() > i32::MAX as usize {
        return Err(Error::Format(
            "too many vertices for 32-bit PLY indices".into(),
        ));
    }
    let mut out = header(mesh.vertices.len(), false, Some(mesh.triangles.len())).into_bytes();
    for v in &mesh.vertices {
        v.iter()
            .for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
    }
    for t in &mesh.triangles {
        out.push(3);
        t.iter()
            .for_each(|&i| out.extend_from_slice(&(i as i32).to_le_bytes()));
    }
    write_bytes(path, &out)
}
