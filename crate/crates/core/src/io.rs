//! Text formats for meshes and fields.
//!
//! ```text
//! mesh 2d
//! v <x> <y> <b>        # b = 1 on the boundary
//! t <i> <j> <k>        # 0-based, counterclockwise
//! ```
//!
//! ```text
//! field scalar|vector|matrix cell|vertex
//! <one line per entity>   # matrices as a11 a12 a22
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::Sym2;
use crate::geometry::Mesh;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

/// Meaningful lines with their 1-based numbers; `#` starts a comment.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn numbers<T: std::str::FromStr>(line: usize, items: &[&str]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| s.parse().map_err(|_| parse_err(line, format!("bad number '{s}'"))))
        .collect()
}

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::from("mesh 2d\n");
    for (i, v) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], mesh.is_boundary(i) as u8);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "t {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// Boundary flags in the file must agree with the mesh topology.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut it = lines(text);
    match it.next() {
        Some((_, "mesh 2d")) => {}
        Some((n, _)) => return Err(parse_err(n, "expected header 'mesh 2d'")),
        None => return Err(parse_err(1, "empty mesh file")),
    }
    let mut vertices = Vec::new();
    let mut flags = Vec::new();
    let mut triangles = Vec::new();
    for (n, l) in it {
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["v", rest @ ..] if rest.len() == 3 => {
                if !triangles.is_empty() {
                    return Err(parse_err(n, "vertex after triangles"));
                }
                let xy: Vec<f64> = numbers(n, &rest[..2])?;
                let b: u8 = numbers(n, &rest[2..])?[0];
                if b > 1 {
                    return Err(parse_err(n, "boundary flag must be 0 or 1"));
                }
                vertices.push([xy[0], xy[1]]);
                flags.push((n, b == 1));
            }
            ["t", rest @ ..] if rest.len() == 3 => {
                let ijk: Vec<usize> = numbers(n, rest)?;
                if let Some(&k) = ijk.iter().find(|&&k| k >= vertices.len()) {
                    return Err(parse_err(n, format!("vertex index {k} out of range")));
                }
                triangles.push([ijk[0], ijk[1], ijk[2]]);
            }
            _ => return Err(parse_err(n, format!("unrecognized line '{l}'"))),
        }
    }
    let mesh = Mesh::new(vertices, triangles)?;
    for (i, (n, b)) in flags.into_iter().enumerate() {
        if mesh.is_boundary(i) != b {
            return Err(parse_err(n, format!("boundary flag of vertex {i} disagrees with the mesh topology")));
        }
    }
    Ok(mesh)
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Cell,
    Vertex,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    Scalar(Vec<f64>),
    Vector(Vec<[f64; 2]>),
    Matrix(Vec<Sym2>),
}

impl FieldData {
    pub fn len(&self) -> usize {
        match self {
            FieldData::Scalar(v) => v.len(),
            FieldData::Vector(v) => v.len(),
            FieldData::Matrix(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub location: Location,
    pub data: FieldData,
}

impl FieldFile {
    /// Number of entities the field should have on `mesh`.
    pub fn matches(&self, mesh: &Mesh) -> bool {
        let n = match self.location {
            Location::Cell => mesh.num_cells(),
            Location::Vertex => mesh.num_vertices(),
        };
        self.data.len() == n
    }
}

pub fn field_to_string(field: &FieldFile) -> String {
    let loc = match field.location {
        Location::Cell => "cell",
        Location::Vertex => "vertex",
    };
    let mut s = String::new();
    match &field.data {
        FieldData::Scalar(v) => {
            let _ = writeln!(s, "field scalar {loc}");
            v.iter().for_each(|x| {
                let _ = writeln!(s, "{x}");
            });
        }
        FieldData::Vector(v) => {
            let _ = writeln!(s, "field vector {loc}");
            v.iter().for_each(|x| {
                let _ = writeln!(s, "{} {}", x[0], x[1]);
            });
        }
        FieldData::Matrix(v) => {
            let _ = writeln!(s, "field matrix {loc}");
            v.iter().for_each(|m| {
                let _ = writeln!(s, "{} {} {}", m.a11, m.a12, m.a22);
            });
        }
    }
    s
}

pub fn parse_field(text: &str) -> Result<FieldFile> {
    let mut it = lines(text);
    let (hn, header) = it.next().ok_or_else(|| parse_err(1, "empty field file"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (kind, location) = match parts.as_slice() {
        ["field", kind, loc] => {
            let location = match *loc {
                "cell" => Location::Cell,
                "vertex" => Location::Vertex,
                _ => return Err(parse_err(hn, format!("unknown location '{loc}'"))),
            };
            (*kind, location)
        }
        _ => return Err(parse_err(hn, "expected header 'field <kind> <location>'")),
    };
    let width = match kind {
        "scalar" => 1,
        "vector" => 2,
        "matrix" => 3,
        _ => return Err(parse_err(hn, format!("unknown field kind '{kind}'"))),
    };
    let mut rows = Vec::new();
    for (n, l) in it {
        let items: Vec<&str> = l.split_whitespace().collect();
        if items.len() != width {
            return Err(parse_err(n, format!("expected {width} value(s), got {}", items.len())));
        }
        rows.push(numbers::<f64>(n, &items)?);
    }
    let data = match width {
        1 => FieldData::Scalar(rows.into_iter().map(|r| r[0]).collect()),
        2 => FieldData::Vector(rows.into_iter().map(|r| [r[0], r[1]]).collect()),
        _ => FieldData::Matrix(rows.into_iter().map(|r| Sym2::new(r[0], r[1], r[2])).collect()),
    };
    Ok(FieldFile { location, data })
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    parse_field(&std::fs::read_to_string(path)?)
}

pub fn write_field(path: &Path, field: &FieldFile) -> Result<()> {
    std::fs::write(path, field_to_string(field))?;
    Ok(())
}
