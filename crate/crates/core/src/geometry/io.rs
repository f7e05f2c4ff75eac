//! ASCII OBJ and binary little-endian PLY mesh files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;
use crate::error::GeometryError;

/// Load a mesh by file extension (`.obj` or `.ply`).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, GeometryError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "obj" => {
            let text = String::from_utf8(bytes)
                .map_err(|_| GeometryError::UnsupportedFormat("OBJ is not UTF-8".into()))?;
            parse_obj(&text)
        }
        "ply" => parse_ply(&bytes),
        other => Err(GeometryError::UnsupportedFormat(format!(
            "unknown mesh extension {other:?}"
        ))),
    }
}

fn obj_index(tok: &str, count: usize, line: usize) -> Result<usize, GeometryError> {
    let raw: i64 = tok.parse().map_err(|_| GeometryError::Parse {
        line,
        msg: format!("bad index {tok:?}"),
    })?;
    let idx = if raw < 0 { count as i64 + raw } else { raw - 1 };
    if idx < 0 || idx as usize >= count {
        return Err(GeometryError::IndexOutOfRange {
            index: raw.unsigned_abs() as usize,
            count,
        });
    }
    Ok(idx as usize)
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut vn = Vec::new();
    let mut triangles = Vec::new();
    // (vertex, normal) pairs referenced by faces
    let mut corner_normals: Vec<(usize, usize)> = Vec::new();
    let mut faces_without_normals = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let mut toks = raw.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        let parse3 = |toks: &mut std::str::SplitWhitespace<'_>| -> Result<[f64; 3], GeometryError> {
            let mut out = [0.0; 3];
            for o in &mut out {
                let t = toks.next().ok_or_else(|| GeometryError::Parse {
                    line,
                    msg: "expected 3 coordinates".into(),
                })?;
                *o = t.parse().map_err(|_| GeometryError::Parse {
                    line,
                    msg: format!("bad number {t:?}"),
                })?;
            }
            Ok(out)
        };
        match tag {
            "v" => {
                let [x, y, z] = parse3(&mut toks)?;
                vertices.push(Point3::new(x, y, z));
            }
            "vn" => {
                let [x, y, z] = parse3(&mut toks)?;
                vn.push(Vector3::new(x, y, z));
            }
            "f" => {
                let corners: Vec<&str> = toks.collect();
                if corners.len() != 3 {
                    return Err(GeometryError::NonTriangleFace(corners.len()));
                }
                let mut tri = [0u32; 3];
                for (k, c) in corners.iter().enumerate() {
                    let mut parts = c.split('/');
                    let vi = obj_index(parts.next().unwrap_or(""), vertices.len(), line)?;
                    tri[k] = vi as u32;
                    let _uv = parts.next();
                    match parts.next() {
                        Some(n) if !n.is_empty() => {
                            let ni = obj_index(n, vn.len(), line)?;
                            corner_normals.push((vi, ni));
                        }
                        _ => faces_without_normals = true,
                    }
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }

    let normals = if !faces_without_normals && !corner_normals.is_empty() {
        let mut ns = vec![None; vertices.len()];
        for (vi, ni) in corner_normals {
            ns[vi] = Some(vn[ni]);
        }
        ns.into_iter().collect::<Option<Vec<_>>>()
    } else if vn.len() == vertices.len() && !vn.is_empty() {
        Some(vn)
    } else {
        None
    };
    TriangleMesh::new(vertices, triangles, normals)
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GeometryError> {
        let end = self.pos + n;
        let s = self.data.get(self.pos..end).ok_or(GeometryError::Parse {
            line: 0,
            msg: "unexpected end of PLY body".into(),
        })?;
        self.pos = end;
        Ok(s)
    }

    fn scalar(&mut self, s: Scalar) -> Result<f64, GeometryError> {
        Ok(s.read(self.take(s.size())?))
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh, GeometryError> {
    const END: &[u8] = b"end_header\n";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| GeometryError::UnsupportedFormat("missing PLY end_header".into()))?
        + END.len();
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| GeometryError::UnsupportedFormat("PLY header is not ASCII".into()))?;

    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(GeometryError::UnsupportedFormat("missing ply magic".into())),
    }
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let perr = |msg: &str| GeometryError::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        match toks.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(GeometryError::UnsupportedFormat(format!(
                        "PLY format {fmt} (only binary_little_endian is supported)"
                    )));
                }
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| perr("property before element"))?;
                el.props.push(Property::List(
                    name.to_string(),
                    Scalar::parse(ct).ok_or_else(|| perr("bad list count type"))?,
                    Scalar::parse(it).ok_or_else(|| perr("bad list item type"))?,
                ));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| perr("property before element"))?;
                el.props.push(Property::Scalar(
                    name.to_string(),
                    Scalar::parse(ty).ok_or_else(|| perr("bad property type"))?,
                ));
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            _ => return Err(perr("unrecognized header line")),
        }
    }

    let mut cur = Cursor {
        data: bytes,
        pos: header_end,
    };
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut pos = [0.0; 3];
            let mut nrm = [f64::NAN; 3];
            for p in &el.props {
                match p {
                    Property::Scalar(name, s) => {
                        let v = cur.scalar(*s)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => pos[0] = v,
                                "y" => pos[1] = v,
                                "z" => pos[2] = v,
                                "nx" => nrm[0] = v,
                                "ny" => nrm[1] = v,
                                "nz" => nrm[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = cur.scalar(*ct)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(cur.scalar(*it)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n != 3 {
                                return Err(GeometryError::NonTriangleFace(n));
                            }
                            triangles.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Point3::from(pos));
                normals.push(Vector3::from(nrm));
            }
        }
    }
    let normals = if normals.iter().all(|n| n.iter().all(|c| c.is_finite())) {
        Some(normals)
    } else {
        None
    };
    TriangleMesh::new(vertices, triangles, normals)
}

/// Per-vertex RGB color for a PLY snapshot.
pub type Rgb = [u8; 3];

pub const VISITED_COLOR: Rgb = [0, 0, 255];
pub const UNVISITED_COLOR: Rgb = [255, 0, 0];

/// Write a binary little-endian PLY; positions and normals as `double`,
/// optional `uchar` colors.
pub fn write_ply(
    out: &mut impl Write,
    mesh: &TriangleMesh,
    colors: Option<&[Rgb]>,
) -> io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    writeln!(out, "comment capscan mesh v1")?;
    writeln!(out, "element vertex {}", mesh.vertex_count())?;
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(out, "property double {p}")?;
    }
    if colors.is_some() {
        for c in ["red", "green", "blue"] {
            writeln!(out, "property uchar {c}")?;
        }
    }
    writeln!(out, "element face {}", mesh.triangle_count())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    let mut buf = Vec::with_capacity(mesh.vertex_count() * 51 + mesh.triangle_count() * 13);
    for i in 0..mesh.vertex_count() {
        for c in mesh.vertices[i].iter().chain(mesh.normals[i].iter()) {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(cs) = colors {
            buf.extend_from_slice(&cs[i]);
        }
    }
    for tri in &mesh.triangles {
        buf.push(3);
        for &i in tri {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn save_ply(path: impl AsRef<Path>, mesh: &TriangleMesh, colors: Option<&[Rgb]>) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    write_ply(&mut f, mesh, colors)?;
    f.flush()
}

/// Read back per-vertex colors from a PLY written by [`write_ply`].
pub fn read_ply_colors(bytes: &[u8]) -> Result<Vec<Rgb>, GeometryError> {
    const END: &[u8] = b"end_header\n";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| GeometryError::UnsupportedFormat("missing PLY end_header".into()))?
        + END.len();
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let count: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| GeometryError::UnsupportedFormat("no vertex element".into()))?;
    if !header.contains("property uchar red") {
        return Err(GeometryError::UnsupportedFormat("PLY has no colors".into()));
    }
    let stride = 6 * 8 + 3;
    let body = &bytes[header_end..];
    if body.len() < count * stride {
        return Err(GeometryError::Parse {
            line: 0,
            msg: "truncated vertex block".into(),
        });
    }
    Ok((0..count)
        .map(|i| {
            let o = i * stride + 48;
            [body[o], body[o + 1], body[o + 2]]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA_OBJ: &str = "\
# unit tetrahedron
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
";

    #[test]
    fn loads_tetrahedron_obj() {
        let m = parse_obj(TETRA_OBJ).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.triangle_count(), 4);
        assert!(m.is_watertight());
        for n in &m.normals {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quad_face_is_rejected() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert!(matches!(err, GeometryError::NonTriangleFace(4)));
        assert!(err.to_string().contains("non-triangle face"));
    }

    #[test]
    fn empty_obj_is_rejected() {
        assert!(matches!(parse_obj("# nothing\n"), Err(GeometryError::NoVertices)));
    }

    #[test]
    fn obj_with_corner_normals_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 2\nf -3//1 -2//1 -1//1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.normals[2], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn ply_round_trip_preserves_geometry_and_colors() {
        let m = parse_obj(TETRA_OBJ).unwrap();
        let colors = vec![VISITED_COLOR, UNVISITED_COLOR, UNVISITED_COLOR, VISITED_COLOR];
        let mut buf = Vec::new();
        write_ply(&mut buf, &m, Some(&colors)).unwrap();
        let back = parse_ply(&buf).unwrap();
        assert_eq!(back, m);
        assert_eq!(read_ply_colors(&buf).unwrap(), colors);
    }

    #[test]
    fn ascii_ply_is_unsupported() {
        let text = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_ply(text), Err(GeometryError::UnsupportedFormat(_))));
    }

    #[test]
    fn load_mesh_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.obj");
        std::fs::write(&p, TETRA_OBJ).unwrap();
        assert_eq!(load_mesh(&p).unwrap().vertex_count(), 4);
        let q = dir.path().join("t.stl");
        std::fs::write(&q, "solid").unwrap();
        assert!(load_mesh(&q).is_err());
        assert!(matches!(
            load_mesh(dir.path().join("missing.obj")),
            Err(GeometryError::Io { .. })
        ));
    }
}
