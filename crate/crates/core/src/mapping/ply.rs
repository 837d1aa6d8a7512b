//! Binary little-endian PLY persistence for semantic maps.

use std::path::Path;

use nalgebra::Vector3;

use super::map::{voxel_key, MapPoint, SemanticMap};
use crate::error::{Error, Result};
use crate::geometry::Label;

const VERTEX_BYTES: usize = 13;

pub fn encode_map(map: &SemanticMap) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\ncomment voxel_size {:?}\ncomment frame_count {}\n\
         element vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty uchar label\nend_header\n",
        map.voxel_size(),
        map.frame_count(),
        map.len()
    );
    let mut out = Vec::with_capacity(header.len() + map.len() * VERTEX_BYTES);
    out.extend_from_slice(header.as_bytes());
    for p in map.points() {
        for v in [p.position.x, p.position.y, p.position.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.push(p.label.id());
    }
    out
}

pub fn save_map(map: &SemanticMap, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &encode_map(map))
}

#[derive(Clone, Copy, PartialEq)]
enum Scalar {
    F32,
    U8,
    Other(usize),
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "float" | "float32" => Scalar::F32,
            "uchar" | "uint8" => Scalar::U8,
            "char" | "int8" => Scalar::Other(1),
            "short" | "ushort" | "int16" | "uint16" => Scalar::Other(2),
            "int" | "uint" | "int32" | "uint32" => Scalar::Other(4),
            "double" | "float64" => Scalar::Other(8),
            other => return Err(Error::MapFormat(format!("unknown property type {other}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::F32 => 4,
            Scalar::U8 => 1,
            Scalar::Other(n) => n,
        }
    }
}

struct Header {
    voxel_size: f64,
    frame_count: usize,
    vertices: usize,
    stride: usize,
    offsets: [usize; 4],
    body: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::MapFormat("missing end_header".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::MapFormat("header is not utf-8".into()))?;
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(Error::MapFormat("missing ply magic".into()));
    }
    let mut voxel_size = None;
    let mut frame_count = 0;
    let mut vertices = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", ..] => return Err(Error::MapFormat(format!("unsupported format: {line}"))),
            ["comment", "voxel_size", v] => {
                voxel_size = Some(v.parse::<f64>().map_err(|_| Error::MapFormat(format!("bad voxel_size {v}")))?)
            }
            ["comment", "frame_count", v] => {
                frame_count = v.parse().map_err(|_| Error::MapFormat(format!("bad frame_count {v}")))?
            }
            ["comment", ..] | [] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertices = Some(n.parse::<usize>().map_err(|_| Error::MapFormat(format!("bad count {n}")))?);
                } else if *n != "0" {
                    return Err(Error::MapFormat(format!("unsupported element {name}")));
                }
            }
            ["property", "list", ..] => return Err(Error::MapFormat("list properties are not supported".into())),
            ["property", ty, name] if in_vertex => props.push((name.to_string(), Scalar::parse(ty)?)),
            _ => return Err(Error::MapFormat(format!("unexpected header line: {line}"))),
        }
    }
    if !format_ok {
        return Err(Error::MapFormat("missing format line".into()));
    }
    let vertices = vertices.ok_or_else(|| Error::MapFormat("missing vertex element".into()))?;
    let voxel_size = voxel_size.ok_or_else(|| Error::MapFormat("missing voxel_size comment".into()))?;
    let mut offsets = [usize::MAX; 4];
    let mut at = 0;
    for (name, ty) in &props {
        let (slot, want) = match name.as_str() {
            "x" => (0, Scalar::F32),
            "y" => (1, Scalar::F32),
            "z" => (2, Scalar::F32),
            "label" => (3, Scalar::U8),
            _ => (usize::MAX, *ty),
        };
        if slot != usize::MAX {
            if *ty != want {
                return Err(Error::MapFormat(format!("property {name} has the wrong type")));
            }
            offsets[slot] = at;
        }
        at += ty.size();
    }
    for (slot, name) in ["x", "y", "z", "label"].iter().enumerate() {
        if offsets[slot] == usize::MAX {
            return Err(Error::MapFormat(format!("missing property {name}")));
        }
    }
    Ok(Header {
        voxel_size,
        frame_count,
        vertices,
        stride: at,
        offsets,
        body: end + END.len(),
    })
}

pub fn decode_map(bytes: &[u8], path: &Path) -> Result<SemanticMap> {
    let h = parse_header(bytes)?;
    let payload = &bytes[h.body..];
    let need = h.vertices * h.stride;
    if payload.len() < need {
        let msg = format!("payload has {} of {need} bytes", payload.len());
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::UnexpectedEof, msg)));
    }
    let mut cells = Vec::with_capacity(h.vertices);
    for rec in payload[..need].chunks_exact(h.stride) {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
        let position = Vector3::new(f(h.offsets[0]), f(h.offsets[1]), f(h.offsets[2]));
        let id = rec[h.offsets[3]];
        let label = Label::from_id(id).ok_or_else(|| Error::MapFormat(format!("unknown label id {id}")))?;
        cells.push((voxel_key(&position, h.voxel_size), MapPoint { position, label }));
    }
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    SemanticMap::from_cells(h.voxel_size, h.frame_count, cells)
}

pub fn load_map(path: &Path) -> Result<SemanticMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes, path)
}
