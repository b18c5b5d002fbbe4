//! Minimal Wavefront OBJ reader: `v`, `vn` and `f` records.
//!
//! Polygons are fan-triangulated. Normals referenced by faces are averaged per
//! position index; they are kept only if every vertex receives one.

use std::path::Path;

use super::{GeometryError, MeshTag, TriMesh, Vec3};

fn parse_err(line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Obj {
        line,
        message: message.into(),
    }
}

fn resolve(index: &str, len: usize, line: usize) -> Result<usize, GeometryError> {
    let i: i64 = index
        .parse()
        .map_err(|_| parse_err(line, format!("bad index {index:?}")))?;
    let resolved = if i > 0 { i - 1 } else { len as i64 + i };
    if i == 0 || resolved < 0 || resolved as usize >= len {
        return Err(parse_err(line, format!("index {i} out of range")));
    }
    Ok(resolved as usize)
}

pub fn parse_obj(text: &str, tag: MeshTag) -> Result<TriMesh, GeometryError> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut file_normals: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut accum: Vec<Vec3> = Vec::new();
    let mut has_normal: Vec<bool> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(kind) = parts.next() else { continue };
        match kind {
            "v" | "vn" => {
                let xyz: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| parse_err(line, format!("bad number {s:?}"))))
                    .collect::<Result<_, _>>()?;
                if xyz.len() != 3 {
                    return Err(parse_err(line, "expected three coordinates"));
                }
                let v = Vec3::new(xyz[0], xyz[1], xyz[2]);
                if kind == "v" {
                    positions.push(v);
                    accum.push(Vec3::zeros());
                    has_normal.push(false);
                } else {
                    file_normals.push(v);
                }
            }
            "f" => {
                let mut corners = Vec::new();
                for token in parts {
                    let mut fields = token.split('/');
                    let vi = resolve(fields.next().unwrap_or(""), positions.len(), line)?;
                    let _texcoord = fields.next();
                    if let Some(ni) = fields.next().filter(|s| !s.is_empty()) {
                        let ni = resolve(ni, file_normals.len(), line)?;
                        accum[vi] += file_normals[ni];
                        has_normal[vi] = true;
                    }
                    corners.push(vi as u32);
                }
                if corners.len() < 3 {
                    return Err(parse_err(line, "face with fewer than three vertices"));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(GeometryError::EmptyGeometry);
    }
    let normals = (!has_normal.is_empty() && has_normal.iter().all(|&h| h))
        .then(|| accum.iter().map(|n| n.normalize()).collect());
    TriMesh::new(positions, triangles, normals, tag)
}

pub fn read_obj(path: &Path, tag: MeshTag) -> Result<TriMesh, GeometryError> {
    let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io(format!("{}: {e}", path.display())))?;
    parse_obj(&text, tag)
}
