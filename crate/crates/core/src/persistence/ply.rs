//! Binary PLY in the layout common splatting viewers read.
//!
//! Each vertex carries 23 floats: position, the DC and higher-order SH terms,
//! opacity as a logit, log scales and the quaternion. Semantic features have
//! no slot in that layout, so they follow in a separate `semantic` element
//! that viewers skip.

use std::path::Path;

use nalgebra::Vector3;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::gaussian::{DynamicScene, GaussianPrimitive, SH_COEFFS, SH_PER_CHANNEL};

pub const PLY_PROPERTIES: [&str; 23] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1", "f_rest_2", "f_rest_3", "f_rest_4",
    "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
    "rot_2", "rot_3",
];

const OPACITY_CLAMP: f64 = 1e-7;

fn logit(o: f64) -> f64 {
    let o = o.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
    (o / (1.0 - o)).ln()
}

fn vertex_values(p: &GaussianPrimitive) -> [f64; 23] {
    let mut v = [0.0; 23];
    v[..3].copy_from_slice(p.position().as_slice());
    let sh = p.sh_coeffs();
    for ch in 0..3 {
        v[3 + ch] = sh[ch * SH_PER_CHANNEL];
        for l in 1..SH_PER_CHANNEL {
            v[6 + ch * (SH_PER_CHANNEL - 1) + l - 1] = sh[ch * SH_PER_CHANNEL + l];
        }
    }
    v[15] = logit(p.opacity());
    for k in 0..3 {
        v[16 + k] = p.scale()[k].ln();
    }
    v[19..23].copy_from_slice(p.rotation());
    v
}

pub fn export_ply(scene: &DynamicScene, path: &Path) -> Result<()> {
    if scene.is_empty() {
        return Err(Error::EmptyScene("nothing to export".into()));
    }
    let n = scene.len();
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {n}\n");
    for name in PLY_PROPERTIES {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str(&format!(
        "element semantic {n}\nproperty float f_sem_0\nproperty float f_sem_1\nproperty float f_sem_2\nend_header\n"
    ));
    let mut bytes = header.into_bytes();
    for p in &scene.primitives {
        for v in vertex_values(p) {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for p in &scene.primitives {
        for v in p.semantic().iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

/// Reads a file written by [`export_ply`]. Files without the semantic
/// element load with zero features.
pub fn import_ply(path: &Path) -> Result<Vec<GaussianPrimitive>> {
    let bytes = read_file(path)?;
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| malformed("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed("header is not text".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") || lines.next() != Some("format binary_little_endian 1.0") {
        return Err(malformed("expected binary little-endian PLY".into()));
    }
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["element", name, count] => {
                let count = count.parse().map_err(|_| malformed(format!("bad count in `{line}`")))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "float", name] => elements
                .last_mut()
                .ok_or_else(|| malformed("property before element".into()))?
                .2
                .push(name.to_string()),
            ["comment", ..] | [] => {}
            _ => return Err(malformed(format!("unsupported header line `{line}`"))),
        }
    }
    let mut offset = end + marker.len();
    let mut vertices = None;
    let mut semantics = None;
    for (name, count, props) in &elements {
        let len = count * props.len() * 4;
        let chunk = bytes
            .get(offset..offset + len)
            .ok_or_else(|| malformed(format!("element `{name}` is truncated")))?;
        offset += len;
        let values: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        match name.as_str() {
            "vertex" => {
                if props.iter().map(String::as_str).ne(PLY_PROPERTIES.iter().copied()) {
                    return Err(malformed("vertex properties differ from the splat layout".into()));
                }
                vertices = Some((*count, values));
            }
            "semantic" => semantics = Some(values),
            _ => {}
        }
    }
    let (n, values) = vertices.ok_or_else(|| malformed("no vertex element".into()))?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = &values[i * 23..(i + 1) * 23];
        let mut sh = [0.0; SH_COEFFS];
        for ch in 0..3 {
            sh[ch * SH_PER_CHANNEL] = v[3 + ch];
            for l in 1..SH_PER_CHANNEL {
                sh[ch * SH_PER_CHANNEL + l] = v[6 + ch * (SH_PER_CHANNEL - 1) + l - 1];
            }
        }
        let semantic = semantics
            .as_ref()
            .map_or(Vector3::zeros(), |s| Vector3::new(s[i * 3], s[i * 3 + 1], s[i * 3 + 2]));
        out.push(GaussianPrimitive::new(
            Vector3::new(v[0], v[1], v[2]),
            sh,
            [v[19], v[20], v[21], v[22]],
            Vector3::new(v[16].exp(), v[17].exp(), v[18].exp()),
            1.0 / (1.0 + (-v[15]).exp()),
            semantic,
        )?);
    }
    Ok(out)
}
