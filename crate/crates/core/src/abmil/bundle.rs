//! Head bundle container: JSON shape manifest followed by raw tensors.
//!
//! ```text
//! magic "ABMILHB1" | manifest_len u64 LE | manifest JSON | tensor data f64 LE
//! ```
//!
//! Each tensor entry in the manifest gives its name, shape and element offset
//! into the data section; data is row-major and must be fully referenced.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AbmilError, HeadParams, MemberId, PATTERN_CLASSES};

pub const BUNDLE_MAGIC: [u8; 8] = *b"ABMILHB1";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dtype: String,
    layout: String,
    dim: usize,
    hidden: usize,
    pattern_classes: Vec<String>,
    members: Vec<MemberEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MemberEntry {
    fold: u8,
    tta: u8,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn fmt_err(m: impl Into<String>) -> AbmilError {
    AbmilError::Format(m.into())
}

fn tensors(p: &HeadParams) -> [(&'static str, Vec<usize>, Vec<f64>); 8] {
    let (d, l) = (p.dim, p.hidden);
    [
        ("attention_v", vec![d, l], p.attention_v.clone()),
        ("attention_w", vec![l], p.attention_w.clone()),
        ("primary_w", vec![4, d], p.primary_w.clone()),
        ("primary_b", vec![4], p.primary_b.clone()),
        ("secondary_w", vec![4, d], p.secondary_w.clone()),
        ("secondary_b", vec![4], p.secondary_b.clone()),
        ("cancer_w", vec![d], p.cancer_w.clone()),
        ("cancer_b", vec![1], vec![p.cancer_b]),
    ]
}

pub fn write_bundle<W: Write>(mut w: W, members: &[HeadParams]) -> Result<W, AbmilError> {
    let first = members.first().ok_or_else(|| fmt_err("bundle needs at least one member"))?;
    let mut data: Vec<f64> = Vec::new();
    let mut entries = Vec::with_capacity(members.len());
    for p in members {
        p.validate()?;
        if (p.dim, p.hidden) != (first.dim, first.hidden) {
            return Err(fmt_err("members disagree on dim/hidden"));
        }
        let mut ts = Vec::new();
        for (name, shape, values) in tensors(p) {
            ts.push(TensorEntry { name: name.into(), shape, offset: data.len() });
            data.extend(values);
        }
        entries.push(MemberEntry { fold: p.member.fold, tta: p.member.tta, tensors: ts });
    }
    let manifest = Manifest {
        format: "abmil-head-bundle".into(),
        version: BUNDLE_VERSION,
        dtype: "f64le".into(),
        layout: "row-major".into(),
        dim: first.dim,
        hidden: first.hidden,
        pattern_classes: PATTERN_CLASSES.iter().map(|p| p.to_string()).collect(),
        members: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    w.write_all(&BUNDLE_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(w)
}

pub fn read_bundle<R: Read>(mut r: R) -> Result<Vec<HeadParams>, AbmilError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| fmt_err("truncated bundle"))?;
    if magic != BUNDLE_MAGIC {
        return Err(fmt_err("bad bundle magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| fmt_err("truncated bundle"))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(fmt_err("manifest length implausibly large"));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| fmt_err("truncated manifest"))?;
    let m: Manifest = serde_json::from_slice(&json)?;
    if m.format != "abmil-head-bundle" || m.version != BUNDLE_VERSION {
        return Err(fmt_err(format!("unsupported bundle {} v{}", m.format, m.version)));
    }
    if m.dtype != "f64le" || m.layout != "row-major" {
        return Err(fmt_err(format!("unsupported dtype/layout {}/{}", m.dtype, m.layout)));
    }
    let classes: Vec<String> = PATTERN_CLASSES.iter().map(|p| p.to_string()).collect();
    if m.pattern_classes != classes {
        return Err(fmt_err(format!("pattern classes {:?} != {:?}", m.pattern_classes, classes)));
    }
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() % 8 != 0 {
        return Err(fmt_err("tensor data is not a whole number of f64 values"));
    }
    let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (d, l) = (m.dim, m.hidden);
    let mut used = 0usize;
    let mut out = Vec::with_capacity(m.members.len());
    for e in &m.members {
        let get = |name: &str, shape: &[usize]| -> Result<Vec<f64>, AbmilError> {
            let t = e
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| fmt_err(format!("member {}/{} lacks tensor {name}", e.fold, e.tta)))?;
            if t.shape != shape {
                return Err(fmt_err(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
            }
            let n: usize = shape.iter().product();
            data.get(t.offset..t.offset + n)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| fmt_err(format!("tensor {name} runs past the data section")))
        };
        let p = HeadParams {
            member: MemberId { fold: e.fold, tta: e.tta },
            dim: d,
            hidden: l,
            attention_v: get("attention_v", &[d, l])?,
            attention_w: get("attention_w", &[l])?,
            primary_w: get("primary_w", &[4, d])?,
            primary_b: get("primary_b", &[4])?,
            secondary_w: get("secondary_w", &[4, d])?,
            secondary_b: get("secondary_b", &[4])?,
            cancer_w: get("cancer_w", &[d])?,
            cancer_b: get("cancer_b", &[1])?[0],
        };
        p.validate()?;
        used += e.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum::<usize>();
        out.push(p);
    }
    if used != data.len() {
        return Err(fmt_err(format!("{} tensor values present, {used} referenced", data.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let members: Vec<HeadParams> = (0..3)
            .map(|i| HeadParams::random(MemberId { fold: i, tta: 0 }, 5, 3, i as u64))
            .collect();
        let bytes = write_bundle(Vec::new(), &members).unwrap();
        let back = read_bundle(&bytes[..]).unwrap();
        assert_eq!(back, members);
    }

    #[test]
    fn rejects_trailing_and_truncated_data() {
        let members = vec![HeadParams::random(MemberId { fold: 0, tta: 0 }, 4, 2, 1)];
        let mut bytes = write_bundle(Vec::new(), &members).unwrap();
        assert!(read_bundle(&bytes[..bytes.len() - 8]).is_err());
        bytes.extend_from_slice(&0f64.to_le_bytes());
        assert!(read_bundle(&bytes[..]).is_err());
    }
}
