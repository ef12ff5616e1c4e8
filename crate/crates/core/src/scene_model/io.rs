use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CameraView, DynamicScene, GaussianFrameParams, InstanceMask};
use crate::{Error, Result};

const SCENE_MAGIC: &[u8; 4] = b"G4DS";
const SCENE_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Writes `G4DS` v1: magic, version, N, T, then one block of N records per
/// frame, each record 14 little-endian `f32`.
pub fn save_scene(scene: &DynamicScene, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut buf = Vec::with_capacity(16 + scene.params().len() * GaussianFrameParams::FLOATS * 4);
    buf.extend_from_slice(SCENE_MAGIC);
    buf.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(scene.gaussian_count() as u32).to_le_bytes());
    buf.extend_from_slice(&(scene.timestamp_count() as u32).to_le_bytes());
    for p in scene.params() {
        for v in p.to_floats() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<DynamicScene> {
    let bytes = read_all(path)?;
    if bytes.len() < 16 || &bytes[0..4] != SCENE_MAGIC {
        return Err(Error::Format(format!("{}: missing G4DS magic", path.display())));
    }
    let version = read_u32(&bytes, 4);
    if version != SCENE_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported scene version {version}",
            path.display()
        )));
    }
    let n = read_u32(&bytes, 8) as usize;
    let t = read_u32(&bytes, 12) as usize;
    let record = GaussianFrameParams::FLOATS * 4;
    let expected = n
        .checked_mul(t)
        .and_then(|c| c.checked_mul(record))
        .and_then(|c| c.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(Error::Format(format!(
            "{}: header says N={n} T={t} but file has {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    let params = bytes[16..]
        .chunks_exact(record)
        .map(|chunk| {
            let mut v = [0f32; GaussianFrameParams::FLOATS];
            for (slot, b) in v.iter_mut().zip(chunk.chunks_exact(4)) {
                *slot = f32::from_le_bytes(b.try_into().unwrap());
            }
            GaussianFrameParams::from_floats(&v)
        })
        .collect();
    DynamicScene::new(n, t, params)
}

pub fn save_cameras(cameras: &[CameraView], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, cameras)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraView>> {
    let bytes = read_all(path)?;
    let cameras: Vec<CameraView> = serde_json::from_slice(&bytes)?;
    for (i, c) in cameras.iter().enumerate() {
        c.validate(None)
            .map_err(|e| Error::Validation(format!("camera {i}: {e}")))?;
    }
    Ok(cameras)
}

/// Writes a 16-bit binary PGM (P5, maxval 65535, big-endian samples).
pub fn write_mask(mask: &InstanceMask, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut buf = format!("P5\n{} {}\n65535\n", mask.width, mask.height).into_bytes();
    buf.reserve(mask.labels.len() * 2);
    for l in &mask.labels {
        buf.extend_from_slice(&l.to_be_bytes());
    }
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a 16-bit P5 PGM. PGM carries no time, so the caller supplies it.
pub fn load_mask(path: &Path, timestamp: u32) -> Result<InstanceMask> {
    let bytes = read_all(path)?;
    let fmt_err = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    let mut next_token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if next_token().as_deref() != Some("P5") {
        return Err(fmt_err("not a binary PGM (P5)"));
    }
    let mut field = |name: &str| -> Result<u32> {
        next_token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fmt_err(&format!("bad {name}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 65535 {
        return Err(fmt_err(&format!("maxval {maxval}, expected 65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes.get(pos + 1..).ok_or_else(|| fmt_err("truncated header"))?;
    let count = width as usize * height as usize;
    if data.len() != count * 2 {
        return Err(fmt_err(&format!(
            "raster has {} bytes, expected {}",
            data.len(),
            count * 2
        )));
    }
    let labels = data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    InstanceMask::new(width, height, labels, timestamp)
}

/// Writes an 8-bit binary PPM (P6) from `[0,1]` RGB values.
pub fn write_ppm(rgb: &[[f32; 3]], width: u32, height: u32, path: &Path) -> Result<()> {
    if rgb.len() != width as usize * height as usize {
        return Err(Error::Validation(format!(
            "image of {width}x{height} has {} pixels",
            rgb.len()
        )));
    }
    let mut out = create(path)?;
    let mut buf = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        for c in px {
            buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCloudVertex {
    pub position: [f32; 3],
    pub color: [u8; 3],
}

/// ASCII PLY of the selected Gaussians' means and colors at frame `t`.
pub fn save_pointcloud(scene: &DynamicScene, mask: &[bool], t: usize, path: &Path) -> Result<()> {
    if mask.len() != scene.gaussian_count() {
        return Err(Error::Validation(format!(
            "point cloud mask has {} entries for {} gaussians",
            mask.len(),
            scene.gaussian_count()
        )));
    }
    if t >= scene.timestamp_count() {
        return Err(Error::Validation(format!("frame {t} outside the scene")));
    }
    let frame = scene.frame(t);
    let count = mask.iter().filter(|&&m| m).count();
    let mut out = create(path)?;
    let mut text = String::new();
    text.push_str("ply\nformat ascii 1.0\n");
    text.push_str(&format!("element vertex {count}\n"));
    text.push_str("property float x\nproperty float y\nproperty float z\n");
    text.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    text.push_str("end_header\n");
    for (g, _) in frame.iter().zip(mask).filter(|(_, &m)| m) {
        let [r, gr, b] = g.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
        text.push_str(&format!("{} {} {} {r} {gr} {b}\n", g.mean[0], g.mean[1], g.mean[2]));
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads back the ASCII vertex PLYs written by [`save_pointcloud`].
pub fn read_pointcloud(path: &Path) -> Result<Vec<PointCloudVertex>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let fmt_err = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut line = String::new();
    let mut count = None;
    let mut header_lines = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(fmt_err("header not terminated".into()));
        }
        header_lines += 1;
        let l = line.trim();
        if header_lines == 1 && l != "ply" {
            return Err(fmt_err("missing ply magic".into()));
        }
        if l.starts_with("format") && l != "format ascii 1.0" {
            return Err(fmt_err(format!("unsupported {l}")));
        }
        if let Some(rest) = l.strip_prefix("element vertex ") {
            count = Some(
                rest.parse::<usize>()
                    .map_err(|_| fmt_err(format!("bad vertex count {rest}")))?,
            );
        }
        if l == "end_header" {
            break;
        }
    }
    let count = count.ok_or_else(|| fmt_err("no vertex element".into()))?;
    let mut body = String::new();
    reader.read_to_string(&mut body).map_err(|e| Error::io(path, e))?;
    let vertices = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 6 {
                return Err(fmt_err(format!("vertex line `{l}`")));
            }
            let p = |s: &str| s.parse::<f32>().map_err(|_| fmt_err(format!("bad float {s}")));
            let c = |s: &str| s.parse::<u8>().map_err(|_| fmt_err(format!("bad color {s}")));
            Ok(PointCloudVertex {
                position: [p(f[0])?, p(f[1])?, p(f[2])?],
                color: [c(f[3])?, c(f[4])?, c(f[5])?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if vertices.len() != count {
        return Err(fmt_err(format!(
            "header declares {count} vertices, found {}",
            vertices.len()
        )));
    }
    Ok(vertices)
}
