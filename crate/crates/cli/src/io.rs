//! File formats: PNG images and masks, JSON documents and JSON lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use handsynth_core::image::{ImageBuffer, MaskBuffer};
use handsynth_core::metrics::PoseRecord;
use image::{ColorType, DynamicImage, ImageEncoder};
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// 8-bit grayscale stays one channel; everything else becomes RGB.
pub fn read_image(path: &Path) -> anyhow::Result<ImageBuffer> {
    let img = image::open(path).with_context(|| format!("reading image {}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let buffer = match img {
        DynamicImage::ImageLuma8(g) => ImageBuffer::from_u8(h, w, 1, g.as_raw()),
        other => ImageBuffer::from_u8(h, w, 3, other.to_rgb8().as_raw()),
    };
    buffer.with_context(|| format!("decoding {}", path.display()))
}

fn write_png(path: &Path, bytes: &[u8], width: usize, height: usize, color: ColorType) -> anyhow::Result<()> {
    create_parent(path)?;
    let file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    image::codecs::png::PngEncoder::new(file)
        .write_image(bytes, width as u32, height as u32, color.into())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_image(path: &Path, img: &ImageBuffer) -> anyhow::Result<()> {
    let color = if img.channels() == 1 {
        ColorType::L8
    } else {
        ColorType::Rgb8
    };
    write_png(path, &img.to_u8(), img.width(), img.height(), color)
}

pub fn read_mask(path: &Path) -> anyhow::Result<MaskBuffer> {
    let img = image::open(path).with_context(|| format!("reading mask {}", path.display()))?;
    let gray = img.to_luma8();
    Ok(MaskBuffer::from_gray8(
        gray.height() as usize,
        gray.width() as usize,
        gray.as_raw(),
    )?)
}

pub fn write_mask(path: &Path, mask: &MaskBuffer) -> anyhow::Result<()> {
    let (h, w) = mask.dim();
    write_png(path, &mask.to_gray8(), w, h, ColorType::L8)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn points_to_array(points: &[[f64; 3]]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 3), |(i, a)| points[i][a])
}

pub fn array_to_points(a: &Array2<f64>) -> Vec<[f64; 3]> {
    a.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

/// A mesh target or prediction on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PoseFile {
    pub joints: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 3]>>,
}

/// One line of a pose set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PoseLine {
    pub id: String,
    pub joints: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 3]>>,
}

impl PoseLine {
    pub fn to_record(&self) -> anyhow::Result<PoseRecord> {
        if self.joints.is_empty() {
            bail!("pose {:?} has no joints", self.id);
        }
        Ok(PoseRecord {
            id: self.id.clone(),
            joints: points_to_array(&self.joints),
            vertices: self.vertices.as_deref().map(points_to_array),
        })
    }
}
