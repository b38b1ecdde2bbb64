//! MNIST IDX files (big-endian) into square single-channel signals.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::harness::data::{Dataset, DatasetMeta};
use crate::linalg::Signal;
use crate::network::Targets;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Raw images as `(rows, cols, pixels)` with bytes scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("images: magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * size {
        return Err(Error::Format(format!(
            "images: truncated file, {} bytes for {count} images of {rows}x{cols}",
            body.len()
        )));
    }
    let images = body
        .chunks_exact(size.max(1))
        .take(count)
        .map(|c| c.iter().map(|&v| v as f64 / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("labels: magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format(format!("labels: truncated file, {} of {count} labels", body.len())));
    }
    Ok(body[..count].iter().map(|&v| v as usize).collect())
}

/// Overlap weights of source cells `[0, from)` with target cells `[0, to)`,
/// normalized so each target cell averages its covered area.
fn area_weights(from: usize, to: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = from as f64 / to as f64;
    (0..to)
        .map(|a| {
            let (lo, hi) = (a as f64 * scale, (a + 1) as f64 * scale);
            (lo.floor() as usize..(hi.ceil() as usize).min(from))
                .filter_map(|i| {
                    let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)) / scale;
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Area-average downscale of a `side x side` image to `to x to`.
pub fn downscale(image: &[f64], side: usize, to: usize) -> Vec<f64> {
    let w = area_weights(side, to);
    let mut out = vec![0.0; to * to];
    for (a, wa) in w.iter().enumerate() {
        for (b, wb) in w.iter().enumerate() {
            out[a * to + b] = wa
                .iter()
                .flat_map(|&(i, u)| wb.iter().map(move |&(j, v)| u * v * image[i * side + j]))
                .sum::<f64>();
        }
    }
    out
}

/// Loads an IDX image/label pair. `filter_digit` keeps one class;
/// `downscale_to` area-averages to a smaller square.
pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    filter_digit: Option<usize>,
    downscale_to: Option<usize>,
) -> Result<Dataset> {
    let (rows, cols, images) = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    mnist_dataset(rows, cols, images, labels, filter_digit, downscale_to, &images_path.display().to_string())
}

pub(crate) fn mnist_dataset(
    rows: usize,
    cols: usize,
    images: Vec<Vec<f64>>,
    labels: Vec<usize>,
    filter_digit: Option<usize>,
    downscale_to: Option<usize>,
    source: &str,
) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(Error::Format(format!("{} images but {} labels", images.len(), labels.len())));
    }
    if rows != cols {
        return Err(Error::Format(format!("images are {rows}x{cols}; square grids are required")));
    }
    let side = match downscale_to {
        Some(0) => return Err(Error::arg("downscale size must be positive")),
        Some(t) if t > rows => return Err(Error::arg(format!("cannot downscale {rows} up to {t}"))),
        Some(t) => t,
        None => rows,
    };
    let grid = Grid::square(side);
    let mut inputs = Vec::new();
    let mut kept = Vec::new();
    for (img, &label) in images.iter().zip(&labels) {
        if filter_digit.is_some_and(|d| d != label) {
            continue;
        }
        let px = if side == rows { img.clone() } else { downscale(img, rows, side) };
        inputs.push(Signal::new(grid, 1, px)?);
        kept.push(label);
    }
    let meta = DatasetMeta {
        source: source.to_string(),
        params: serde_json::json!({ "filter_digit": filter_digit, "side": side, "original_side": rows }),
    };
    Dataset::new(inputs, Targets::Labels { labels: kept, classes: 10 }, meta)
}
