use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{pca_fit, Matrix, Pca, Rng};

use super::Dataset;

const CUBE_MAGIC: &str = "RSDDL-HSI";
const GT_MAGIC: &str = "RSDDL-GT";

/// Hyperspectral image, band-interleaved by pixel: value `(r, c, b)` lives at
/// `(r * width + c) * bands + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub values: Vec<f64>,
    /// Class id per pixel in scanline order, 0 for unlabeled.
    pub ground_truth: Vec<usize>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>, ground_truth: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::input("cube dimensions must be positive"));
        }
        if values.len() != height * width * bands {
            return Err(Error::input(format!(
                "{} values for a {height}x{width}x{bands} cube",
                values.len()
            )));
        }
        if ground_truth.len() != height * width {
            return Err(Error::input(format!(
                "{} ground-truth entries for {height}x{width} pixels",
                ground_truth.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("cube contains non-finite values"));
        }
        Ok(HsiCube {
            height,
            width,
            bands,
            values,
            ground_truth,
        })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn spectrum(&self, r: usize, c: usize) -> &[f64] {
        let start = (r * self.width + c) * self.bands;
        &self.values[start..start + self.bands]
    }

    /// Scanline indices of labeled pixels.
    pub fn labeled_pixels(&self) -> Vec<usize> {
        (0..self.pixels()).filter(|&p| self.ground_truth[p] > 0).collect()
    }
}

fn read_header(reader: &mut impl BufRead, path: &Path, magic: &str, fields: usize) -> Result<Vec<usize>> {
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != fields + 2 || parts[0] != magic {
        return Err(Error::parse(path, 1, format!("expected header \"{magic} 1 <dims>\"")));
    }
    if parts[1] != "1" {
        return Err(Error::parse(path, 1, format!("unsupported version {}", parts[1])));
    }
    parts[2..]
        .iter()
        .map(|t| match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::parse(path, 1, format!("bad dimension {t:?}"))),
        })
        .collect()
}

fn read_payload(reader: &mut impl Read, path: &Path, bytes: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(bytes);
    reader.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    if buf.len() != bytes {
        return Err(Error::input(format!(
            "{}: expected {bytes} payload bytes, found {}",
            path.display(),
            buf.len()
        )));
    }
    Ok(buf)
}

/// Read a cube file and its ground-truth raster.
///
/// Cube: text line `RSDDL-HSI 1 <height> <width> <bands>` then little-endian
/// `f32` values in band-interleaved-by-pixel order. Raster: text line
/// `RSDDL-GT 1 <height> <width>` then little-endian `u32` class ids.
pub fn load_cube(cube: impl AsRef<Path>, ground_truth: impl AsRef<Path>) -> Result<HsiCube> {
    let (cp, gp) = (cube.as_ref(), ground_truth.as_ref());
    let mut r = BufReader::new(File::open(cp).map_err(|e| Error::io(cp, e))?);
    let dims = read_header(&mut r, cp, CUBE_MAGIC, 3)?;
    let (h, w, b) = (dims[0], dims[1], dims[2]);
    let values = read_payload(&mut r, cp, h * w * b * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();

    let mut r = BufReader::new(File::open(gp).map_err(|e| Error::io(gp, e))?);
    let gdims = read_header(&mut r, gp, GT_MAGIC, 2)?;
    if gdims != [h, w] {
        return Err(Error::input(format!(
            "ground truth is {}x{} but the cube is {h}x{w}",
            gdims[0], gdims[1]
        )));
    }
    let gt = read_payload(&mut r, gp, h * w * 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    HsiCube::new(h, w, b, values, gt)
}

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>, ground_truth: impl AsRef<Path>) -> Result<()> {
    let write = |path: &Path, header: String, bytes: Vec<u8>| -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(header.as_bytes()).map_err(io)?;
        w.write_all(&bytes).map_err(io)?;
        w.flush().map_err(io)
    };
    write(
        path.as_ref(),
        format!("{CUBE_MAGIC} 1 {} {} {}\n", cube.height, cube.width, cube.bands),
        cube.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
    )?;
    write(
        ground_truth.as_ref(),
        format!("{GT_MAGIC} 1 {} {}\n", cube.height, cube.width),
        cube.ground_truth.iter().flat_map(|&g| (g as u32).to_le_bytes()).collect(),
    )
}

/// Symmetric reflection into `0..n` (edge sample repeated).
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let i = if i < 0 { -i - 1 } else { i };
    (if i >= n { 2 * n - i - 1 } else { i }) as usize
}

/// Flattened `window × window × bands` neighborhood of each pixel, rows then
/// columns then bands. The pixel sits at offset `(window − 1) / 2` inside its
/// window, so even windows extend one step further down and right.
pub fn raw_features(cube: &HsiCube, window: usize, pixels: &[usize]) -> Result<Matrix> {
    if window == 0 || window > cube.height || window > cube.width {
        return Err(Error::input(format!(
            "window {window} does not fit a {}x{} image",
            cube.height, cube.width
        )));
    }
    let dim = window * window * cube.bands;
    let off = ((window - 1) / 2) as isize;
    let cols: Vec<Vec<f64>> = pixels
        .par_iter()
        .map(|&p| {
            let (r, c) = ((p / cube.width) as isize, (p % cube.width) as isize);
            let mut v = Vec::with_capacity(dim);
            for dr in 0..window as isize {
                let rr = mirror(r - off + dr, cube.height);
                for dc in 0..window as isize {
                    let cc = mirror(c - off + dc, cube.width);
                    v.extend_from_slice(cube.spectrum(rr, cc));
                }
            }
            v
        })
        .collect();
    let mut x = Matrix::zeros(dim, pixels.len());
    for (j, v) in cols.iter().enumerate() {
        x.column_mut(j).copy_from_slice(v);
    }
    Ok(x)
}

/// Features of the labeled pixels with the projection that produced them.
#[derive(Debug, Clone)]
pub struct SpatialSpectral {
    pub dataset: Dataset,
    pub pca: Pca,
    /// Scanline index of each dataset column.
    pub pixels: Vec<usize>,
}

/// Window features of every labeled pixel, reduced to `d` dimensions (clipped
/// to the raw dimension) by PCA. The PCA is fitted on the pixels where
/// `train_mask` is true, or on all labeled pixels when no mask is given.
pub fn extract_spatial_spectral(
    cube: &HsiCube,
    window: usize,
    d: usize,
    train_mask: Option<&[bool]>,
) -> Result<SpatialSpectral> {
    if d == 0 {
        return Err(Error::input("need at least one PCA dimension"));
    }
    if let Some(m) = train_mask {
        if m.len() != cube.pixels() {
            return Err(Error::input(format!("train mask has {} entries for {} pixels", m.len(), cube.pixels())));
        }
    }
    let pixels = cube.labeled_pixels();
    if pixels.is_empty() {
        return Err(Error::input("cube has no labeled pixels"));
    }
    let raw = raw_features(cube, window, &pixels)?;
    let fit_cols: Vec<usize> = (0..pixels.len())
        .filter(|&j| train_mask.is_none_or(|m| m[pixels[j]]))
        .collect();
    if fit_cols.is_empty() {
        return Err(Error::input("train mask selects no labeled pixel"));
    }
    let d = d.min(raw.nrows());
    let pca = pca_fit(&raw.select_columns(&fit_cols), d)?;
    let x = pca.project(&raw)?;
    let labels = pixels.iter().map(|&p| cube.ground_truth[p]).collect();
    Ok(SpatialSpectral {
        dataset: Dataset::new(x, labels)?,
        pca,
        pixels,
    })
}

/// Column indices `(train, test)`: `counts[c]` samples of class `c` drawn
/// uniformly without replacement, the rest to test. Classes absent from
/// `counts` go entirely to test. Both lists are ascending.
pub fn split_indices(ds: &Dataset, counts: &BTreeMap<usize, usize>, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    for (c, &n) in counts {
        let have = ds.class_index.get(c).map_or(0, Vec::len);
        if n > have {
            return Err(Error::input(format!("class {c} has {have} samples, {n} requested for training")));
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, cols) in &ds.class_index {
        let mut cols = cols.clone();
        rng.shuffle(&mut cols);
        let n = counts.get(c).copied().unwrap_or(0);
        train.extend_from_slice(&cols[..n]);
        test.extend_from_slice(&cols[n..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_per_class(ds: &Dataset, counts: &BTreeMap<usize, usize>, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds, counts, rng)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Parse `"50"` (every class) or `"1:50,2:30"`.
pub fn parse_counts(s: &str, classes: impl IntoIterator<Item = usize>) -> Result<BTreeMap<usize, usize>> {
    let bad = || Error::input(format!("bad per-class counts {s:?}; use N or class:N,..."));
    if let Ok(n) = s.trim().parse::<usize>() {
        return Ok(classes.into_iter().map(|c| (c, n)).collect());
    }
    s.split(',')
        .map(|kv| {
            let (k, v) = kv.split_once(':').ok_or_else(bad)?;
            Ok((k.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}
