//! Directory layout: files are paired across directories by stem and the
//! group order is the lexicographic order of the stems.

use std::fs;
use std::path::{Path, PathBuf};

use corp::io::{read_map_pgm, read_tensor};
use corp::tensor::bilinear_resize;
use corp::{CorpError, FeatureGroup, MapGroup, Result, Tensor};

/// Sorted stems of the files in `dir` with extension `ext`.
pub fn stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| CorpError::from(e).in_file(dir))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CorpError::from(e).in_file(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CorpError::Argument(format!("no .{ext} files found")).in_file(dir));
    }
    Ok(out)
}

pub fn member(dir: &Path, stem: &str, ext: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{ext}"));
    if !path.is_file() {
        return Err(
            CorpError::Argument(format!("missing counterpart for group member {stem:?}"))
                .in_file(path),
        );
    }
    Ok(path)
}

/// Loads `<dir>/<stem>.crpt` for every stem. With `normalize`, embeddings
/// are L2-normalized on load; otherwise they must already be unit-norm.
pub fn load_features(dir: &Path, stems: &[String], normalize: bool) -> Result<FeatureGroup> {
    let mut tensors: Vec<Tensor> = Vec::with_capacity(stems.len());
    let mut paths: Vec<PathBuf> = Vec::with_capacity(stems.len());
    for stem in stems {
        let path = member(dir, stem, "crpt")?;
        let t = read_tensor(&path)?.into_f32();
        if t.dims().len() != 3 {
            return Err(CorpError::Shape(format!(
                "expected a D×H×W tensor, found dims {:?}",
                t.dims()
            ))
            .in_file(path));
        }
        if let Some(first) = tensors.first() {
            if first.dims() != t.dims() {
                return Err(CorpError::Shape(format!(
                    "dims {:?} differ from {:?} of {}",
                    t.dims(),
                    first.dims(),
                    paths[0].display()
                ))
                .in_file(path));
            }
        }
        tensors.push(t);
        paths.push(path);
    }
    let group = if normalize {
        FeatureGroup::from_raw(tensors, corp::tensor::DEFAULT_EPS)
    } else {
        FeatureGroup::new(tensors)
    };
    group.map_err(|e| match e {
        CorpError::NotNormalized { image, .. } => e.in_file(&paths[image]),
        e => e,
    })
}

/// A map per stem, each resized to `h×w`, plus its size on disk.
pub fn load_maps(
    dir: &Path,
    stems: &[String],
    h: usize,
    w: usize,
) -> Result<(MapGroup, Vec<(usize, usize)>)> {
    let mut maps = Vec::with_capacity(stems.len());
    let mut sizes = Vec::with_capacity(stems.len());
    for stem in stems {
        let path = member(dir, stem, "pgm")?;
        let m = read_map_pgm(&path)?;
        sizes.push((m.dims()[0], m.dims()[1]));
        maps.push(bilinear_resize(&m, h, w).map_err(|e| e.in_file(&path))?);
    }
    Ok((MapGroup::new(maps)?, sizes))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CorpError::from(e).in_file(dir))
}
