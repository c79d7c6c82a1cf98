//! Corpus persistence and batch generation.
//!
//! Layout on disk: `<root>/index.json` plus one directory per sample under
//! `<root>/samples/<id>/` holding two RGB PNGs, two binary-mask PNGs, two
//! mapping files, and `meta.json`. All writers are deterministic so a fixed
//! seed reproduces byte-identical corpora.

use std::fs;
use std::path::Path;

use mapping_core::dvdm::{read_dvdm, write_dvdm};
use mapping_core::{DocumentImage, GridMapping};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    derive_seed, generate_pair, render_flat_document, CaptureAngle, DomainTags, LayoutCategory,
    Lighting, PairParams, Result, SampleRecord, SynthError, WarpKind, WarpSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Corpus manifest stored as `index.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub schema_version: u32,
    pub count: usize,
    pub latent_size: usize,
    pub seed: u64,
    pub sample_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Batch-generation request.
#[derive(Debug, Clone)]
pub struct CorpusParams {
    pub count: usize,
    pub size: usize,
    pub latent_size: usize,
    pub seed: u64,
    /// Layout subset to draw from; empty means all layouts.
    pub layouts: Vec<LayoutCategory>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    id: String,
    layout: LayoutCategory,
    lighting: Lighting,
    angle: CaptureAngle,
    warp_kind: WarpKind,
    amplitude: f64,
    seed: u64,
}

/// Generates `params.count` samples straight to disk, cycling domain tags
/// through the full cross-product so every combination is covered evenly.
/// Returns the manifest it wrote.
pub fn generate_corpus(params: &CorpusParams, dir: &Path) -> Result<DatasetIndex> {
    if params.count == 0 {
        return Err(SynthError::InvalidArgument("corpus count must be >= 1".into()));
    }
    let layouts: Vec<LayoutCategory> = if params.layouts.is_empty() {
        LayoutCategory::ALL.to_vec()
    } else {
        params.layouts.clone()
    };
    let mut combos = Vec::new();
    for &layout in &layouts {
        for lighting in Lighting::ALL {
            for angle in CaptureAngle::ALL {
                for warp_kind in WarpKind::ALL {
                    combos.push((layout, lighting, angle, warp_kind));
                }
            }
        }
    }

    let mut sample_ids = Vec::with_capacity(params.count);
    for i in 0..params.count {
        let (layout, lighting, angle, warp_kind) = combos[i % combos.len()];
        let id = format!("s{i:05}");
        let record = generate_one(params, i, id.clone(), layout, lighting, angle, warp_kind)?;
        write_sample(&record, dir)?;
        sample_ids.push(id);
    }

    let index = DatasetIndex {
        schema_version: SCHEMA_VERSION,
        count: params.count,
        latent_size: params.latent_size,
        seed: params.seed,
        sample_ids,
        config_hash: params.config_hash.clone(),
    };
    write_index(&index, dir)?;
    Ok(index)
}

/// Builds one record, redrawing the per-sample seed on the rare bijectivity
/// or inversion failure so corpus generation stays total and deterministic.
fn generate_one(
    params: &CorpusParams,
    i: usize,
    id: String,
    layout: LayoutCategory,
    lighting: Lighting,
    angle: CaptureAngle,
    warp_kind: WarpKind,
) -> Result<SampleRecord> {
    const MAX_ATTEMPTS: u64 = 20;
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let sample_seed = derive_seed(params.seed, "sample", i as u64 * MAX_ATTEMPTS + attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sample_seed, "spec", 0));
        let amplitude: f64 = rng.random_range(0.03..0.12);
        let shape = match warp_kind {
            WarpKind::Curve => rng.random_range(0.5..1.5),
            WarpKind::Fold => rng.random_range(1..=3) as f64,
            WarpKind::Crumple => rng.random_range(1.0..2.5),
        };
        let spec = WarpSpec { kind: warp_kind, amplitude, shape, seed: sample_seed };
        let (flat, textline) = render_flat_document(layout, params.size, sample_seed);
        let pair_params = PairParams {
            id: id.clone(),
            layout,
            lighting,
            angle,
            latent_size: params.latent_size,
        };
        match generate_pair(&flat, &textline, &spec, &pair_params) {
            Ok(record) => return Ok(record),
            Err(e @ (SynthError::Generation { .. } | SynthError::Mapping(_))) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("retry loop exits only after an error"))
}

/// Writes records plus a minimal manifest. Batch generation should prefer
/// [`generate_corpus`], which records the master seed and config hash.
pub fn write_dataset(records: &[SampleRecord], dir: &Path) -> Result<DatasetIndex> {
    if records.is_empty() {
        return Err(SynthError::InvalidArgument("no records to write".into()));
    }
    let latent = records[0].gt_map_latent.height();
    for r in records {
        write_sample(r, dir)?;
    }
    let index = DatasetIndex {
        schema_version: SCHEMA_VERSION,
        count: records.len(),
        latent_size: latent,
        seed: 0,
        sample_ids: records.iter().map(|r| r.id.clone()).collect(),
        config_hash: None,
    };
    write_index(&index, dir)?;
    Ok(index)
}

fn write_index(index: &DatasetIndex, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join("index.json");
    let body = serde_json::to_string_pretty(index)
        .map_err(|e| SynthError::Format { path: path_str(&path), reason: e.to_string() })?;
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

/// Writes one sample directory: PNGs for images and masks, DVDM files for
/// the two ground-truth mappings, and meta.json.
pub fn write_sample(record: &SampleRecord, dir: &Path) -> Result<()> {
    let sample_dir = dir.join("samples").join(&record.id);
    fs::create_dir_all(&sample_dir).map_err(|e| io_err(&sample_dir, e))?;

    write_png(&sample_dir.join("warped.png"), &record.warped)?;
    write_png(&sample_dir.join("flat.png"), &record.flat)?;
    write_png(&sample_dir.join("fg_mask.png"), &record.fg_mask)?;
    write_png(&sample_dir.join("textline.png"), &record.textline_mask)?;
    write_map(&sample_dir.join("gt_full.dvdm"), &record.gt_map_full)?;
    write_map(&sample_dir.join("gt_latent.dvdm"), &record.gt_map_latent)?;

    let meta = SampleMeta {
        id: record.id.clone(),
        layout: record.domains.layout,
        lighting: record.domains.lighting,
        angle: record.domains.angle,
        warp_kind: record.domains.warp_kind,
        amplitude: record.amplitude,
        seed: record.seed,
    };
    let path = sample_dir.join("meta.json");
    let body = serde_json::to_string_pretty(&meta)
        .map_err(|e| SynthError::Format { path: path_str(&path), reason: e.to_string() })?;
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

/// Reads a corpus back; every failure names the offending file.
pub fn read_dataset(dir: &Path) -> Result<Vec<SampleRecord>> {
    let index = read_index(dir)?;
    let mut records = Vec::with_capacity(index.sample_ids.len());
    for id in &index.sample_ids {
        records.push(read_sample(dir, id)?);
    }
    Ok(records)
}

/// Reads just the manifest.
pub fn read_index(dir: &Path) -> Result<DatasetIndex> {
    let path = dir.join("index.json");
    let body = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let index: DatasetIndex = serde_json::from_str(&body)
        .map_err(|e| SynthError::Format { path: path_str(&path), reason: e.to_string() })?;
    if index.schema_version != SCHEMA_VERSION {
        return Err(SynthError::Format {
            path: path_str(&path),
            reason: format!("unsupported schema version {}", index.schema_version),
        });
    }
    Ok(index)
}

fn read_sample(dir: &Path, id: &str) -> Result<SampleRecord> {
    let sample_dir = dir.join("samples").join(id);
    let meta_path = sample_dir.join("meta.json");
    let body = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: SampleMeta = serde_json::from_str(&body)
        .map_err(|e| SynthError::Format { path: path_str(&meta_path), reason: e.to_string() })?;

    Ok(SampleRecord {
        id: meta.id,
        warped: read_png(&sample_dir.join("warped.png"))?,
        flat: read_png(&sample_dir.join("flat.png"))?,
        gt_map_latent: read_map(&sample_dir.join("gt_latent.dvdm"))?,
        gt_map_full: read_map(&sample_dir.join("gt_full.dvdm"))?,
        fg_mask: read_mask(&sample_dir.join("fg_mask.png"))?,
        textline_mask: read_mask(&sample_dir.join("textline.png"))?,
        domains: DomainTags {
            layout: meta.layout,
            lighting: meta.lighting,
            angle: meta.angle,
            warp_kind: meta.warp_kind,
        },
        amplitude: meta.amplitude,
        seed: meta.seed,
    })
}

fn write_png(path: &Path, img: &DocumentImage) -> Result<()> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let px = img.pixels();
    let mut buf = Vec::with_capacity(h * w * c);
    for u in 0..h {
        for v in 0..w {
            for ch in 0..c {
                buf.push(quant(px[[u, v, ch]]));
            }
        }
    }
    let color = if c == 3 {
        image::ExtendedColorType::Rgb8
    } else {
        image::ExtendedColorType::L8
    };
    image::save_buffer(path, &buf, w as u32, h as u32, color)
        .map_err(|e| SynthError::Format { path: path_str(path), reason: e.to_string() })
}

fn read_png(path: &Path) -> Result<DocumentImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| SynthError::Format { path: path_str(path), reason: e.to_string() })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let img = DocumentImage::from_fn(h as usize, w as usize, 3, |u, v, c| {
        rgb.get_pixel(v as u32, u as u32).0[c] as f32 / 255.0
    });
    Ok(img)
}

fn read_mask(path: &Path) -> Result<DocumentImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| SynthError::Format { path: path_str(path), reason: e.to_string() })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let mask = DocumentImage::from_fn(h as usize, w as usize, 1, |u, v, _| {
        if gray.get_pixel(v as u32, u as u32).0[0] > 127 {
            1.0
        } else {
            0.0
        }
    });
    Ok(mask)
}

fn write_map(path: &Path, map: &GridMapping) -> Result<()> {
    write_dvdm(map, path)
        .map_err(|e| SynthError::Format { path: path_str(path), reason: e.to_string() })
}

fn read_map(path: &Path) -> Result<GridMapping> {
    read_dvdm(path)
        .map_err(|e| SynthError::Format { path: path_str(path), reason: e.to_string() })
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn io_err(path: &Path, e: std::io::Error) -> SynthError {
    SynthError::Io { path: path_str(path), source: e }
}
