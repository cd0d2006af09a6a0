//! Runs the latent diagnostics and quality metrics over a directory of
//! images and exports tables and maps.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rayon::prelude::*;
use ssmcodec_core::codec::Codec;
use ssmcodec_core::metrics::{
    kl_to_standard_normal, latent_correlation, normalize_latent, psnr_u8, quantize_deviation, CorrelationMap, KlBins,
};
use ssmcodec_core::Tensor;

use crate::container;
use crate::error::{CodecError, Result};
use crate::image_io::{self, tensor_to_rgb, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Metric {
    Psnr,
    Kl,
    Correlation,
    Deviation,
}

pub const ALL_METRICS: [Metric; 4] = [Metric::Psnr, Metric::Kl, Metric::Correlation, Metric::Deviation];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageReport {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub file_bytes: usize,
    pub bpp: f64,
    pub psnr: Option<f64>,
    pub kl: Option<f64>,
    pub deviation_mean: Option<f64>,
    pub saturated: usize,
}

struct Work {
    report: ImageReport,
    latents: (Tensor, Tensor, Tensor),
    deviation: Option<(usize, usize, Vec<f64>)>,
}

/// Image files in `dir` with a known extension, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(CodecError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && Format::from_path(p).is_some())
        .collect();
    files.sort();
    Ok(files)
}

fn analyze_one(codec: &Codec, path: &Path, metrics: &[Metric], lambda_index: u8) -> Result<Work> {
    let x = image_io::load(path)?;
    let (h, w, _) = x.dims3("analyze")?;
    let (enc, trace) = codec.encode_traced(&x, lambda_index)?;
    let file_bytes = container::to_bytes(&enc)?.len();
    let l = trace.latents;
    let mut report = ImageReport {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        height: h,
        width: w,
        file_bytes,
        bpp: 8.0 * file_bytes as f64 / (h * w) as f64,
        psnr: None,
        kl: None,
        deviation_mean: None,
        saturated: trace.saturated,
    };
    if metrics.contains(&Metric::Psnr) {
        let x_hat = codec.decode(&enc)?;
        let a = tensor_to_rgb(&x)?;
        let b = tensor_to_rgb(&x_hat)?;
        report.psnr = Some(psnr_u8(a.as_raw(), b.as_raw())?);
    }
    if metrics.contains(&Metric::Kl) {
        let z = normalize_latent(&l.y, &l.mu, &l.sigma)?;
        report.kl = Some(kl_to_standard_normal(&z, KlBins::default())?);
    }
    let mut deviation = None;
    if metrics.contains(&Metric::Deviation) {
        let d = quantize_deviation(&l.y, &l.y_hat)?;
        report.deviation_mean = Some(d.mean);
        deviation = Some((d.width, d.height, d.scaled()));
    }
    Ok(Work {
        report,
        latents: (l.y, l.mu, l.sigma),
        deviation,
    })
}

/// Summary of one `analyze` run.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub reports: Vec<ImageReport>,
    pub correlation: Option<CorrelationMap>,
}

/// Analyzes every image in `dir` and writes `analyze.csv`,
/// `correlation.csv` and `<file name>.deviation.pgm` into `out_dir`.
pub fn analyze_dir(
    codec: &Codec,
    dir: &Path,
    out_dir: &Path,
    metrics: &[Metric],
    max_offset: usize,
    lambda_index: u8,
) -> Result<Analysis> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(CodecError::Usage(format!("no PNG or PPM images in {}", dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(CodecError::io(out_dir))?;
    let work = files
        .par_iter()
        .map(|p| analyze_one(codec, p, metrics, lambda_index))
        .collect::<Result<Vec<_>>>()?;

    for wk in &work {
        if let Some((w, h, values)) = &wk.deviation {
            let path = out_dir.join(format!("{}.deviation.pgm", wk.report.name));
            image_io::save_pgm(&path, *w, *h, values)?;
        }
    }
    let correlation = if metrics.contains(&Metric::Correlation) {
        let triples: Vec<_> = work
            .iter()
            .map(|w| (&w.latents.0, &w.latents.1, &w.latents.2))
            .collect();
        let map = latent_correlation(&triples, max_offset)?;
        write_correlation(&map, &out_dir.join("correlation.csv"))?;
        Some(map)
    } else {
        None
    };
    let reports: Vec<ImageReport> = work.into_iter().map(|w| w.report).collect();
    write_reports(&reports, &out_dir.join("analyze.csv"))?;
    Ok(Analysis { reports, correlation })
}

fn write_reports(reports: &[ImageReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "image",
        "height",
        "width",
        "file_bytes",
        "bpp",
        "psnr_db",
        "kl_nats",
        "deviation_mean",
        "saturated",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.height.to_string(),
            r.width.to_string(),
            r.file_bytes.to_string(),
            format!("{:.6}", r.bpp),
            opt(r.psnr),
            opt(r.kl),
            opt(r.deviation_mean),
            r.saturated.to_string(),
        ])?;
    }
    w.flush().map_err(CodecError::io(path))
}

/// Rows are vertical offsets, columns horizontal offsets.
pub fn write_correlation(map: &CorrelationMap, path: &Path) -> Result<()> {
    let k = map.max_offset as isize;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["di\\dj".to_owned()];
    header.extend((-k..=k).map(|j| j.to_string()));
    w.write_record(&header)?;
    for i in -k..=k {
        let mut row = vec![i.to_string()];
        row.extend((-k..=k).map(|j| format!("{:.6}", map.get(i, j))));
        w.write_record(&row)?;
    }
    w.flush().map_err(CodecError::io(path))
}
