//! Wall time and counted multiply-accumulates across input sizes.

use std::io::Write;
use std::time::Instant;

use ssmcodec_core::codec::Codec;
use ssmcodec_core::cost::pipeline_costs;
use ssmcodec_core::rng::param_stream;
use ssmcodec_core::Tensor;

use crate::error::Result;

pub const DEFAULT_SIZES: [usize; 4] = [256, 512, 1024, 2048];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub pixels: usize,
    /// `(stage, macs)` in pipeline order.
    pub stage_macs: Vec<(&'static str, u64)>,
    pub scan_macs: u64,
    pub total_macs: u64,
    pub encode_seconds: Option<f64>,
    pub decode_seconds: Option<f64>,
    pub bytes: Option<usize>,
}

/// Smooth gradients plus seeded noise, values in `[0, 1]`.
pub fn synthetic_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = param_stream(seed, "synthetic_image");
    Tensor::from_fn([h, w, 3], |i| {
        let (p, c) = (i / 3, i % 3);
        let (y, x) = ((p / w) as f32 / h as f32, (p % w) as f32 / w as f32);
        let base = match c {
            0 => x,
            1 => y,
            _ => 0.5 + 0.4 * (6.0 * x * y).sin(),
        };
        (base + 0.1 * (rng.unit() as f32 - 0.5)).clamp(0.0, 1.0)
    })
}

/// One row per size; with `timing` set each size is encoded and decoded once.
pub fn run(codec: &Codec, sizes: &[usize], seed: u64, timing: bool) -> Result<Vec<BenchRow>> {
    let cfg = &codec.model().config;
    sizes
        .iter()
        .map(|&n| {
            let costs = pipeline_costs(cfg, n, n);
            let mut row = BenchRow {
                size: n,
                pixels: n * n,
                stage_macs: costs.iter().map(|c| (c.stage, c.macs)).collect(),
                scan_macs: costs.iter().map(|c| c.scan_macs).sum(),
                total_macs: costs.iter().map(|c| c.macs).sum(),
                encode_seconds: None,
                decode_seconds: None,
                bytes: None,
            };
            if timing {
                let img = synthetic_image(n, n, seed);
                let t = Instant::now();
                let enc = codec.encode(&img, 0)?;
                row.encode_seconds = Some(t.elapsed().as_secs_f64());
                let t = Instant::now();
                codec.decode(&enc)?;
                row.decode_seconds = Some(t.elapsed().as_secs_f64());
                row.bytes = Some(enc.payload_bytes());
                log::info!("bench {n}x{n}: encode {:.2}s", row.encode_seconds.unwrap_or_default());
            }
            Ok(row)
        })
        .collect()
}

pub fn write_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = rows.first() else {
        return Ok(());
    };
    let mut header = vec!["size".to_owned(), "pixels".to_owned()];
    header.extend(first.stage_macs.iter().map(|(s, _)| format!("{s}_macs")));
    header.extend(
        [
            "scan_macs",
            "total_macs",
            "encode_seconds",
            "decode_seconds",
            "payload_bytes",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        let mut rec = vec![r.size.to_string(), r.pixels.to_string()];
        rec.extend(r.stage_macs.iter().map(|(_, m)| m.to_string()));
        rec.push(r.scan_macs.to_string());
        rec.push(r.total_macs.to_string());
        rec.push(opt(r.encode_seconds.map(|s| format!("{s:.4}"))));
        rec.push(opt(r.decode_seconds.map(|s| format!("{s:.4}"))));
        rec.push(opt(r.bytes.map(|b| b.to_string())));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
