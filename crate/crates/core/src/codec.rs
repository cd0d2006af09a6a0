//! Padding and end-to-end encode / decode of an image into entropy-coded
//! latent streams.
//!
//! Symbols are written position-major with channels innermost: `ẑ` under the
//! factorized prior (one table per channel), then each latent slice under the
//! Gaussian conditional. Slices are coded in order because the parameters
//! of slice `i` depend on the reconstruction of slices `0..i`.

use alloc::vec::Vec;

use crate::entropy::{estimate_rate, lattice_symbols, GaussianConditional};
use crate::error::{Error, Result, StageExt};
use crate::range_coder::{self, CdfTable};
use crate::tensor::Tensor;
use crate::transforms::{
    analysis, hyper_analysis, hyper_synthesis, slice_params, slice_residual, synthesis, LatentBundle, Model,
    TOTAL_STRIDE,
};

/// Original extents of a padded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
}

/// Mirror index for reflect padding; repeats the reflection for pads longer
/// than the input.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

pub fn padded_extent(n: usize) -> usize {
    n.div_ceil(TOTAL_STRIDE).max(1) * TOTAL_STRIDE
}

/// Reflect-pads `[H, W, C]` on the bottom and right to multiples of 64.
pub fn pad(image: &Tensor) -> Result<(Tensor, CropRecord)> {
    let (h, w, c) = image.dims3("pad")?;
    if h == 0 || w == 0 {
        return Err(Error::invalid("pad", "empty image"));
    }
    let (ph, pw) = (padded_extent(h), padded_extent(w));
    let src = image.data();
    let mut out = Vec::with_capacity(ph * pw * c);
    for y in 0..ph {
        let sy = reflect(y, h);
        for x in 0..pw {
            let base = (sy * w + reflect(x, w)) * c;
            out.extend_from_slice(&src[base..base + c]);
        }
    }
    Ok((Tensor::new([ph, pw, c], out)?, CropRecord { height: h, width: w }))
}

/// Crops the top-left `crop.height × crop.width` region.
pub fn unpad(padded: &Tensor, crop: CropRecord) -> Result<Tensor> {
    let (h, w, c) = padded.dims3("unpad")?;
    if crop.height > h || crop.width > w {
        return Err(Error::invalid("unpad", "crop larger than the padded image"));
    }
    let src = padded.data();
    let mut out = Vec::with_capacity(crop.height * crop.width * c);
    for y in 0..crop.height {
        let base = y * w * c;
        out.extend_from_slice(&src[base..base + crop.width * c]);
    }
    Tensor::new([crop.height, crop.width, c], out)
}

/// Coded streams of one image, independent of any file layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub height: u32,
    pub width: u32,
    pub model_id: u32,
    pub lambda_index: u8,
    pub z_stream: Vec<u8>,
    pub slice_streams: Vec<Vec<u8>>,
}

impl EncodedImage {
    pub fn payload_bytes(&self) -> usize {
        self.z_stream.len() + self.slice_streams.iter().map(Vec::len).sum::<usize>()
    }
}

/// Encoder-side intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeTrace {
    pub latents: LatentBundle,
    pub z_symbols: Vec<i32>,
    pub y_symbols: Vec<Vec<i32>>,
    /// `Σ -log₂ p` of the coded `ẑ` symbols.
    pub bits_z: f64,
    /// Per slice.
    pub bits_y: Vec<f64>,
    /// Symbols clamped to the alphabet limit.
    pub saturated: usize,
}

/// Decoder-side intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub z_symbols: Vec<i32>,
    pub y_symbols: Vec<Vec<i32>>,
    pub z_hat: Tensor,
    pub y_hat: Tensor,
    pub y_bar: Tensor,
}

/// A model plus the coder tables derived from it.
#[derive(Debug, Clone)]
pub struct Codec {
    model: Model,
    gaussian: GaussianConditional,
    prior_tables: Vec<CdfTable>,
}

fn z_tables(tables: &[CdfTable], count: usize) -> Vec<&CdfTable> {
    (0..count).map(|i| &tables[i % tables.len()]).collect()
}

fn from_symbols(shape: &[usize], syms: &[i32], mu: Option<&Tensor>) -> Result<Tensor> {
    let data = match mu {
        Some(m) => syms.iter().zip(m.data()).map(|(&s, &m)| s as f32 + m).collect(),
        None => syms.iter().map(|&s| s as f32).collect(),
    };
    Tensor::new(shape.to_vec(), data)
}

impl Codec {
    pub fn new(model: Model) -> Result<Self> {
        let prior_tables = model.prior.tables()?;
        Ok(Codec {
            model,
            gaussian: GaussianConditional::new(),
            prior_tables,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn gaussian(&self) -> &GaussianConditional {
        &self.gaussian
    }

    pub fn prior_tables(&self) -> &[CdfTable] {
        &self.prior_tables
    }

    pub fn encode(&self, image: &Tensor, lambda_index: u8) -> Result<EncodedImage> {
        self.encode_traced(image, lambda_index).map(|(e, _)| e)
    }

    /// Encodes an `[H, W, 3]` image with values in `[0, 1]`.
    pub fn encode_traced(&self, image: &Tensor, lambda_index: u8) -> Result<(EncodedImage, EncodeTrace)> {
        let (h, w, c) = image.dims3("encode")?;
        if c != 3 {
            return Err(Error::shape("encode", "channels", 3, c));
        }
        if h > u32::MAX as usize || w > u32::MAX as usize {
            return Err(Error::invalid("encode", "image too large"));
        }
        if !image.all_finite() {
            return Err(Error::NonFinite { op: "encode" });
        }
        let m = &self.model;
        let (padded, _) = pad(image).stage("pad")?;
        let y = analysis(m, &padded).stage("analysis")?;
        let z = hyper_analysis(m, &y).stage("hyper_analysis")?;

        let zero = Tensor::zeros(z.shape().to_vec());
        let (z_symbols, mut saturated) = lattice_symbols(&z, &zero)?;
        let zt = z_tables(&self.prior_tables, z_symbols.len());
        let bits_z = estimate_rate(&z_symbols, &zt)?;
        let z_stream = range_coder::encode(&z_symbols, &zt).stage("encode z")?;
        let z_hat = from_symbols(z.shape(), &z_symbols, None)?;

        let (mu_t, sigma_t) = hyper_synthesis(m, &z_hat).stage("hyper_synthesis")?;
        let s = m.config.slice_width();
        let mut bars: Vec<Tensor> = Vec::with_capacity(m.config.slices);
        let mut hats = Vec::with_capacity(m.config.slices);
        let mut mus = Vec::with_capacity(m.config.slices);
        let mut sigmas = Vec::with_capacity(m.config.slices);
        let mut y_symbols = Vec::with_capacity(m.config.slices);
        let mut bits_y = Vec::with_capacity(m.config.slices);
        let mut slice_streams = Vec::with_capacity(m.config.slices);
        for i in 0..m.config.slices {
            let y_i = y.channel_slice(i * s, (i + 1) * s)?;
            let (mu, sigma) = slice_params(m, i, &mu_t, &sigma_t, &bars).stage("slice params")?;
            let (syms, sat) = lattice_symbols(&y_i, &mu)?;
            saturated += sat;
            let tables = self.gaussian.tables_for(&sigma);
            bits_y.push(estimate_rate(&syms, &tables)?);
            slice_streams.push(range_coder::encode(&syms, &tables).stage("encode slice")?);
            let y_hat = from_symbols(y_i.shape(), &syms, Some(&mu))?;
            let r = slice_residual(m, i, &mu_t, &sigma_t, &bars, &y_hat).stage("slice residual")?;
            bars.push(y_hat.add(&r)?);
            hats.push(y_hat);
            mus.push(mu);
            sigmas.push(sigma);
            y_symbols.push(syms);
        }
        let cat = |v: &[Tensor]| Tensor::concat_channels(&v.iter().collect::<Vec<_>>());
        let latents = LatentBundle {
            y_hat: cat(&hats)?,
            y_bar: cat(&bars)?,
            mu: cat(&mus)?,
            sigma: cat(&sigmas)?,
            y,
            z,
            z_hat,
            mu_tilde: mu_t,
            sigma_tilde: sigma_t,
        };
        let encoded = EncodedImage {
            height: h as u32,
            width: w as u32,
            model_id: m.config.fingerprint(),
            lambda_index,
            z_stream,
            slice_streams,
        };
        let trace = EncodeTrace {
            latents,
            z_symbols,
            y_symbols,
            bits_z,
            bits_y,
            saturated,
        };
        Ok((encoded, trace))
    }

    pub fn decode(&self, enc: &EncodedImage) -> Result<Tensor> {
        self.decode_traced(enc).map(|(x, _)| x)
    }

    /// Reconstructs an `[H, W, 3]` image clamped to `[0, 1]`.
    pub fn decode_traced(&self, enc: &EncodedImage) -> Result<(Tensor, DecodeTrace)> {
        let m = &self.model;
        if enc.model_id != m.config.fingerprint() {
            return Err(Error::invalid(
                "decode",
                "stream was produced by a different model configuration",
            ));
        }
        if enc.slice_streams.len() != m.config.slices {
            return Err(Error::shape(
                "decode",
                "slice streams",
                m.config.slices,
                enc.slice_streams.len(),
            ));
        }
        let (h, w) = (enc.height as usize, enc.width as usize);
        if h == 0 || w == 0 {
            return Err(Error::invalid("decode", "empty image"));
        }
        let (ph, pw) = (padded_extent(h), padded_extent(w));
        let z_shape = [ph / TOTAL_STRIDE, pw / TOTAL_STRIDE, m.config.hyper_channels()];
        let zt = z_tables(&self.prior_tables, z_shape.iter().product());
        let z_symbols = range_coder::decode(&enc.z_stream, &zt).stage("decode z")?;
        let z_hat = from_symbols(&z_shape, &z_symbols, None)?;

        let (mu_t, sigma_t) = hyper_synthesis(m, &z_hat).stage("hyper_synthesis")?;
        let mut bars: Vec<Tensor> = Vec::with_capacity(m.config.slices);
        let mut hats = Vec::with_capacity(m.config.slices);
        let mut y_symbols = Vec::with_capacity(m.config.slices);
        for (i, stream) in enc.slice_streams.iter().enumerate() {
            let (mu, sigma) = slice_params(m, i, &mu_t, &sigma_t, &bars).stage("slice params")?;
            let tables = self.gaussian.tables_for(&sigma);
            let syms = range_coder::decode(stream, &tables).stage("decode slice")?;
            let y_hat = from_symbols(mu.shape(), &syms, Some(&mu))?;
            let r = slice_residual(m, i, &mu_t, &sigma_t, &bars, &y_hat).stage("slice residual")?;
            bars.push(y_hat.add(&r)?);
            hats.push(y_hat);
            y_symbols.push(syms);
        }
        let y_bar = Tensor::concat_channels(&bars.iter().collect::<Vec<_>>())?;
        let x = synthesis(m, &y_bar).stage("synthesis")?;
        let x = unpad(&x, CropRecord { height: h, width: w })?.map(|v| v.clamp(0.0, 1.0));
        let trace = DecodeTrace {
            z_symbols,
            y_symbols,
            z_hat,
            y_hat: Tensor::concat_channels(&hats.iter().collect::<Vec<_>>())?,
            y_bar,
        };
        Ok((x, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::TransformConfig;
    use crate::weights::init_weights;

    #[test]
    fn pad_examples() {
        let img = Tensor::from_fn([64, 64, 3], |i| i as f32);
        let (p, crop) = pad(&img).unwrap();
        assert_eq!(p, img);
        assert_eq!(unpad(&p, crop).unwrap(), img);
        let img = Tensor::from_fn([65, 64, 3], |i| i as f32);
        let (p, crop) = pad(&img).unwrap();
        assert_eq!(p.shape(), &[128, 64, 3]);
        assert_eq!(unpad(&p, crop).unwrap(), img);
    }

    #[test]
    fn pad_round_trips_small_sizes() {
        for h in 1..=70 {
            for w in [1, 2, 3, 63, 64, 65] {
                let img = Tensor::from_fn([h, w, 1], |i| i as f32);
                let (p, crop) = pad(&img).unwrap();
                assert_eq!(p.shape()[0] % 64, 0);
                assert_eq!(p.shape()[1] % 64, 0);
                assert_eq!(unpad(&p, crop).unwrap(), img);
            }
        }
    }

    #[test]
    fn reflect_mirrors_without_repeating_the_edge() {
        let got: Vec<usize> = (0..9).map(|i| reflect(i, 3)).collect();
        assert_eq!(got, [0, 1, 2, 1, 0, 1, 2, 1, 0]);
    }

    #[test]
    fn tiny_round_trip_recovers_symbols() {
        let cfg = TransformConfig::tiny();
        let store = init_weights(&cfg, 5).unwrap();
        let codec = Codec::new(Model::from_store(&store).unwrap()).unwrap();
        let img = Tensor::from_fn([70, 50, 3], |i| ((i * 7919) % 256) as f32 / 255.0);
        let (enc, et) = codec.encode_traced(&img, 2).unwrap();
        let (x, dt) = codec.decode_traced(&enc).unwrap();
        assert_eq!(x.shape(), &[70, 50, 3]);
        assert_eq!(et.z_symbols, dt.z_symbols);
        assert_eq!(et.y_symbols, dt.y_symbols);
        assert_eq!(et.latents.y_bar, dt.y_bar);
        assert_eq!(codec.encode(&img, 2).unwrap(), enc);
    }

    #[test]
    fn wrong_model_is_rejected() {
        let codec =
            Codec::new(Model::from_store(&init_weights(&TransformConfig::tiny(), 1).unwrap()).unwrap()).unwrap();
        let img = Tensor::zeros([64, 64, 3]);
        let mut enc = codec.encode(&img, 0).unwrap();
        enc.model_id ^= 1;
        assert!(codec.decode(&enc).is_err());
    }
}
