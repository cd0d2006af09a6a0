//! Bitstream file layout. All integers are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SSMC"
//!      4     2  format version (1)
//!      6     4  model fingerprint
//!     10     1  λ index
//!     11     1  slice count S
//!     12     4  height
//!     16     4  width
//!     20     4  ẑ payload length n
//!     24     n  ẑ payload
//!   then S times: 4-byte length, payload (slice order 0..S-1)
//! ```

use ssmcodec_core::codec::EncodedImage;
use ssmcodec_core::entropy::LAMBDA_LADDER;

use crate::error::{CodecError, Result};

pub const MAGIC: [u8; 4] = *b"SSMC";
pub const VERSION: u16 = 1;
/// Bytes before the ẑ payload.
pub const HEADER_BYTES: usize = 24;

fn push_payload(out: &mut Vec<u8>, payload: &[u8]) -> Result<()> {
    let n = u32::try_from(payload.len()).map_err(|_| CodecError::format("bitstream", "payload exceeds 4 GiB"))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(())
}

pub fn to_bytes(enc: &EncodedImage) -> Result<Vec<u8>> {
    let slices =
        u8::try_from(enc.slice_streams.len()).map_err(|_| CodecError::format("bitstream", "more than 255 slices"))?;
    let mut out = Vec::with_capacity(HEADER_BYTES + enc.payload_bytes() + 4 * enc.slice_streams.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&enc.model_id.to_le_bytes());
    out.push(enc.lambda_index);
    out.push(slices);
    out.extend_from_slice(&enc.height.to_le_bytes());
    out.extend_from_slice(&enc.width.to_le_bytes());
    push_payload(&mut out, &enc.z_stream)?;
    for s in &enc.slice_streams {
        push_payload(&mut out, s)?;
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CodecError::format("bitstream", format!("truncated in {field} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn payload(&mut self, field: &str) -> Result<Vec<u8>> {
        let n = self.u32(field)? as usize;
        Ok(self.take(n, field)?.to_vec())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<EncodedImage> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(CodecError::format("bitstream", "bad magic"));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(CodecError::format(
            "bitstream",
            format!("unsupported version {version}"),
        ));
    }
    let model_id = r.u32("model id")?;
    let lambda_index = r.take(1, "lambda index")?[0];
    if lambda_index as usize >= LAMBDA_LADDER.len() {
        return Err(CodecError::format(
            "bitstream",
            format!("λ index {lambda_index} out of range"),
        ));
    }
    let slices = r.take(1, "slice count")?[0] as usize;
    let height = r.u32("height")?;
    let width = r.u32("width")?;
    if height == 0 || width == 0 {
        return Err(CodecError::format("bitstream", "zero image extent"));
    }
    let z_stream = r.payload("z payload")?;
    let slice_streams = (0..slices)
        .map(|_| r.payload("slice payload"))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(CodecError::format(
            "bitstream",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(EncodedImage {
        height,
        width,
        model_id,
        lambda_index,
        z_stream,
        slice_streams,
    })
}
