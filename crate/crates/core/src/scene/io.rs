use crate::binio::{FormatError, Reader};
use crate::geometry::{DepthImage, MaskImage};

pub const DEPTH_MAGIC: &[u8; 4] = b"DPT1";
pub const MASK_MAGIC: &[u8; 4] = b"MSK1";

fn header(magic: &[u8; 4], width: usize, height: usize, cap: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + cap);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out
}

fn read_header(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<(usize, usize), FormatError> {
    r.expect_magic(magic)?;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    r.u32()?;
    if w == 0 || h == 0 {
        return Err(FormatError(format!("empty image {w}x{h}")));
    }
    Ok((w, h))
}

/// `DPT1`, width, height, reserved (u32 each), then row-major f64 depths.
pub fn write_depth(img: &DepthImage) -> Vec<u8> {
    let mut out = header(DEPTH_MAGIC, img.width, img.height, img.depth.len() * 8);
    for d in &img.depth {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn read_depth(bytes: &[u8]) -> Result<DepthImage, FormatError> {
    let mut r = Reader::new(bytes);
    let (width, height) = read_header(&mut r, DEPTH_MAGIC)?;
    let depth = (0..width * height)
        .map(|_| r.f64())
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(DepthImage {
        width,
        height,
        depth,
    })
}

/// `MSK1`, width, height, reserved (u32 each), then row-major i32 labels.
pub fn write_mask(img: &MaskImage) -> Vec<u8> {
    let mut out = header(MASK_MAGIC, img.width, img.height, img.labels.len() * 4);
    for l in &img.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn read_mask(bytes: &[u8]) -> Result<MaskImage, FormatError> {
    let mut r = Reader::new(bytes);
    let (width, height) = read_header(&mut r, MASK_MAGIC)?;
    let labels = (0..width * height)
        .map(|_| r.i32())
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(MaskImage {
        width,
        height,
        labels,
    })
}
