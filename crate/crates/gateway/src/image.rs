use serde::{Deserialize, Serialize};

use crate::{GatewayError, Result};

/// 8-bit RGBA bitmap, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbaImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let img = Self { width, height, pixels };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(GatewayError::InvalidRequest("image is empty".into()));
        }
        if self.pixels.len() != self.width as usize * self.height as usize * 4 {
            return Err(GatewayError::InvalidRequest(format!(
                "{} bytes for a {}x{} RGBA image",
                self.pixels.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width, self.height);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let err = |e: png::EncodingError| GatewayError::InvalidRequest(format!("png encoding: {e}"));
        let mut w = enc.write_header().map_err(err)?;
        w.write_image_data(&self.pixels).map_err(err)?;
        w.finish().map_err(err)?;
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| GatewayError::MalformedResponse(format!("png: {m}"));
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::ALPHA);
        let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
        let size = reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(bad(format!("unsupported bit depth {:?}", info.bit_depth)));
        }
        buf.truncate(info.buffer_size());
        let pixels = match info.color_type {
            png::ColorType::Rgba => buf,
            png::ColorType::GrayscaleAlpha => buf.chunks(2).flat_map(|p| [p[0], p[0], p[0], p[1]]).collect(),
            other => return Err(bad(format!("unsupported color type {other:?}"))),
        };
        Self::new(info.width, info.height, pixels).map_err(|e| bad(e.to_string()))
    }
}
