//! 8-bit raster images and binary PNM (PGM/PPM) I/O.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(height: usize, width: usize, channels: usize, v: u8) -> Self {
        Image { height, width, channels, data: vec![v; height * width * channels] }
    }

    pub fn gray(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        Self::from_raw(height, width, 1, data)
    }

    pub fn from_raw(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::ShapeMismatch(format!("{channels} channels; expected 1 or 3")));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!("{} bytes for {height}x{width}x{channels}", data.len())));
        }
        Ok(Image { height, width, channels, data })
    }

    /// Gray value at `(y, x)`; only meaningful for single-channel images.
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].fill(v);
    }

    /// Fills the half-open rectangle `[x1, x2) x [y1, y2)`, clipped to the image.
    pub fn fill_rect(&mut self, x1: usize, y1: usize, x2: usize, y2: usize, v: u8) {
        for y in y1..y2.min(self.height) {
            for x in x1..x2.min(self.width) {
                self.set(y, x, v);
            }
        }
    }

    /// BT.601 luma for RGB, the image itself for gray.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round().clamp(0.0, 255.0) as u8)
            .collect();
        Image { height: self.height, width: self.width, channels: 1, data }
    }

    pub fn write_pnm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.encode_pnm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn encode_pnm(&self, mut w: impl Write) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(w, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
        Self::decode_pnm(BufReader::new(std::fs::File::open(path)?))
    }

    /// Reads binary PGM (`P5`) or PPM (`P6`) with maxval 255.
    pub fn decode_pnm(mut r: impl BufRead) -> Result<Image> {
        let mut fields = Vec::new();
        while fields.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("truncated PNM header".into()));
            }
            let line = line.split('#').next().unwrap_or("");
            fields.extend(line.split_whitespace().map(str::to_owned));
        }
        if fields.len() != 4 {
            return Err(Error::Format("PNM header fields must end at a line break".into()));
        }
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(Error::Format(format!("unsupported PNM magic {m}"))),
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PNM header value {s:?}")));
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("maxval {maxval} unsupported")));
        }
        let mut data = vec![0u8; width * height * channels];
        r.read_exact(&mut data).map_err(|_| Error::Format("truncated PNM pixel data".into()))?;
        Image::from_raw(height, width, channels, data)
    }
}
