use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::VisionError;

/// 8-bit row-major image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, VisionError> {
        if channels != 1 && channels != 3 {
            return Err(VisionError::Channels(channels));
        }
        if data.len() != width * height * channels {
            return Err(VisionError::DataLength {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("valid channel count")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// Gray value at `(x, y)`; panics if out of bounds or not grayscale.
    pub fn gray(&self, x: usize, y: usize) -> u8 {
        debug_assert!(self.is_gray());
        self.data[y * self.width + x]
    }

    pub fn set_gray(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(self.is_gray());
        self.data[y * self.width + x] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: &[u8]) {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(px);
    }

    pub fn mirror_horizontal(&self) -> Self {
        let mut out = self.clone();
        let c = self.channels;
        for y in 0..self.height {
            for x in 0..self.width {
                let src = (y * self.width + (self.width - 1 - x)) * c;
                let dst = (y * self.width + x) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        out
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Writes binary PPM (P6) for RGB or PGM (P5) for gray images.
    pub fn write_pnm(&self, mut w: impl Write) -> std::io::Result<()> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        write!(w, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn save_pnm(&self, path: &Path) -> Result<(), VisionError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_pnm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_pnm(r: impl Read) -> Result<Self, VisionError> {
        let mut r = BufReader::new(r);
        let magic = next_token(&mut r)?;
        let channels = match magic.as_str() {
            "P6" => 3,
            "P5" => 1,
            other => return Err(VisionError::Pnm(format!("unsupported magic `{other}`"))),
        };
        let width = parse_dim(&next_token(&mut r)?)?;
        let height = parse_dim(&next_token(&mut r)?)?;
        let maxval = parse_dim(&next_token(&mut r)?)?;
        if maxval != 255 {
            return Err(VisionError::Pnm(format!("maxval {maxval} unsupported")));
        }
        let mut data = vec![0u8; width * height * channels];
        r.read_exact(&mut data)
            .map_err(|_| VisionError::Pnm("pixel data truncated".into()))?;
        Self::new(width, height, channels, data)
    }

    pub fn load_pnm(path: &Path) -> Result<Self, VisionError> {
        Self::read_pnm(std::fs::File::open(path)?)
    }
}

fn parse_dim(tok: &str) -> Result<usize, VisionError> {
    tok.parse()
        .map_err(|_| VisionError::Pnm(format!("bad header field `{tok}`")))
}

/// Reads one whitespace-delimited header token, skipping `#` comments, and
/// consumes exactly one trailing whitespace byte.
fn next_token(r: &mut impl BufRead) -> Result<String, VisionError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(VisionError::Pnm("unexpected end of header".into()));
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(b as char);
    }
}
