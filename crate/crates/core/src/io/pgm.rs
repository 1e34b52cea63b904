use super::IoError;
use crate::grid::{BinaryMask, GridImage, LabelMask};

/// A decoded 8-bit binary PGM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u8,
    pub data: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, IoError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IoError::Header {
                offset: start,
                message: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits")
            .parse()
            .map_err(|_| IoError::Header {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<Pgm, IoError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(IoError::BadMagic {
            expected: "P5",
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned(),
        });
    }
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(IoError::Header {
            offset: maxval_at,
            message: format!("maxval {maxval} is not an 8-bit value"),
        });
    }
    if width == 0 || height == 0 {
        return Err(IoError::Header {
            offset: 2,
            message: "zero-sized image".into(),
        });
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => {
            return Err(IoError::Header {
                offset: c.pos,
                message: "expected one whitespace byte before the payload".into(),
            })
        }
    }
    let expected = width * height;
    let found = bytes.len() - c.pos;
    if found < expected {
        return Err(IoError::Truncated {
            offset: bytes.len(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(IoError::Trailing {
            offset: c.pos + expected,
            extra: found - expected,
        });
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u8,
        data: bytes[c.pos..].to_vec(),
    })
}

pub fn write_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    out.extend_from_slice(&pgm.data);
    out
}

/// Quantizes intensities to 8 bits.
pub fn image_to_pgm(img: &GridImage) -> Pgm {
    Pgm {
        width: img.width(),
        height: img.height(),
        maxval: 255,
        data: img.data().iter().map(|v| (v * 255.0).round() as u8).collect(),
    }
}

pub fn image_from_pgm(pgm: &Pgm) -> GridImage {
    let m = pgm.maxval as f64;
    GridImage::from_fn(pgm.width, pgm.height, |x, y| pgm.data[y * pgm.width + x] as f64 / m)
}

/// Label ids are stored as raw byte values.
pub fn labels_to_pgm(labels: &LabelMask) -> Pgm {
    Pgm {
        width: labels.width(),
        height: labels.height(),
        maxval: 255,
        data: labels.labels().to_vec(),
    }
}

pub fn labels_from_pgm(pgm: &Pgm, class_count: usize) -> Result<LabelMask, IoError> {
    Ok(LabelMask::new(pgm.width, pgm.height, class_count, pgm.data.clone())?)
}

pub fn mask_to_pgm(mask: &BinaryMask) -> Pgm {
    Pgm {
        width: mask.width(),
        height: mask.height(),
        maxval: 255,
        data: mask.bits().iter().map(|&b| b as u8).collect(),
    }
}

/// Any nonzero byte is foreground.
pub fn mask_from_pgm(pgm: &Pgm) -> BinaryMask {
    BinaryMask::from_fn(pgm.width, pgm.height, |x, y| pgm.data[y * pgm.width + x] != 0)
}
