use super::IoError;
use crate::grid::ProbMap;

const MAGIC: &[u8] = b"FMAP\n";

/// Encodes a probability map: ASCII header, then little-endian `f32`s,
/// channel-major, row-major within each channel.
pub fn write_fmap(p: &ProbMap) -> Vec<u8> {
    let (w, h, c) = (p.width(), p.height(), p.class_count());
    let mut out = format!("FMAP\n{w} {h} {c}\n").into_bytes();
    out.reserve(w * h * c * 4);
    for ch in 0..c {
        for i in 0..w * h {
            out.extend_from_slice(&(p.probs()[i * c + ch] as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes an FMAP. Values are widened to `f64` and renormalized per pixel to
/// absorb `f32` rounding, then validated as a probability map.
pub fn read_fmap(bytes: &[u8]) -> Result<ProbMap, IoError> {
    if !bytes.starts_with(MAGIC) {
        return Err(IoError::BadMagic {
            expected: "FMAP",
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    let start = MAGIC.len();
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)
        .ok_or_else(|| IoError::Header {
            offset: start,
            message: "missing end of dimension line".into(),
        })?;
    let line = std::str::from_utf8(&bytes[start..end]).map_err(|_| IoError::Header {
        offset: start,
        message: "dimension line is not ASCII".into(),
    })?;
    let dims: Vec<usize> = line
        .split(' ')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| IoError::Header {
            offset: start,
            message: format!("expected `<width> <height> <channels>`, got `{line}`"),
        })?;
    let [w, h, c] = dims[..] else {
        return Err(IoError::Header {
            offset: start,
            message: format!("expected three dimensions, got {}", dims.len()),
        });
    };
    let payload = &bytes[end + 1..];
    let expected = w * h * c * 4;
    if payload.len() < expected {
        return Err(IoError::Truncated {
            offset: bytes.len(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IoError::Trailing {
            offset: end + 1 + expected,
            extra: payload.len() - expected,
        });
    }
    let mut probs = vec![0.0; w * h * c];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let (ch, i) = (k / (w * h), k % (w * h));
        probs[i * c + ch] = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
    }
    for px in probs.chunks_mut(c.max(1)) {
        let s: f64 = px.iter().sum();
        if s > 0.0 && (s - 1.0).abs() < 1e-4 {
            px.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(ProbMap::new(w, h, c, probs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProbMap {
        ProbMap::new(3, 2, 2, vec![0.1, 0.9, 0.5, 0.5, 1.0, 0.0, 0.25, 0.75, 0.3, 0.7, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn layout_is_planar() {
        let bytes = write_fmap(&sample());
        assert!(bytes.starts_with(b"FMAP\n3 2 2\n"));
        let payload = &bytes[11..];
        assert_eq!(payload.len(), 48);
        let first = f32::from_le_bytes(payload[0..4].try_into().unwrap());
        let second_channel = f32::from_le_bytes(payload[24..28].try_into().unwrap());
        assert_eq!((first, second_channel), (0.1f32, 0.9f32));
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let bytes = write_fmap(&sample());
        let back = read_fmap(&bytes).unwrap();
        assert_eq!(write_fmap(&back), bytes);
        assert!(back.probs().iter().zip(sample().probs()).all(|(a, b)| (a - b).abs() < 1e-7));
    }

    #[test]
    fn length_is_cross_checked() {
        let bytes = write_fmap(&sample());
        let err = read_fmap(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(err, IoError::Truncated { expected: 48, found: 44, .. }));
        assert!(err.to_string().contains("byte 55"));
        let mut long = bytes;
        long.extend([0; 4]);
        assert!(matches!(read_fmap(&long), Err(IoError::Trailing { offset: 59, extra: 4 })));
        assert!(matches!(read_fmap(b"FMAQ\n"), Err(IoError::BadMagic { .. })));
        assert!(matches!(read_fmap(b"FMAP\n3 2\n"), Err(IoError::Header { .. })));
    }
}
