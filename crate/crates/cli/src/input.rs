//! Decoding single 48×48 grayscale inputs: binary (P5) or ASCII (P2) PGM
//! with maxval 255, or a row of 2304 comma- or whitespace-separated integers.

use fer_core::{IMAGE_PIXELS, IMAGE_SIDE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InputError {
    #[error("unsupported input format: expected a P5/P2 PGM or a row of {IMAGE_PIXELS} integers")]
    UnsupportedFormat,
    #[error("malformed PGM header: {0}")]
    PgmHeader(String),
    #[error("image is {width}×{height}, expected {IMAGE_SIDE}×{IMAGE_SIDE}")]
    Dimensions { width: usize, height: usize },
    #[error("PGM maxval must be 255, got {0}")]
    MaxVal(usize),
    #[error("expected {IMAGE_PIXELS} pixels, got {0}")]
    PixelCount(usize),
    #[error("pixel '{0}' is not an integer in 0..=255")]
    PixelValue(String),
}

pub type Result<T> = std::result::Result<T, InputError>;

/// Checks count and range of already-parsed pixel values.
pub fn pixels_from_ints(values: &[i64]) -> Result<Vec<u8>> {
    if values.len() != IMAGE_PIXELS {
        return Err(InputError::PixelCount(values.len()));
    }
    values
        .iter()
        .map(|&v| u8::try_from(v).map_err(|_| InputError::PixelValue(v.to_string())))
        .collect()
}

/// Sniffs the format from the leading bytes.
pub fn decode(bytes: &[u8]) -> Result<Vec<u8>> {
    match bytes.get(..2) {
        Some(b"P5") | Some(b"P2") => decode_pgm(bytes),
        _ => {
            let text = std::str::from_utf8(bytes).map_err(|_| InputError::UnsupportedFormat)?;
            decode_csv(text)
        }
    }
}

pub fn decode_csv(text: &str) -> Result<Vec<u8>> {
    let tokens: Vec<&str> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(InputError::UnsupportedFormat);
    }
    if tokens.len() != IMAGE_PIXELS {
        return Err(InputError::PixelCount(tokens.len()));
    }
    tokens
        .iter()
        .map(|t| t.parse::<u8>().map_err(|_| InputError::PixelValue(t.to_string())))
        .collect()
}

/// Reads whitespace-separated header tokens, skipping `#` comments. Returns
/// the token and the position just past it.
fn next_token(bytes: &[u8], mut pos: usize) -> Option<(&str, usize)> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        break;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if pos == start {
        return None;
    }
    std::str::from_utf8(&bytes[start..pos]).ok().map(|t| (t, pos))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Vec<u8>> {
    let (magic, mut pos) = next_token(bytes, 0).ok_or(InputError::UnsupportedFormat)?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        _ => return Err(InputError::UnsupportedFormat),
    };
    let mut header = [0usize; 3];
    for (value, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let (token, next) = next_token(bytes, pos).ok_or_else(|| InputError::PgmHeader(format!("missing {name}")))?;
        *value = token
            .parse()
            .map_err(|_| InputError::PgmHeader(format!("{name} '{token}' is not a number")))?;
        pos = next;
    }
    let [width, height, maxval] = header;
    if (width, height) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(InputError::Dimensions { width, height });
    }
    if maxval != 255 {
        return Err(InputError::MaxVal(maxval));
    }
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let raster = bytes.get(pos + 1..).unwrap_or_default();
        if raster.len() < IMAGE_PIXELS {
            return Err(InputError::PixelCount(raster.len()));
        }
        Ok(raster[..IMAGE_PIXELS].to_vec())
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| InputError::UnsupportedFormat)?;
        let tokens: Vec<&str> = text.split_ascii_whitespace().collect();
        if tokens.len() != IMAGE_PIXELS {
            return Err(InputError::PixelCount(tokens.len()));
        }
        tokens
            .iter()
            .map(|t| t.parse::<u8>().map_err(|_| InputError::PixelValue(t.to_string())))
            .collect()
    }
}

/// Binary PGM encoding of a 48×48 image.
pub fn encode_pgm(pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Vec<u8> {
        (0..IMAGE_PIXELS).map(|i| (i % 256) as u8).collect()
    }

    #[test]
    fn binary_pgm_round_trip() {
        assert_eq!(decode(&encode_pgm(&ramp())).unwrap(), ramp());
    }

    #[test]
    fn ascii_pgm_with_comments() {
        let body: Vec<String> = ramp().iter().map(u8::to_string).collect();
        let text = format!("P2\n# made by hand\n48 48\n# max\n255\n{}\n", body.join(" "));
        assert_eq!(decode(text.as_bytes()).unwrap(), ramp());
    }

    #[test]
    fn csv_row_with_commas_or_spaces() {
        let body: Vec<String> = ramp().iter().map(u8::to_string).collect();
        assert_eq!(decode(body.join(",").as_bytes()).unwrap(), ramp());
        assert_eq!(decode(format!("{}\n", body.join(" ")).as_bytes()).unwrap(), ramp());
    }

    #[test]
    fn wrong_dimensions() {
        let mut bytes = b"P5\n47 48\n255\n".to_vec();
        bytes.extend(vec![0u8; 47 * 48]);
        assert_eq!(decode(&bytes), Err(InputError::Dimensions { width: 47, height: 48 }));
    }

    #[test]
    fn wrong_maxval_and_short_raster() {
        let mut bytes = b"P5 48 48 65535\n".to_vec();
        bytes.extend(vec![0u8; IMAGE_PIXELS * 2]);
        assert_eq!(decode(&bytes), Err(InputError::MaxVal(65535)));
        let mut bytes = b"P5 48 48 255\n".to_vec();
        bytes.extend(vec![0u8; 100]);
        assert_eq!(decode(&bytes), Err(InputError::PixelCount(100)));
    }

    #[test]
    fn binary_raster_may_start_with_whitespace_bytes() {
        let mut pixels = ramp();
        pixels[0] = b'\n';
        pixels[1] = b' ';
        assert_eq!(decode(&encode_pgm(&pixels)).unwrap(), pixels);
    }

    #[test]
    fn bad_values() {
        let mut row = vec!["0"; IMAGE_PIXELS];
        row[5] = "256";
        assert_eq!(decode(row.join(",").as_bytes()), Err(InputError::PixelValue("256".into())));
        assert_eq!(decode(b"1,2,3"), Err(InputError::PixelCount(3)));
        assert_eq!(decode(&[0xff, 0xfe]), Err(InputError::UnsupportedFormat));
        assert_eq!(pixels_from_ints(&vec![-1; IMAGE_PIXELS]), Err(InputError::PixelValue("-1".into())));
        assert_eq!(pixels_from_ints(&[0; 2303]), Err(InputError::PixelCount(2303)));
    }
}
