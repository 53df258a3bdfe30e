//! Grayscale image files (PGM P2/P5, 8-bit PNG), synthetic fixtures and
//! seeded Gaussian noise.
//!
//! Pixel values live in `[0, 1]` in memory. Reading maps a sample `v` with
//! maximum `maxval` to `v / maxval`; writing clamps to `[0, 1]` and stores
//! `round(255 v)`.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::ImageIoError;
use crate::grid::Image;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Reads a grayscale PGM or PNG file, detected by its magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, ImageIoError> {
    decode_image(&fs::read(path)?)
}

/// Decodes an in-memory PGM or PNG file.
pub fn decode_image(bytes: &[u8]) -> Result<Image, ImageIoError> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(ImageIoError::Unsupported(format!(
            "netpbm variant P{} (only grayscale P2/P5 is supported)",
            bytes[1] as char
        )))
    } else {
        Err(ImageIoError::Unsupported("not a PGM or PNG file".into()))
    }
}

/// Byte cursor over a netpbm header.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
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

    fn number(&mut self, what: &str) -> Result<usize, ImageIoError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageIoError::CorruptHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageIoError::CorruptHeader(format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let binary = bytes[1] == b'5';
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 {
        return Err(ImageIoError::CorruptHeader("maxval is 0".into()));
    }
    if maxval > 255 {
        return Err(ImageIoError::Unsupported(format!(
            "16-bit PGM (maxval {maxval})"
        )));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| ImageIoError::CorruptHeader("image too large".into()))?;
    let maxf = maxval as f64;

    let samples: Vec<usize> = if binary {
        // exactly one whitespace byte separates the header from the raster
        if !h.bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(ImageIoError::CorruptHeader(
                "missing whitespace after maxval".into(),
            ));
        }
        let raster = &bytes[h.pos + 1..];
        if raster.len() < expected {
            return Err(ImageIoError::TruncatedData {
                expected,
                found: raster.len(),
            });
        }
        raster[..expected].iter().map(|&b| b as usize).collect()
    } else {
        let mut out = Vec::with_capacity(expected);
        while out.len() < expected {
            h.skip_space_and_comments();
            if h.pos >= bytes.len() {
                return Err(ImageIoError::TruncatedData {
                    expected,
                    found: out.len(),
                });
            }
            out.push(h.number("sample")?);
        }
        out
    };
    if let Some(bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(ImageIoError::InvalidData(format!(
            "sample {bad} exceeds maxval {maxval}"
        )));
    }
    let data = samples.into_iter().map(|s| s as f64 / maxf).collect();
    Ok(Image::new(height, width, data)?)
}

fn decode_png(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageIoError::Png(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(ImageIoError::Unsupported(format!(
            "PNG with {color:?} colour at {depth:?} bit depth (only 8-bit grayscale)"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageIoError::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageIoError::Png(e.to_string()))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let data = buf[..w * h].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image::new(h, w, data)?)
}

/// `round(255 v)` after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM (P5) bytes.
pub fn encode_pgm(x: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", x.n2(), x.n1()).into_bytes();
    out.extend(x.as_slice().iter().map(|&v| quantize(v)));
    out
}

/// 8-bit grayscale PNG bytes.
pub fn encode_png(x: &Image) -> Result<Vec<u8>, ImageIoError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, x.n2() as u32, x.n1() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| ImageIoError::Png(e.to_string());
        let mut w = enc.write_header().map_err(png_err)?;
        let raster: Vec<u8> = x.as_slice().iter().map(|&v| quantize(v)).collect();
        w.write_image_data(&raster).map_err(png_err)?;
        w.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// Writes PNG for a `.png` extension and binary PGM for `.pgm`/`.pnm`. The
/// file is written to a temporary sibling and renamed into place.
pub fn write_image(x: &Image, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("png") => encode_png(x)?,
        Some("pgm") | Some("pnm") => encode_pgm(x),
        _ => {
            return Err(ImageIoError::Unsupported(format!(
                "cannot infer format from `{}` (use .pgm or .png)",
                path.display()
            )))
        }
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| ImageIoError::Io(e.error))?;
    Ok(())
}

/// Synthetic test images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// White 45-degree rotated square on black, centred in an `n x n` grid.
    Rhombus(usize),
    /// `n x n` vertical stripes of width 4 with seeded grey levels; every
    /// column is constant.
    Stripes(usize),
    /// `n x n` black/white checkerboard of 8-pixel cells.
    Checker(usize),
    /// `n x n` piecewise-constant scene: background, rectangles, a disk and
    /// a triangle with seeded grey levels and placement.
    Piecewise(usize),
}

impl Fixture {
    pub fn size(self) -> usize {
        match self {
            Fixture::Rhombus(n) | Fixture::Stripes(n) | Fixture::Checker(n) | Fixture::Piecewise(n) => n,
        }
    }
}

/// Builds a fixture; `seed` only affects the seeded kinds.
pub fn synth_fixture(kind: Fixture, seed: u64) -> Result<Image, ImageIoError> {
    let n = kind.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = match kind {
        Fixture::Rhombus(_) => {
            let c = (n as f64 - 1.0) / 2.0;
            let r = 0.35 * n as f64;
            Image::from_fn(n, n, |i, j| {
                if (i as f64 - c).abs() + (j as f64 - c).abs() <= r {
                    1.0
                } else {
                    0.0
                }
            })?
        }
        Fixture::Stripes(_) => {
            let levels: Vec<f64> = (0..n.div_ceil(4)).map(|_| rng.random_range(0.1..0.9)).collect();
            Image::from_fn(n, n, |_, j| levels[j / 4])?
        }
        Fixture::Checker(_) => Image::from_fn(n, n, |i, j| ((i / 8 + j / 8) % 2) as f64)?,
        Fixture::Piecewise(_) => piecewise(n, &mut rng)?,
    };
    Ok(img)
}

fn piecewise(n: usize, rng: &mut ChaCha8Rng) -> Result<Image, ImageIoError> {
    let nf = n as f64;
    let mut img = Image::filled(n, n, rng.random_range(0.1..0.3))?;
    let paint = |img: &mut Image, level: f64, inside: &dyn Fn(f64, f64) -> bool| {
        for i in 0..n {
            for j in 0..n {
                if inside(i as f64, j as f64) {
                    img.set(i, j, level);
                }
            }
        }
    };
    for _ in 0..3 {
        let (i0, j0) = (rng.random_range(0.0..0.6) * nf, rng.random_range(0.0..0.6) * nf);
        let (h, w) = (rng.random_range(0.2..0.4) * nf, rng.random_range(0.2..0.4) * nf);
        let level = rng.random_range(0.3..0.9);
        paint(&mut img, level, &|i, j| i >= i0 && i < i0 + h && j >= j0 && j < j0 + w);
    }
    let (ci, cj) = (rng.random_range(0.3..0.7) * nf, rng.random_range(0.3..0.7) * nf);
    let rad = rng.random_range(0.12..0.2) * nf;
    let level = rng.random_range(0.5..1.0);
    paint(&mut img, level, &|i, j| (i - ci).powi(2) + (j - cj).powi(2) <= rad * rad);
    // lower-left triangle with a diagonal edge
    let size = 0.35 * nf;
    let level = rng.random_range(0.0..0.5);
    paint(&mut img, level, &|i, j| {
        let (a, b) = (nf - 1.0 - i, j);
        a >= 0.0 && b >= 0.0 && a + b < size
    });
    Ok(img)
}

/// `x + N(0, sigma^2)` per pixel, reproducible for a given seed and not
/// clamped.
pub fn add_gaussian_noise(x: &Image, sigma: f64, seed: u64) -> Result<Image, ImageIoError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ImageIoError::BadNoiseSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| ImageIoError::BadNoiseSigma(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = x.as_slice().iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(Image::from_parts_unchecked(x.n1(), x.n2(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_bytes_map_to_unit_range() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 128, 64]);
        let x = decode_image(&bytes).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn p2_with_comments_and_non_square_dims() {
        let src = b"P2\n# made by hand\n3 2 # width height\n10\n0 5 10\n# row two\n10 5 0\n";
        let x = decode_image(src).unwrap();
        assert_eq!(x.dims(), (2, 3));
        assert_eq!(x.as_slice(), &[0.0, 0.5, 1.0, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn header_and_data_errors() {
        assert!(matches!(decode_image(b"P5\n2 "), Err(ImageIoError::CorruptHeader(_))));
        assert!(matches!(decode_image(b"P5\n2 2\n"), Err(ImageIoError::CorruptHeader(_))));
        assert!(matches!(
            decode_image(b"P5\n2 2\n255\n\x01\x02"),
            Err(ImageIoError::TruncatedData { expected: 4, found: 2 })
        ));
        assert!(matches!(
            decode_image(b"P2 2 2 255 1 2 3"),
            Err(ImageIoError::TruncatedData { expected: 4, found: 3 })
        ));
        assert!(matches!(decode_image(b"P5 2 2 65535\n"), Err(ImageIoError::Unsupported(_))));
        assert!(matches!(decode_image(b"P6 2 2 255\n"), Err(ImageIoError::Unsupported(_))));
        assert!(matches!(decode_image(b"GIF89a"), Err(ImageIoError::Unsupported(_))));
        assert!(matches!(decode_image(b"P2 2 2 9 1 2 3 10"), Err(ImageIoError::InvalidData(_))));
        assert!(matches!(decode_image(b"P5 1 2 255\n\x00\x00"), Err(ImageIoError::Grid(_))));
    }

    #[test]
    fn quantize_clamps() {
        assert_eq!(quantize(1.2), 255);
        assert_eq!(quantize(-0.1), 0);
        assert_eq!(quantize(0.5), 128);
    }

    fn quantized(n1: usize, n2: usize) -> Image {
        Image::from_fn(n1, n2, |i, j| ((i * 37 + j * 11) % 256) as f64 / 255.0).unwrap()
    }

    #[test]
    fn encode_decode_roundtrip() {
        let x = quantized(5, 7);
        assert_eq!(decode_image(&encode_pgm(&x)).unwrap(), x);
        assert_eq!(decode_image(&encode_png(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn file_roundtrip_and_bad_extension() {
        let dir = tempfile::tempdir().unwrap();
        let x = quantized(16, 9);
        for name in ["a.pgm", "b.png", "c.PNG"] {
            let p = dir.path().join(name);
            write_image(&x, &p).unwrap();
            assert_eq!(read_image(&p).unwrap(), x, "{name}");
        }
        assert!(matches!(
            write_image(&x, dir.path().join("d.bmp")),
            Err(ImageIoError::Unsupported(_))
        ));
        // only the three images, no stray temporaries
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 3);
    }

    #[test]
    fn rgb_png_is_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 2, 2);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            enc.write_header().unwrap().write_image_data(&[0; 12]).unwrap();
        }
        assert!(matches!(decode_image(&out), Err(ImageIoError::Unsupported(_))));
    }

    #[test]
    fn rhombus_is_dihedrally_symmetric() {
        let x = synth_fixture(Fixture::Rhombus(92), 0).unwrap();
        let n = 92;
        for i in 0..n {
            for j in 0..n {
                let v = x.get(i, j);
                assert_eq!(v, x.get(n - 1 - i, j));
                assert_eq!(v, x.get(i, n - 1 - j));
                assert_eq!(v, x.get(j, i));
            }
        }
        assert_eq!(x.get(46, 46), 1.0);
        assert_eq!(x.get(0, 0), 0.0);
    }

    #[test]
    fn stripes_have_constant_columns() {
        let x = synth_fixture(Fixture::Stripes(32), 4).unwrap();
        for i in 1..32 {
            for j in 0..32 {
                assert_eq!(x.get(i, j), x.get(0, j));
            }
        }
    }

    #[test]
    fn fixtures_are_seed_deterministic() {
        for kind in [Fixture::Piecewise(64), Fixture::Stripes(16)] {
            assert_eq!(synth_fixture(kind, 7).unwrap(), synth_fixture(kind, 7).unwrap());
            assert_ne!(synth_fixture(kind, 7).unwrap(), synth_fixture(kind, 8).unwrap());
        }
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let x = Image::filled(256, 256, 0.5).unwrap();
        assert_eq!(add_gaussian_noise(&x, 0.0, 1).unwrap(), x);
        let y = add_gaussian_noise(&x, 0.18, 1).unwrap();
        let mean = y.mean();
        let var = y.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var.sqrt() / 0.18 - 1.0).abs() <= 0.03, "std {}", var.sqrt());
        assert_eq!(y, add_gaussian_noise(&x, 0.18, 1).unwrap());
        assert_ne!(y, add_gaussian_noise(&x, 0.18, 2).unwrap());
        assert!(add_gaussian_noise(&x, -1.0, 1).is_err());
    }

    #[test]
    fn noise_is_not_clamped() {
        let x = Image::filled(64, 64, 0.99).unwrap();
        let y = add_gaussian_noise(&x, 0.18, 3).unwrap();
        assert!(y.as_slice().iter().any(|&v| v > 1.0));
    }
}
