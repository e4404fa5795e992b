//! Image and disparity file formats plus the on-disk sample layout:
//! `<root>/<condition>/<seed>/{left.ppm, right.ppm, disp_left.pfm,
//! disp_right.pfm, occ_left.pgm, occ_right.pgm, meta.txt}`.
//!
//! PPM/PGM are 8-bit binary (P6/P5). PFM is grayscale "Pf" with scale −1.0
//! (little-endian floats) and bottom-up row order. Optional float copies of
//! the views use color PFM ("PF", RGB interleaved) for lossless round-trips.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::array::Array;
use crate::error::{Result, RoseError};
use crate::rng::RNG_ALGORITHM;
use crate::weather::{Condition, StereoSample};

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() {
        let b = bytes[*pos];
        if b == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(RoseError::format("truncated header"));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| RoseError::format("non-UTF-8 header token"))?
        .to_string();
    // exactly one whitespace byte separates the header from pixel data
    *pos += 1;
    Ok(tok)
}

fn parse_dims(bytes: &[u8], pos: &mut usize) -> Result<(usize, usize)> {
    let w: usize = next_token(bytes, pos)?
        .parse()
        .map_err(|_| RoseError::format("bad width"))?;
    let h: usize = next_token(bytes, pos)?
        .parse()
        .map_err(|_| RoseError::format("bad height"))?;
    if w == 0 || h == 0 {
        return Err(RoseError::format("zero image dimension"));
    }
    Ok((w, h))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a [3,H,W] image in [0,1] as binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, img: &Array) -> Result<()> {
    let shape = img.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(RoseError::invalid(format!("write_ppm: expected [3,H,W], got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    let mut out = Vec::with_capacity(64 + 3 * plane);
    write!(out, "P6\n{w} {h}\n255\n")?;
    for p in 0..plane {
        for c in 0..3 {
            out.push(quantize(img.data()[c * plane + p]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a binary PPM into a [3,H,W] array scaled to [0,1].
pub fn read_ppm(path: &Path) -> Result<Array> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    if next_token(&bytes, &mut pos)? != "P6" {
        return Err(RoseError::format("not a P6 PPM"));
    }
    let (w, h) = parse_dims(&bytes, &mut pos)?;
    let maxval: u32 = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| RoseError::format("bad maxval"))?;
    if maxval != 255 {
        return Err(RoseError::format(format!("unsupported PPM maxval {maxval}")));
    }
    let plane = h * w;
    let pixels = bytes
        .get(pos..pos + 3 * plane)
        .ok_or_else(|| RoseError::format("truncated PPM pixel data"))?;
    let mut img = Array::zeros(&[3, h, w]);
    for p in 0..plane {
        for c in 0..3 {
            img.data_mut()[c * plane + p] = pixels[3 * p + c] as f64 / 255.0;
        }
    }
    Ok(img)
}

/// Writes an [H,W] array as grayscale PFM: header "Pf", scale −1.0
/// (little-endian), rows bottom-up.
pub fn write_pfm(path: &Path, a: &Array) -> Result<()> {
    let shape = a.shape();
    if shape.len() != 2 {
        return Err(RoseError::invalid(format!("write_pfm: expected [H,W], got {shape:?}")));
    }
    let (h, w) = (shape[0], shape[1]);
    let mut out = Vec::with_capacity(64 + 4 * h * w);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(a.at2(y, x) as f32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a [3,H,W] image as color PFM ("PF", RGB interleaved, bottom-up).
pub fn write_pfm_color(path: &Path, img: &Array) -> Result<()> {
    let shape = img.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(RoseError::invalid(format!(
            "write_pfm_color: expected [3,H,W], got {shape:?}"
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    let mut out = Vec::with_capacity(64 + 12 * plane);
    write!(out, "PF\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            for c in 0..3 {
                out.extend_from_slice(
                    &(img.data()[c * plane + y * w + x] as f32).to_le_bytes(),
                );
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a grayscale ("Pf" → [H,W]) or color ("PF" → [3,H,W]) PFM.
pub fn read_pfm(path: &Path) -> Result<Array> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let magic = next_token(&bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(RoseError::format(format!("not a PFM file (magic {other:?})"))),
    };
    let (w, h) = parse_dims(&bytes, &mut pos)?;
    let scale: f64 = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| RoseError::format("bad PFM scale"))?;
    let little_endian = scale < 0.0;
    let plane = h * w;
    let data = bytes
        .get(pos..pos + 4 * channels * plane)
        .ok_or_else(|| RoseError::format("truncated PFM data"))?;
    let shape: Vec<usize> = if channels == 1 { vec![h, w] } else { vec![3, h, w] };
    let mut out = Array::zeros(&shape);
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        } as f64;
        // stored bottom-up, channel-interleaved
        let p = i / channels;
        let c = i % channels;
        let (y, x) = (h - 1 - p / w, p % w);
        out.data_mut()[c * plane + y * w + x] = v;
    }
    Ok(out)
}

/// Writes a binary [H,W] mask as PGM (P5): 1 → 255, 0 → 0.
pub fn write_pgm(path: &Path, mask: &Array) -> Result<()> {
    let shape = mask.shape();
    if shape.len() != 2 {
        return Err(RoseError::invalid(format!("write_pgm: expected [H,W], got {shape:?}")));
    }
    let (h, w) = (shape[0], shape[1]);
    let mut out = Vec::with_capacity(64 + h * w);
    write!(out, "P5\n{w} {h}\n255\n")?;
    for v in mask.data() {
        out.push(if *v != 0.0 { 255 } else { 0 });
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a binary PGM as a 0/1 mask (any nonzero byte → 1).
pub fn read_pgm(path: &Path) -> Result<Array> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    if next_token(&bytes, &mut pos)? != "P5" {
        return Err(RoseError::format("not a P5 PGM"));
    }
    let (w, h) = parse_dims(&bytes, &mut pos)?;
    let maxval: u32 = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| RoseError::format("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(RoseError::format(format!("unsupported PGM maxval {maxval}")));
    }
    let data = bytes
        .get(pos..pos + h * w)
        .ok_or_else(|| RoseError::format("truncated PGM data"))?;
    Ok(Array::new(&[h, w], data.iter().map(|&b| f64::from(b != 0)).collect()))
}

/// Directory for one sample under the dataset root.
pub fn sample_dir(root: &Path, condition: Condition, seed: u64) -> PathBuf {
    root.join(condition.as_str()).join(seed.to_string())
}

/// Writes a sample into the standard layout; with `float_images`, lossless
/// PFM copies of the views are written alongside the 8-bit PPMs.
pub fn write_sample(root: &Path, s: &StereoSample, float_images: bool) -> Result<PathBuf> {
    let dir = sample_dir(root, s.condition, s.seed);
    fs::create_dir_all(&dir)?;
    write_ppm(&dir.join("left.ppm"), &s.i_l)?;
    write_ppm(&dir.join("right.ppm"), &s.i_r)?;
    write_pfm(&dir.join("disp_left.pfm"), &s.d_gt_l)?;
    write_pfm(&dir.join("disp_right.pfm"), &s.d_gt_r)?;
    write_pgm(&dir.join("occ_left.pgm"), &s.occ_l)?;
    write_pgm(&dir.join("occ_right.pgm"), &s.occ_r)?;
    if float_images {
        write_pfm_color(&dir.join("left.pfm"), &s.i_l)?;
        write_pfm_color(&dir.join("right.pfm"), &s.i_r)?;
    }
    let meta = format!(
        "condition={}\nseed={}\nheight={}\nwidth={}\nrng={}\n",
        s.condition.as_str(),
        s.seed,
        s.height(),
        s.width(),
        RNG_ALGORITHM,
    );
    fs::write(dir.join("meta.txt"), meta)?;
    Ok(dir)
}

/// Reads a sample directory, preferring lossless PFM views when present.
pub fn read_sample(dir: &Path) -> Result<StereoSample> {
    let meta = fs::read_to_string(dir.join("meta.txt"))?;
    let mut condition = None;
    let mut seed = None;
    for line in meta.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "condition" => condition = Some(Condition::parse(v.trim())?),
                "seed" => {
                    seed = Some(v.trim().parse::<u64>().map_err(|_| {
                        RoseError::format(format!("bad seed in meta.txt: {v:?}"))
                    })?)
                }
                _ => {}
            }
        }
    }
    let condition =
        condition.ok_or_else(|| RoseError::format("meta.txt missing condition"))?;
    let seed = seed.ok_or_else(|| RoseError::format("meta.txt missing seed"))?;
    let read_view = |stem: &str| -> Result<Array> {
        let pfm = dir.join(format!("{stem}.pfm"));
        if pfm.exists() {
            read_pfm(&pfm)
        } else {
            read_ppm(&dir.join(format!("{stem}.ppm")))
        }
    };
    Ok(StereoSample {
        i_l: read_view("left")?,
        i_r: read_view("right")?,
        d_gt_l: read_pfm(&dir.join("disp_left.pfm"))?,
        d_gt_r: read_pfm(&dir.join("disp_right.pfm"))?,
        occ_l: read_pgm(&dir.join("occ_left.pgm"))?,
        occ_r: read_pgm(&dir.join("occ_right.pgm"))?,
        condition,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weather::{generate_scene, SceneConfig};

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("rose-fmt-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn pfm_bytes_match_convention() {
        let a = Array::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let dir = tmpdir("pfm");
        let path = dir.join("t.pfm");
        write_pfm(&path, &a).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        // bottom row first, little-endian f32
        let mut want = Vec::new();
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(&bytes[header.len()..], &want[..]);
        assert_eq!(read_pfm(&path).unwrap(), a);
    }

    #[test]
    fn ppm_quantizes_and_round_trips() {
        let img = Array::from_fn(&[3, 3, 5], |i| (i as f64) / 44.0);
        let dir = tmpdir("ppm");
        let path = dir.join("t.ppm");
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_round_trips_binary_mask() {
        let mask = Array::from_fn(&[4, 6], |i| f64::from(i % 3 == 0));
        let dir = tmpdir("pgm");
        let path = dir.join("t.pgm");
        write_pgm(&path, &mask).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), mask);
    }

    #[test]
    fn sample_layout_round_trips() {
        let cfg = SceneConfig { h: 16, w: 32, d_max: 6.0, n_layers: 2, ..SceneConfig::default() };
        let s = generate_scene(3, &cfg).unwrap();
        let root = tmpdir("sample");
        let dir = write_sample(&root, &s, true).unwrap();
        assert_eq!(dir, root.join("clear").join("3"));
        for f in [
            "left.ppm",
            "right.ppm",
            "disp_left.pfm",
            "disp_right.pfm",
            "occ_left.pgm",
            "occ_right.pgm",
            "meta.txt",
        ] {
            assert!(dir.join(f).exists(), "{f} missing");
        }
        let back = read_sample(&dir).unwrap();
        assert_eq!(back.condition, s.condition);
        assert_eq!(back.seed, s.seed);
        // geometry is exact (f32-representable disparities), views via PFM
        // are exact at f32 precision
        assert_eq!(back.d_gt_l, s.d_gt_l);
        assert_eq!(back.occ_l, s.occ_l);
        for (a, b) in back.i_l.data().iter().zip(s.i_l.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn headers_with_comments_parse() {
        let dir = tmpdir("comments");
        let path = dir.join("c.pgm");
        let mut bytes: Vec<u8> = b"P5\n# a comment\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 7]);
        fs::write(&path, bytes).unwrap();
        let m = read_pgm(&path).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0, 1.0]);
    }
}
