//! Observation lattices, grey-scale images, configuration extraction, and
//! image file IO.
//!
//! An image is the restriction of a blurred intensity field to a scaled,
//! translated lattice. Two file formats are supported: 16-bit binary PGM
//! with the lattice metadata in header comments, and a raw little-endian
//! f32 raster with a text sidecar header.

use crate::error::{Error, Result};
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

/// Memory budget for a single image: 2^27 f64 values (1 GiB).
pub const VALUE_BUDGET: usize = 1 << 27;

/// Observation lattice: basis with unit cell volume, resolution `a`, and a
/// translation inside the fundamental cell (stored in fractional
/// coordinates with respect to the basis).
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dim: usize,
    /// Basis vectors as rows.
    basis: [[f64; 3]; 3],
    resolution: f64,
    translation: [f64; 3],
}

impl Lattice {
    /// Standard axis-aligned lattice with zero translation.
    pub fn standard(dim: usize, resolution: f64) -> Lattice {
        let mut basis = [[0.0; 3]; 3];
        for (i, row) in basis.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Lattice::new(dim, basis, resolution, [0.0; 3]).expect("standard lattice is valid")
    }

    pub fn new(
        dim: usize,
        mut basis: [[f64; 3]; 3],
        resolution: f64,
        mut translation: [f64; 3],
    ) -> Result<Lattice> {
        if dim != 2 && dim != 3 {
            return Err(Error::Image("lattice dim must be 2 or 3".into()));
        }
        // Normalize padding beyond the active dimension.
        for i in dim..3 {
            basis[i] = [0.0; 3];
            basis[i][i] = 1.0;
            translation[i] = 0.0;
        }
        if !(resolution > 0.0) {
            return Err(Error::Image(format!(
                "resolution must be > 0, got {resolution}"
            )));
        }
        let det = det_nd(&basis, dim).abs();
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::Image(format!("unit cell volume must be 1, got {det}")));
        }
        for i in 0..dim {
            if !(0.0..1.0).contains(&translation[i]) {
                return Err(Error::Image(format!(
                    "translation must lie in the fundamental cell, got {translation:?}"
                )));
            }
        }
        Ok(Lattice {
            dim,
            basis,
            resolution,
            translation,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn basis(&self) -> &[[f64; 3]; 3] {
        &self.basis
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    pub fn with_translation(&self, frac: [f64; 3]) -> Lattice {
        let mut l = self.clone();
        for i in 0..self.dim {
            l.translation[i] = frac[i].rem_euclid(1.0);
        }
        l
    }

    /// Longest basis vector, the lattice diameter bound V.
    pub fn v_max(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|k| self.basis[i][k] * self.basis[i][k])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Unscaled lattice vector for integer coefficients.
    pub fn offset_vector(&self, coeffs: &[i64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for i in 0..self.dim {
            for k in 0..self.dim {
                v[k] += coeffs[i] as f64 * self.basis[i][k];
            }
        }
        v
    }

    /// Physical position of a lattice index: a * (sum_i (z_i + c_i) v_i).
    pub fn position(&self, idx: &[i64; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for i in 0..self.dim {
            let coeff = idx[i] as f64 + self.translation[i];
            for k in 0..self.dim {
                p[k] += coeff * self.basis[i][k];
            }
        }
        for x in p.iter_mut() {
            *x *= self.resolution;
        }
        p
    }

    /// Fractional lattice coordinates of a physical point (inverse of
    /// [`position`](Self::position) without rounding).
    pub fn coords_of(&self, point: &[f64; 3]) -> [f64; 3] {
        let inv = invert_nd(&self.basis, self.dim);
        let mut c = [0.0; 3];
        for i in 0..self.dim {
            for k in 0..self.dim {
                c[i] += point[k] / self.resolution * inv[k][i];
            }
            c[i] -= self.translation[i];
        }
        c
    }
}

fn det_nd(m: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!(),
    }
}

/// Inverse of the dim x dim leading block (returns full 3x3 with identity
/// padding).
pub(crate) fn invert_nd(m: &[[f64; 3]; 3], dim: usize) -> [[f64; 3]; 3] {
    let det = det_nd(m, dim);
    let mut inv = [[0.0; 3]; 3];
    inv[2][2] = 1.0;
    match dim {
        2 => {
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
        }
        3 => {
            inv[2][2] = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                    let (c, d) = ((j + 1) % 3, (j + 2) % 3);
                    inv[j][i] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
                }
            }
        }
        _ => unreachable!(),
    }
    inv
}

/// Half-open index ranges per axis; unused axes are [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub lo: [i64; 3],
    pub hi: [i64; 3],
}

impl Window {
    pub fn new(dim: usize, lo: [i64; 3], hi: [i64; 3]) -> Result<Window> {
        let mut w = Window { lo, hi };
        for i in dim..3 {
            w.lo[i] = 0;
            w.hi[i] = 1;
        }
        for i in 0..dim {
            if w.hi[i] <= w.lo[i] {
                return Err(Error::Image(format!("empty window on axis {i}")));
            }
        }
        Ok(w)
    }

    pub fn count(&self) -> usize {
        (0..3).map(|i| (self.hi[i] - self.lo[i]) as usize).product()
    }

    pub fn contains(&self, idx: &[i64; 3]) -> bool {
        (0..3).all(|i| idx[i] >= self.lo[i] && idx[i] < self.hi[i])
    }

    /// Window shrunk so that `idx + offset` stays inside `self` for all the
    /// given offsets.
    pub fn shrink_for(&self, offsets: &[[i64; 3]]) -> Window {
        let mut w = *self;
        for off in offsets {
            for i in 0..3 {
                w.lo[i] = w.lo[i].max(self.lo[i] - off[i].min(0));
                w.hi[i] = w.hi[i].min(self.hi[i] - off[i].max(0));
            }
        }
        w
    }

    fn flat(&self, idx: &[i64; 3]) -> usize {
        let n1 = (self.hi[1] - self.lo[1]) as usize;
        let n2 = (self.hi[2] - self.lo[2]) as usize;
        (((idx[0] - self.lo[0]) as usize * n1) + (idx[1] - self.lo[1]) as usize) * n2
            + (idx[2] - self.lo[2]) as usize
    }
}

/// Lattice-sampled intensity values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GreyImage {
    lattice: Lattice,
    window: Window,
    values: Vec<f64>,
    /// Set when the synthesis path could not certify the 1e-6 intensity
    /// tolerance.
    pub degraded: bool,
}

impl GreyImage {
    pub fn new(lattice: Lattice, window: Window, values: Vec<f64>) -> Result<GreyImage> {
        if values.len() != window.count() {
            return Err(Error::Image(format!(
                "value count {} does not match window {}",
                values.len(),
                window.count()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Image(format!("intensity {v} outside [0,1]")));
        }
        Ok(GreyImage {
            lattice,
            window,
            values,
            degraded: false,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: &[i64; 3]) -> Result<f64> {
        if !self.window.contains(idx) {
            return Err(Error::OutOfWindow(*idx));
        }
        Ok(self.values[self.window.flat(idx)])
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Writes either 16-bit PGM (`.pgm`) or raw f32 + sidecar header.
    pub fn write(&self, path: &Path) -> Result<()> {
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            self.write_pgm(path)
        } else {
            self.write_raw(path)
        }
    }

    pub fn read(path: &Path) -> Result<GreyImage> {
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            GreyImage::read_pgm(path)
        } else {
            GreyImage::read_raw(path)
        }
    }

    fn metadata_lines(&self, prefix: &str) -> String {
        let d = self.lattice.dim;
        let mut s = String::new();
        s.push_str(&format!("{prefix}dim {d}\n"));
        s.push_str(&format!("{prefix}a {:.17e}\n", self.lattice.resolution));
        s.push_str(&format!("{prefix}lo {}\n", join_i64(&self.window.lo[..d])));
        s.push_str(&format!("{prefix}hi {}\n", join_i64(&self.window.hi[..d])));
        let mut b = String::new();
        for i in 0..d {
            for k in 0..d {
                b.push_str(&format!("{:.17e} ", self.lattice.basis[i][k]));
            }
        }
        s.push_str(&format!("{prefix}basis {}\n", b.trim_end()));
        let c: Vec<String> = (0..d)
            .map(|i| format!("{:.17e}", self.lattice.translation[i]))
            .collect();
        s.push_str(&format!("{prefix}c {}\n", c.join(" ")));
        s.push_str(&format!("{prefix}degraded {}\n", self.degraded as u8));
        s
    }

    /// 16-bit binary PGM, values quantized as round(v * 65535), metadata in
    /// header comments. Planar images only.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        if self.lattice.dim != 2 {
            return Err(Error::Image("PGM supports planar images only".into()));
        }
        let n0 = (self.window.hi[0] - self.window.lo[0]) as usize;
        let n1 = (self.window.hi[1] - self.window.lo[1]) as usize;
        let mut out = Vec::with_capacity(64 + self.values.len() * 2);
        out.extend_from_slice(b"P5\n");
        out.extend_from_slice(self.metadata_lines("# minktens ").as_bytes());
        out.extend_from_slice(format!("{n1} {n0}\n65535\n").as_bytes());
        for v in &self.values {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Image(format!("intensity {v} outside [0,1] on write")));
            }
            let q = (v * 65535.0).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<GreyImage> {
        let data = fs::read(path)?;
        if data.get(..2) != Some(b"P5".as_slice()) {
            return Err(Error::Image("not a binary PGM".into()));
        }
        let mut pos = 2usize;
        let mut meta: Vec<(String, String)> = Vec::new();
        let mut fields: Vec<u64> = Vec::new();
        while fields.len() < 3 {
            match data.get(pos) {
                None => return Err(Error::Image("truncated PGM header".into())),
                Some(b'#') => {
                    let end = data[pos..]
                        .iter()
                        .position(|&b| b == b'\n')
                        .map(|e| pos + e)
                        .unwrap_or(data.len());
                    let comment = String::from_utf8_lossy(&data[pos + 1..end]);
                    let c = comment.trim();
                    if let Some(rest) = c.strip_prefix("minktens ") {
                        if let Some((k, v)) = rest.split_once(' ') {
                            meta.push((k.to_string(), v.to_string()));
                        }
                    }
                    pos = end + 1;
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => {
                    let start = pos;
                    while data.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                        pos += 1;
                    }
                    if pos == start {
                        return Err(Error::Image("bad PGM header".into()));
                    }
                    let tok = std::str::from_utf8(&data[start..pos])
                        .map_err(|_| Error::Image("bad PGM header".into()))?;
                    fields.push(
                        tok.parse()
                            .map_err(|_| Error::Image("bad PGM header number".into()))?,
                    );
                }
            }
        }
        let (w, h, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
        if maxval != 65535 {
            return Err(Error::Image(format!("expected 16-bit PGM, maxval {maxval}")));
        }
        pos += 1; // single whitespace after maxval
        let need = w * h * 2;
        if data.len() < pos + need {
            return Err(Error::Image("truncated PGM raster".into()));
        }
        let values: Vec<f64> = data[pos..pos + need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect();
        let (lattice, window, degraded) = parse_metadata(&meta, 2)?;
        if window.count() != values.len() {
            return Err(Error::Image("PGM raster does not match window".into()));
        }
        let mut img = GreyImage::new(lattice, window, values)?;
        img.degraded = degraded;
        Ok(img)
    }

    /// Raw little-endian f32 raster with a text sidecar header at
    /// `<path>.hdr`.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut raster = fs::File::create(path)?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Image(format!("intensity {v} outside [0,1] on write")));
            }
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        raster.write_all(&buf)?;
        let header = format!("minktens-raster 1\n{}", self.metadata_lines(""));
        fs::write(sidecar(path), header)?;
        Ok(())
    }

    pub fn read_raw(path: &Path) -> Result<GreyImage> {
        let header = fs::read_to_string(sidecar(path))?;
        let mut lines = header.lines();
        if lines.next().map(str::trim) != Some("minktens-raster 1") {
            return Err(Error::Image("bad raster header magic".into()));
        }
        let meta: Vec<(String, String)> = lines
            .filter_map(|l| {
                let l = l.trim();
                l.split_once(' ').map(|(k, v)| (k.to_string(), v.to_string()))
            })
            .collect();
        let dim = meta
            .iter()
            .find(|(k, _)| k == "dim")
            .and_then(|(_, v)| v.parse::<usize>().ok())
            .ok_or_else(|| Error::Image("header missing dim".into()))?;
        let (lattice, window, degraded) = parse_metadata(&meta, dim)?;
        let mut raster = fs::File::open(path)?;
        let mut bytes = Vec::new();
        raster.read_to_end(&mut bytes)?;
        if bytes.len() != window.count() * 4 {
            return Err(Error::Image(format!(
                "raster size {} does not match window {}",
                bytes.len(),
                window.count() * 4
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut img = GreyImage::new(lattice, window, values)?;
        img.degraded = degraded;
        Ok(img)
    }
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".hdr");
    os.into()
}

fn join_i64(v: &[i64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_metadata(meta: &[(String, String)], dim: usize) -> Result<(Lattice, Window, bool)> {
    let get = |key: &str| -> Result<&str> {
        meta.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Image(format!("header missing `{key}`")))
    };
    let floats = |s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Image(format!("bad float `{t}` in header")))
            })
            .collect()
    };
    let ints = |s: &str| -> Result<Vec<i64>> {
        s.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Image(format!("bad int `{t}` in header")))
            })
            .collect()
    };
    let a: f64 = get("a")?
        .parse()
        .map_err(|_| Error::Image("bad resolution in header".into()))?;
    let lo = ints(get("lo")?)?;
    let hi = ints(get("hi")?)?;
    let b = floats(get("basis")?)?;
    let c = floats(get("c")?)?;
    if lo.len() != dim || hi.len() != dim || b.len() != dim * dim || c.len() != dim {
        return Err(Error::Image("header field arity mismatch".into()));
    }
    let mut basis = [[0.0; 3]; 3];
    for i in 0..dim {
        for k in 0..dim {
            basis[i][k] = b[i * dim + k];
        }
    }
    let mut translation = [0.0; 3];
    translation[..dim].copy_from_slice(&c[..dim]);
    let lattice = Lattice::new(dim, basis, a, translation)?;
    let mut wlo = [0i64; 3];
    let mut whi = [0i64; 3];
    wlo[..dim].copy_from_slice(&lo[..dim]);
    whi[..dim].copy_from_slice(&hi[..dim]);
    let window = Window::new(dim, wlo, whi)?;
    let degraded = get("degraded").map(|v| v.trim() == "1").unwrap_or(false);
    Ok((lattice, window, degraded))
}

/// Ordered offset pattern defining an n x .. x n configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigOffsets {
    offsets: Vec<[i64; 3]>,
    block: usize,
}

impl ConfigOffsets {
    /// The singleton pattern {0}.
    pub fn singleton() -> ConfigOffsets {
        ConfigOffsets {
            offsets: vec![[0; 3]],
            block: 1,
        }
    }

    /// {0, v_1, .., v_d}: the corner pattern of a 2 x .. x 2 block.
    pub fn two_block(dim: usize) -> ConfigOffsets {
        let mut offsets = vec![[0i64; 3]];
        for i in 0..dim {
            let mut o = [0i64; 3];
            o[i] = 1;
            offsets.push(o);
        }
        ConfigOffsets { offsets, block: 2 }
    }

    /// {0, +-v_1, .., +-v_d}: the cross pattern of a 3 x .. x 3 block.
    pub fn three_block(dim: usize) -> ConfigOffsets {
        let mut offsets = vec![[0i64; 3]];
        for i in 0..dim {
            for sgn in [1i64, -1] {
                let mut o = [0i64; 3];
                o[i] = sgn;
                offsets.push(o);
            }
        }
        ConfigOffsets { offsets, block: 3 }
    }

    pub fn custom(offsets: Vec<[i64; 3]>) -> Result<ConfigOffsets> {
        if offsets.is_empty() {
            return Err(Error::Image("offset set must be nonempty".into()));
        }
        let mut block = 1usize;
        for i in 0..3 {
            let lo = offsets.iter().map(|o| o[i]).min().unwrap();
            let hi = offsets.iter().map(|o| o[i]).max().unwrap();
            block = block.max((hi - lo + 1) as usize);
        }
        Ok(ConfigOffsets { offsets, block })
    }

    pub fn offsets(&self) -> &[[i64; 3]] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Block size n of the enclosing n x .. x n configuration (the offsets
    /// are centered in the block; the anchor is metadata only).
    pub fn block_size(&self) -> usize {
        self.block
    }
}

/// Configuration tuple at lattice point `z`: intensities at z + s for each
/// offset s, in pattern order.
pub fn extract_config(image: &GreyImage, z: &[i64; 3], offsets: &ConfigOffsets) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(offsets.len());
    for off in offsets.offsets() {
        let idx = [z[0] + off[0], z[1] + off[1], z[2] + off[2]];
        out.push(image.value(&idx)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_image() -> GreyImage {
        let lattice = Lattice::standard(2, 0.25);
        let window = Window::new(2, [-2, -1, 0], [3, 4, 0]).unwrap();
        let values: Vec<f64> = (0..window.count())
            .map(|i| (i as f64 * 0.37).fract())
            .collect();
        GreyImage::new(lattice, window, values).unwrap()
    }

    #[test]
    fn lattice_positions() {
        let l = Lattice::standard(2, 0.5).with_translation([0.25, 0.75, 0.0]);
        let p = l.position(&[2, -1, 0]);
        assert!((p[0] - 0.5 * 2.25).abs() < 1e-15);
        assert!((p[1] - 0.5 * -0.25).abs() < 1e-15);
        let c = l.coords_of(&p);
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] + 1.0).abs() < 1e-12);
        assert!((l.v_max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lattice_rejects_bad_cells() {
        let mut basis = [[0.0; 3]; 3];
        basis[0][0] = 2.0;
        basis[1][1] = 1.0;
        assert!(Lattice::new(2, basis, 0.1, [0.0; 3]).is_err());
        let std_basis = *Lattice::standard(2, 1.0).basis();
        assert!(Lattice::new(2, std_basis, 0.1, [1.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn window_shrink_for_offsets() {
        let w = Window::new(2, [0, 0, 0], [10, 10, 0]).unwrap();
        let s = w.shrink_for(&[[1, 0, 0], [-1, 0, 0], [0, 2, 0]]);
        assert_eq!(s.lo, [1, 0, 0]);
        assert_eq!(s.hi, [9, 8, 1]);
    }

    #[test]
    fn config_extraction() {
        let img = small_image();
        let offs = ConfigOffsets::two_block(2);
        let tuple = extract_config(&img, &[0, 0, 0], &offs).unwrap();
        assert_eq!(tuple.len(), 3);
        assert_eq!(tuple[0], img.value(&[0, 0, 0]).unwrap());
        assert_eq!(tuple[1], img.value(&[1, 0, 0]).unwrap());
        assert_eq!(tuple[2], img.value(&[0, 1, 0]).unwrap());
        // Out-of-window access is an error.
        assert!(extract_config(&img, &[2, 3, 0], &offs).is_err());
        // Constant image gives a constant tuple.
        let lattice = Lattice::standard(2, 1.0);
        let w = Window::new(2, [0, 0, 0], [4, 4, 0]).unwrap();
        let c = GreyImage::new(lattice, w, vec![0.42; 16]).unwrap();
        let t = extract_config(&c, &[1, 1, 0], &offs).unwrap();
        assert!(t.iter().all(|&v| v == 0.42));
    }

    #[test]
    fn config_patterns() {
        assert_eq!(ConfigOffsets::two_block(2).len(), 3);
        assert_eq!(ConfigOffsets::two_block(2).block_size(), 2);
        assert_eq!(ConfigOffsets::three_block(2).len(), 5);
        assert_eq!(ConfigOffsets::three_block(2).block_size(), 3);
        assert_eq!(ConfigOffsets::three_block(3).len(), 7);
        let c = ConfigOffsets::custom(vec![[0, 0, 0], [2, -1, 0]]).unwrap();
        assert_eq!(c.block_size(), 3);
    }

    #[test]
    fn raw_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        let img = small_image();
        img.write(&path).unwrap();
        let back = GreyImage::read(&path).unwrap();
        // One write/read quantizes to f32; a second roundtrip is identity.
        let path2 = dir.path().join("img2.f32");
        back.write(&path2).unwrap();
        let back2 = GreyImage::read(&path2).unwrap();
        assert_eq!(back.values(), back2.values());
        assert_eq!(back.lattice(), img.lattice());
        assert_eq!(back.window(), img.window());
        for (v, w) in img.values().iter().zip(back.values()) {
            assert_eq!(*v as f32, *w as f32);
        }
    }

    #[test]
    fn pgm_roundtrip_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = small_image();
        img.write(&path).unwrap();
        let back = GreyImage::read(&path).unwrap();
        assert_eq!(back.lattice(), img.lattice());
        for (v, w) in img.values().iter().zip(back.values()) {
            let q = (v * 65535.0).round() / 65535.0;
            assert!((q - w).abs() < 1e-12);
        }
        // 0.5 quantizes to 32768 and reads back as 32768/65535.
        let lattice = Lattice::standard(2, 1.0);
        let w = Window::new(2, [0, 0, 0], [1, 1, 0]).unwrap();
        let half = GreyImage::new(lattice, w, vec![0.5]).unwrap();
        let p2 = dir.path().join("half.pgm");
        half.write(&p2).unwrap();
        let back = GreyImage::read(&p2).unwrap();
        assert_eq!(back.values()[0], 32768.0 / 65535.0);
    }

    #[test]
    fn header_with_bad_cell_volume_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        small_image().write(&path).unwrap();
        let hdr_path = sidecar(&path);
        let hdr = fs::read_to_string(&hdr_path).unwrap();
        let bad = hdr.replace(
            "basis 1.00000000000000000e0 0.00000000000000000e0",
            "basis 2.00000000000000000e0 0.00000000000000000e0",
        );
        assert_ne!(bad, hdr);
        fs::write(&hdr_path, bad).unwrap();
        assert!(GreyImage::read(&path).is_err());
    }

    #[test]
    fn values_outside_unit_interval_rejected() {
        let lattice = Lattice::standard(2, 1.0);
        let w = Window::new(2, [0, 0, 0], [1, 2, 0]).unwrap();
        assert!(GreyImage::new(lattice, w, vec![0.5, 1.5]).is_err());
    }
}
