use std::path::Path;

use crate::error::{Error, Result};

/// `H x W` map of integer class ids in `0..classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    h: usize,
    w: usize,
    classes: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, classes: usize, data: Vec<u8>) -> Result<Self> {
        if h * w != data.len() {
            return Err(Error::LengthMismatch {
                left: h * w,
                right: data.len(),
            });
        }
        if classes == 0 || classes > 256 {
            return Err(Error::invalid(format!("unsupported class count {classes}")));
        }
        if let Some(&bad) = data.iter().find(|&&v| usize::from(v) >= classes) {
            return Err(Error::LabelOutOfRange {
                label: bad.into(),
                classes,
            });
        }
        Ok(Self { h, w, classes, data })
    }

    pub fn filled(h: usize, w: usize, classes: usize, value: u8) -> Result<Self> {
        Self::new(h, w, classes, vec![value; h * w])
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.w + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u8) {
        debug_assert!(usize::from(v) < self.classes);
        self.data[i * self.w + j] = v;
    }

    /// Binary mask of one class.
    pub fn mask(&self, class_id: usize) -> Vec<bool> {
        self.data.iter().map(|&v| usize::from(v) == class_id).collect()
    }

    pub fn count(&self, class_id: usize) -> usize {
        self.data.iter().filter(|&&v| usize::from(v) == class_id).count()
    }

    /// Binary PGM (P5) with `maxval = classes - 1`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let maxval = (self.classes - 1).max(1);
        let mut out = format!("P5\n{} {}\n{}\n", self.w, self.h, maxval).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Parses a P5 map; `maxval + 1` becomes the class count.
    pub fn from_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PGM header".into());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
        }
        if fields[0] != "P5" {
            return Err(format!("expected P5, found {}", fields[0]));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
        let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates header from raster
        let raster = bytes.get(pos + 1..).ok_or("missing raster")?;
        if raster.len() != w * h {
            return Err(format!("expected {} raster bytes, found {}", w * h, raster.len()));
        }
        Self::new(h, w, maxval + 1, raster.to_vec()).map_err(|e| e.to_string())
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|reason| Error::Format {
            kind: "PGM",
            path: path.to_path_buf(),
            reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let m = LabelMap::new(2, 3, 4, vec![0, 1, 2, 3, 2, 1]).unwrap();
        let bytes = m.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n3\n"));
        assert_eq!(LabelMap::from_pgm(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            LabelMap::new(1, 2, 2, vec![0, 2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(LabelMap::from_pgm(b"P2\n1 1\n1\n\x00").is_err());
    }
}
