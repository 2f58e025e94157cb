//! Binary checkpoint format.
//!
//! ```text
//! "EPIC"                      magic, 4 bytes
//! u32                         format version (1)
//! u32 n, then n x u32         encoder widths (3, ..., F)
//! u32 m, then m x u32         head widths (F, ..., C)
//! f64 x P                     parameters: encoder layers then head layers;
//!                             per layer weights (inputs x outputs, row-major)
//!                             followed by the bias
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{Dense, PointSetModel};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader};

pub const MAGIC: &[u8; 4] = b"EPIC";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &PointSetModel) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(64 + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for widths in [&arch.encoder, &arch.head] {
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for &w in widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
    }
    for v in model.slices().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<PointSetModel> {
    let mut r = Reader::new(bytes, origin);
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(origin, 0, format!("unknown magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(origin, 4, format!("unsupported checkpoint version {version}")));
    }
    let read_widths = |r: &mut Reader| -> Result<Vec<usize>> {
        let at = r.offset();
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::format(origin, at, format!("bad layer count {n}")));
        }
        (0..n).map(|_| r.u32().map(|w| w as usize)).collect()
    };
    let encoder_widths = read_widths(&mut r)?;
    let head_widths = read_widths(&mut r)?;
    let read_layers = |r: &mut Reader, widths: &[usize]| -> Result<Vec<Dense>> {
        widths
            .windows(2)
            .map(|w| {
                let weights: Vec<f64> = (0..w[0] * w[1]).map(|_| r.f64()).collect::<Result<_>>()?;
                let bias: Vec<f64> = (0..w[1]).map(|_| r.f64()).collect::<Result<_>>()?;
                Ok(Dense {
                    weights: Array2::from_shape_vec((w[0], w[1]), weights).expect("sized above"),
                    bias: Array1::from(bias),
                })
            })
            .collect()
    };
    let encoder = read_layers(&mut r, &encoder_widths)?;
    let head = read_layers(&mut r, &head_widths)?;
    r.finish()?;
    let model = PointSetModel::from_layers(encoder, head)
        .map_err(|e| Error::format(origin, 8, format!("inconsistent architecture: {e}")))?;
    if !model.all_finite() {
        return Err(Error::format(origin, 8, "non-finite parameter"));
    }
    Ok(model)
}

pub fn save(model: &PointSetModel, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<PointSetModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Architecture;
    use crate::rng::stream;

    #[test]
    fn round_trip_is_bit_exact() {
        let arch = Architecture::new(&[16, 32], &[8], 5).unwrap();
        let m = PointSetModel::new(&arch, &mut stream(3)).unwrap();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(&bytes[..4], b"EPIC");
    }

    #[test]
    fn rejects_bad_input() {
        let arch = Architecture::new(&[4], &[], 2).unwrap();
        let bytes = to_bytes(&PointSetModel::new(&arch, &mut stream(3)).unwrap());
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3], Path::new("m")), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = from_bytes(&bad, Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("XPIC"));
        let mut extra = bytes;
        extra.push(0);
        assert!(from_bytes(&extra, Path::new("m")).is_err());
    }
}
