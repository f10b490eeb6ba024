use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Raster;
use crate::error::{Error, Result};

pub const NODATA_SENTINEL: f32 = -9999.0;

/// Sidecar header stored next to a raw raster as `<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RasterHeader {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub nodata: f32,
    pub dtype: String,
}

fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes little-endian `f32` values row-major to `bin` plus a JSON header
/// alongside it.
pub fn write_raster(bin: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let bin = bin.as_ref();
    let header = RasterHeader {
        origin_x: raster.origin_x,
        origin_y: raster.origin_y,
        resolution: raster.resolution,
        width: raster.width,
        height: raster.height,
        nodata: NODATA_SENTINEL,
        dtype: "float32".into(),
    };
    let mut bytes = Vec::with_capacity(raster.values.len() * 4);
    for (&v, &m) in raster.values.iter().zip(&raster.nodata) {
        let f = if m { NODATA_SENTINEL } else { v as f32 };
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    std::fs::write(bin, bytes).map_err(|e| Error::io(bin, e))?;
    let hp = header_path(bin);
    std::fs::write(&hp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&hp, e))
}

pub fn read_raster(bin: impl AsRef<Path>) -> Result<Raster> {
    let bin = bin.as_ref();
    let hp = header_path(bin);
    let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: RasterHeader = serde_json::from_str(&text)?;
    if header.dtype != "float32" {
        return Err(Error::InvalidParameter(format!("unsupported raster dtype {}", header.dtype)));
    }
    let bytes = std::fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let n = header.width * header.height;
    if bytes.len() != n * 4 {
        return Err(Error::DimensionMismatch {
            expected: n * 4,
            got: bytes.len(),
        });
    }
    let mut values = Vec::with_capacity(n);
    let mut nodata = Vec::with_capacity(n);
    for chunk in bytes.chunks_exact(4) {
        let f = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        let missing = f == header.nodata || !f.is_finite();
        nodata.push(missing);
        values.push(if missing { 0.0 } else { f64::from(f) });
    }
    Ok(Raster {
        origin_x: header.origin_x,
        origin_y: header.origin_y,
        resolution: header.resolution,
        width: header.width,
        height: header.height,
        values,
        nodata,
    })
}

/// Binary PGM (P5, maxval 255). Values are clamped to `0..=255`; nodata
/// pixels are written as 0.
pub fn write_pgm(path: impl AsRef<Path>, gray: &Raster) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "P5\n{} {}\n255\n", gray.width, gray.height).map_err(io)?;
    let bytes: Vec<u8> = gray
        .values
        .iter()
        .zip(&gray.nodata)
        .map(|(&v, &m)| if m { 0 } else { v.round().clamp(0.0, 255.0) as u8 })
        .collect();
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_roundtrip_keeps_mask() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Raster::from_values(1.5, 9.0, 0.25, 3, 2, vec![0.5, -1.25, 2.0, 3.0, 4.0, 5.0]).unwrap();
        r.nodata[4] = true;
        let p = dir.path().join("dem.f32");
        write_raster(&p, &r).unwrap();
        let back = read_raster(&p).unwrap();
        assert_eq!(back.nodata, r.nodata);
        assert_eq!(back.values[0], 0.5);
        assert_eq!(back.values[1], -1.25);
        assert_eq!((back.width, back.height, back.origin_x, back.origin_y), (3, 2, 1.5, 9.0));
    }

    #[test]
    fn pgm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_values(0.0, 0.0, 1.0, 2, 1, vec![0.0, 255.0]).unwrap();
        let p = dir.path().join("g.pgm");
        write_pgm(&p, &r).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 255]);
    }
}
