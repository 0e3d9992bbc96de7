use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::kernels::MetaBatch;
use crate::numerics::Matrix;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
/// Label byte plus planar RGB pixels.
pub const CIFAR_RECORD: usize = 1 + CIFAR_PIXELS;

/// Parses concatenated CIFAR-10 binary records. Meta-data are the labels.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {CIFAR_RECORD}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * CIFAR_PIXELS);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Format(format!(
                "record {i} has label byte {}",
                rec[0]
            )));
        }
        labels.push(rec[0] as usize);
        data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    let meta = MetaBatch::from_labels(&labels);
    Dataset::new(Matrix::new(n, CIFAR_PIXELS, data)?, labels, meta, 10, None)
}

/// Loads and concatenates CIFAR-10 binary batch files.
pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        let chunk = std::fs::read(p)?;
        if chunk.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: {} bytes is not a whole number of records",
                p.as_ref().display(),
                chunk.len()
            )));
        }
        bytes.extend(chunk);
    }
    parse_cifar10(&bytes)
}

/// Serializes a full-resolution dataset back to the binary record layout.
pub fn to_cifar10_bytes(d: &Dataset) -> Result<Vec<u8>> {
    if d.input_dim() != CIFAR_PIXELS {
        return Err(Error::ShapeMismatch(format!(
            "expected {CIFAR_PIXELS} inputs, got {}",
            d.input_dim()
        )));
    }
    let mut out = Vec::with_capacity(d.len() * CIFAR_RECORD);
    for (i, &label) in d.labels.iter().enumerate() {
        out.push(label as u8);
        out.extend(d.inputs.row(i).iter().map(|v| (v * 255.0).round() as u8));
    }
    Ok(out)
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, then block-mean pooling to
/// `side × side`.
pub fn downsample_gray(d: &Dataset, side: usize) -> Result<Dataset> {
    if d.input_dim() != CIFAR_PIXELS || side == 0 || !CIFAR_SIDE.is_multiple_of(side) {
        return Err(Error::ShapeMismatch(format!(
            "cannot pool {} inputs to side {side}",
            d.input_dim()
        )));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let block = CIFAR_SIDE / side;
    let area = (block * block) as f64;
    let mut out = Matrix::zeros(d.len(), side * side);
    for i in 0..d.len() {
        let px = d.inputs.row(i);
        let row = out.row_mut(i);
        for r in 0..CIFAR_SIDE {
            for c in 0..CIFAR_SIDE {
                let k = r * CIFAR_SIDE + c;
                let lum = 0.299 * px[k] + 0.587 * px[plane + k] + 0.114 * px[2 * plane + k];
                row[(r / block) * side + c / block] += lum;
            }
        }
        for v in row.iter_mut() {
            *v = (*v / area).clamp(0.0, 1.0);
        }
    }
    Dataset::new(
        out,
        d.labels.clone(),
        d.meta.clone(),
        d.num_classes,
        Some(side),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..CIFAR_PIXELS).map(fill));
        r
    }

    #[test]
    fn two_record_fixture() {
        let mut bytes = record(3, |k| (k % 256) as u8);
        bytes.extend(record(9, |k| if k < 1024 { 255 } else { 0 }));
        let d = parse_cifar10(&bytes).unwrap();
        assert_eq!(d.labels, vec![3, 9]);
        assert_eq!(d.inputs.get(0, 0), 0.0);
        assert_eq!(d.inputs.get(0, 255), 1.0);
        assert_eq!(d.inputs.get(0, 257), 1.0 / 255.0);
        // red plane of record 1 saturated, green and blue empty
        assert_eq!(d.inputs.get(1, 1023), 1.0);
        assert_eq!(d.inputs.get(1, 1024), 0.0);
        assert_eq!(d.meta.get(1).categorical, vec![9]);
        assert_eq!(to_cifar10_bytes(&d).unwrap(), bytes);
    }

    #[test]
    fn empty_and_truncated() {
        assert_eq!(parse_cifar10(&[]).unwrap().len(), 0);
        assert!(matches!(parse_cifar10(&[0u8; 3072]), Err(Error::Format(_))));
        assert!(matches!(
            parse_cifar10(&record(10, |_| 0)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn loads_files_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data_batch_1.bin");
        std::fs::write(&p, record(1, |_| 128)).unwrap();
        let d = load_cifar10_binary(&[&p, &p]).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn downsampling() {
        let white = parse_cifar10(&record(0, |_| 255)).unwrap();
        let g = downsample_gray(&white, 8).unwrap();
        assert_eq!(g.input_dim(), 64);
        for v in g.inputs.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let full = downsample_gray(&white, 32).unwrap();
        assert_eq!(full.input_dim(), 1024);

        // 2x2 checkerboard in every channel pools to 0.5
        let checker = parse_cifar10(&record(0, |k| {
            let p = k % 1024;
            if (p / 32 + p % 32) % 2 == 0 {
                255
            } else {
                0
            }
        }))
        .unwrap();
        let g = downsample_gray(&checker, 16).unwrap();
        for v in g.inputs.data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert!(downsample_gray(&white, 5).is_err());
    }
}
