//! Binary weight files.
//!
//! All integers and reals are little-endian.
//!
//! ```text
//! magic        8 bytes  "FAPNNWTS"
//! version      u32      = 1
//! input rank   u32, then one u32 per input dimension
//! side width   u32      (0 when the network has no side input)
//! layer count  u32
//! per layer    u8 kind, then its fields:
//!                1 conv2d   u32 in_ch, out_ch, in_h, in_w, kernel; u8 layout (0 CHW, 1 HWC)
//!                2 dense    u32 inputs, outputs
//!                3 relu     -
//!                4 sigmoid  -
//!                5 dropout  f32 rate
//!                6 concat   u32 side width
//! parameters   for each conv2d/dense layer in order: weights then bias,
//!              each as u64 count followed by that many f32
//! ```
//!
//! Convolution weights are `out_ch x (ky, kx, c)`; dense weights are
//! `inputs x outputs`, row-major.

use std::io::{Read, Write};

use super::layers::{InputLayout, LayerSpec};
use super::network::Network;
use crate::{Error, Result};

pub const WEIGHT_FILE_MAGIC: &[u8; 8] = b"FAPNNWTS";
pub const WEIGHT_FILE_VERSION: u32 = 1;
const ARRAY_FILE_MAGIC: &[u8; 8] = b"FAPARRAY";

fn io_err(e: std::io::Error) -> Error {
    Error::format("weight file", e.to_string())
}

struct Writer<W>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).map_err(io_err)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::format("weight file", "value exceeds u32"))?;
        self.bytes(&v.to_le_bytes())
    }
    fn f32s(&mut self, values: &[f32]) -> Result<()> {
        self.bytes(&(values.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(values.len() * 4);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.bytes(&buf)
    }
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(io_err)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
    fn f32s(&mut self, expected: Option<usize>) -> Result<Vec<f32>> {
        let n = u64::from_le_bytes(self.bytes()?) as usize;
        if let Some(e) = expected {
            if e != n {
                return Err(Error::format(
                    "weight file",
                    format!("expected {e} values, found {n}"),
                ));
            }
        }
        if n > 1 << 31 {
            return Err(Error::format("weight file", "array too large"));
        }
        let mut raw = vec![0u8; n * 4];
        self.0.read_exact(&mut raw).map_err(io_err)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

impl Network<f32> {
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let mut w = Writer(out);
        w.bytes(WEIGHT_FILE_MAGIC)?;
        w.bytes(&WEIGHT_FILE_VERSION.to_le_bytes())?;
        w.u32(self.input_shape().len())?;
        for &d in self.input_shape() {
            w.u32(d)?;
        }
        w.u32(self.side_width())?;
        let specs = self.specs();
        w.u32(specs.len())?;
        for spec in &specs {
            match *spec {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    in_h,
                    in_w,
                    kernel,
                    layout,
                } => {
                    w.u8(1)?;
                    for v in [in_ch, out_ch, in_h, in_w, kernel] {
                        w.u32(v)?;
                    }
                    w.u8(match layout {
                        InputLayout::Chw => 0,
                        InputLayout::Hwc => 1,
                    })?;
                }
                LayerSpec::Dense { inputs, outputs } => {
                    w.u8(2)?;
                    w.u32(inputs)?;
                    w.u32(outputs)?;
                }
                LayerSpec::Relu => w.u8(3)?,
                LayerSpec::Sigmoid => w.u8(4)?,
                LayerSpec::Dropout { rate } => {
                    w.u8(5)?;
                    w.bytes(&rate.to_le_bytes())?;
                }
                LayerSpec::ConcatSide { width } => {
                    w.u8(6)?;
                    w.u32(width)?;
                }
            }
        }
        for p in self.params() {
            w.f32s(p)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader(input);
        if &r.bytes::<8>()? != WEIGHT_FILE_MAGIC {
            return Err(Error::format("weight file", "bad magic"));
        }
        let version = u32::from_le_bytes(r.bytes()?);
        if version != WEIGHT_FILE_VERSION {
            return Err(Error::format(
                "weight file",
                format!("unsupported version {version}"),
            ));
        }
        let rank = r.u32()?;
        if rank == 0 || rank > 8 {
            return Err(Error::format("weight file", format!("input rank {rank}")));
        }
        let input_shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let side_width = r.u32()?;
        let n_layers = r.u32()?;
        if n_layers > 1024 {
            return Err(Error::format("weight file", "too many layers"));
        }
        let mut specs = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let spec = match r.u8()? {
                1 => {
                    let v = (0..5).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                    let layout = match r.u8()? {
                        0 => InputLayout::Chw,
                        1 => InputLayout::Hwc,
                        other => {
                            return Err(Error::format(
                                "weight file",
                                format!("unknown layout {other}"),
                            ))
                        }
                    };
                    LayerSpec::Conv2d {
                        in_ch: v[0],
                        out_ch: v[1],
                        in_h: v[2],
                        in_w: v[3],
                        kernel: v[4],
                        layout,
                    }
                }
                2 => LayerSpec::Dense {
                    inputs: r.u32()?,
                    outputs: r.u32()?,
                },
                3 => LayerSpec::Relu,
                4 => LayerSpec::Sigmoid,
                5 => LayerSpec::Dropout { rate: r.f32()? },
                6 => LayerSpec::ConcatSide { width: r.u32()? },
                other => {
                    return Err(Error::format(
                        "weight file",
                        format!("unknown layer kind {other}"),
                    ))
                }
            };
            specs.push(spec);
        }
        let mut net = Network::from_specs(input_shape, side_width, &specs)?;
        let expected: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let values = expected
            .iter()
            .map(|&n| r.f32s(Some(n)))
            .collect::<Result<Vec<_>>>()?;
        for (p, v) in net.params_mut().into_iter().zip(values) {
            p.copy_from_slice(&v);
        }
        Ok(net)
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        self.save(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::load(bytes.as_slice())
    }
}

/// Writes a list of f32 arrays (for example optimizer accumulators).
pub fn write_arrays<W: Write>(out: W, arrays: &[Vec<f32>]) -> Result<()> {
    let mut w = Writer(out);
    w.bytes(ARRAY_FILE_MAGIC)?;
    w.bytes(&WEIGHT_FILE_VERSION.to_le_bytes())?;
    w.u32(arrays.len())?;
    for a in arrays {
        w.f32s(a)?;
    }
    Ok(())
}

pub fn read_arrays<R: Read>(input: R) -> Result<Vec<Vec<f32>>> {
    let mut r = Reader(input);
    if &r.bytes::<8>()? != ARRAY_FILE_MAGIC {
        return Err(Error::format("array file", "bad magic"));
    }
    let version = u32::from_le_bytes(r.bytes()?);
    if version != WEIGHT_FILE_VERSION {
        return Err(Error::format("array file", format!("unsupported version {version}")));
    }
    let n = r.u32()?;
    (0..n).map(|_| r.f32s(None)).collect()
}
