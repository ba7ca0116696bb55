//! Binary container for trained parameters: little-endian, magic `SORD`,
//! a version word, the head description (loss kind, k, anchor), then per
//! layer the dims, activation code, and raw 64-bit reals.

use std::io::{Read, Write};
use std::path::Path;

use crate::heads::{AnchorVector, Head, LossKind};
use crate::net::{Activation, Layer, NetworkParams};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SORD";
pub const VERSION: u32 = 1;

/// A trained network plus its output head.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: NetworkParams,
    pub head: Head,
}

fn loss_code(kind: LossKind) -> u8 {
    match kind {
        LossKind::CrossEntropy => 0,
        LossKind::FixA => 1,
        LossKind::LearnA => 2,
        LossKind::LearnASigm => 3,
        LossKind::Cheng => 4,
        LossKind::Qwk => 5,
    }
}

fn loss_from_code(code: u8) -> Result<LossKind> {
    Ok(match code {
        0 => LossKind::CrossEntropy,
        1 => LossKind::FixA,
        2 => LossKind::LearnA,
        3 => LossKind::LearnASigm,
        4 => LossKind::Cheng,
        5 => LossKind::Qwk,
        other => return Err(Error::Parse(format!("unknown loss code {other}"))),
    })
}

fn activation_code(act: Activation) -> u8 {
    match act {
        Activation::Relu => 0,
        Activation::Softmax => 1,
        Activation::Sigmoid => 2,
        Activation::Identity => 3,
    }
}

fn activation_from_code(code: u8) -> Result<Activation> {
    Ok(match code {
        0 => Activation::Relu,
        1 => Activation::Softmax,
        2 => Activation::Sigmoid,
        3 => Activation::Identity,
        other => return Err(Error::Parse(format!("unknown activation code {other}"))),
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(loss_code(model.head.kind));
    out.extend_from_slice(&(model.head.k as u32).to_le_bytes());
    out.push(model.head.anchor.is_learnable() as u8);
    for &v in model.head.anchor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(model.params.layers.len() as u32).to_le_bytes());
    for layer in &model.params.layers {
        out.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
        out.push(activation_code(layer.activation));
        for &v in layer.weight.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in layer.bias.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse("truncated parameter file".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Parse(format!("{}: bad magic", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported parameter version {version}")));
    }
    let kind = loss_from_code(r.u8()?)?;
    let k = r.u32()? as usize;
    let learnable = r.u8()? != 0;
    let anchor_values = r.f64s(k)?;
    let num_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let fan_in = r.u32()? as usize;
        let fan_out = r.u32()? as usize;
        let activation = activation_from_code(r.u8()?)?;
        let weight = Tensor::matrix(fan_in, fan_out, r.f64s(fan_in * fan_out)?)?;
        let bias = Tensor::new(vec![fan_out], r.f64s(fan_out)?)?;
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Parse("trailing bytes in parameter file".into()));
    }
    let mut head = Head::new(kind, k)?;
    head.anchor = AnchorVector::from_values(anchor_values, learnable);
    Ok(Model {
        params: NetworkParams { layers },
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net;
    use tempfile::tempdir;

    #[test]
    fn round_trip() {
        let params = NetworkParams::init(
            &[3, 8, 5],
            &[Activation::Relu, Activation::Softmax],
            99,
        )
        .unwrap();
        let mut head = Head::new(LossKind::LearnA, 5).unwrap();
        head.anchor.values_mut()[2] = 2.5;
        let model = Model { params, head };
        let dir = tempdir().unwrap();
        let path = dir.path().join("params.bin");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.head.kind, LossKind::LearnA);
        assert_eq!(back.head.anchor.values(), model.head.anchor.values());
        assert_eq!(back.params.layers.len(), 2);
        for (a, b) in back.params.layers.iter().zip(&model.params.layers) {
            assert_eq!(a.weight.data(), b.weight.data());
            assert_eq!(a.bias.data(), b.bias.data());
            assert_eq!(a.activation, b.activation);
        }
        // loaded model runs
        let batch = Tensor::matrix(1, 3, vec![0.1, -0.2, 0.3]).unwrap();
        let acts = net::forward(&back.params, &batch).unwrap();
        assert_eq!(acts.last().unwrap().cols(), 5);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Parse(_))));
    }
}
