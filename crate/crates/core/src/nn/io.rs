use super::{EpochStats, LayerSpec, Model, ModelKind, NnError, Tensor};
use crate::binio::Reader;
use crate::FormatError;

pub const WEIGHTS_MAGIC: &[u8; 6] = b"CARPW1";

const TAG_CONV: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_FLATTEN: u8 = 2;
const TAG_DENSE: u8 = 3;
const TAG_SIGMOID: u8 = 4;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

/// `CARPW1`, kind byte (0 CARP, 1 GSP), input shape (4 × u32), layer count
/// (u32), one tagged record per layer, then every weight tensor as f64 in
/// layer order (weights before bias). Little-endian throughout.
pub fn write_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(match model.kind {
        ModelKind::Carp => 0,
        ModelKind::Gsp => 1,
    });
    for d in model.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        match *layer {
            LayerSpec::Conv3d {
                in_ch,
                out_ch,
                kernel,
                stride,
            } => {
                out.push(TAG_CONV);
                for v in [in_ch, out_ch, kernel, stride] {
                    put_u32(&mut out, v);
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                out.push(TAG_DENSE);
                put_u32(&mut out, inputs);
                put_u32(&mut out, outputs);
            }
            LayerSpec::Relu => out.push(TAG_RELU),
            LayerSpec::Flatten => out.push(TAG_FLATTEN),
            LayerSpec::Sigmoid => out.push(TAG_SIGMOID),
        }
    }
    for t in model.params() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_model(bytes: &[u8]) -> Result<Model, NnError> {
    let mut r = Reader::new(bytes);
    r.expect_magic(WEIGHTS_MAGIC)?;
    let kind = match r.u8()? {
        0 => ModelKind::Carp,
        1 => ModelKind::Gsp,
        k => return Err(FormatError(format!("unknown model kind byte {k}")).into()),
    };
    let mut input_shape = [0usize; 4];
    for d in &mut input_shape {
        *d = r.u32()? as usize;
    }
    let n_layers = r.u32()? as usize;
    if n_layers > 1024 {
        return Err(FormatError(format!("implausible layer count {n_layers}")).into());
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layers.push(match r.u8()? {
            TAG_CONV => LayerSpec::Conv3d {
                in_ch: r.u32()? as usize,
                out_ch: r.u32()? as usize,
                kernel: r.u32()? as usize,
                stride: r.u32()? as usize,
            },
            TAG_DENSE => LayerSpec::Dense {
                inputs: r.u32()? as usize,
                outputs: r.u32()? as usize,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_FLATTEN => LayerSpec::Flatten,
            TAG_SIGMOID => LayerSpec::Sigmoid,
            t => return Err(FormatError(format!("unknown layer tag {t}")).into()),
        });
    }
    let template = Model::new(kind, input_shape, layers.clone(), 0)?;
    let mut params = Vec::with_capacity(template.params().len());
    for t in template.params() {
        let raw = r.take(t.len() * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(Tensor::new(t.shape.clone(), data)?);
    }
    r.finish()?;
    Model::from_parts(kind, input_shape, layers, params)
}

/// `epoch,train_loss,val_accuracy` rows.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,train_loss,val_accuracy\n");
    for h in history {
        s.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.val_accuracy));
    }
    s
}
