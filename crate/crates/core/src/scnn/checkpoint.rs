//! SCN1 model checkpoints: magic, u32 input side, a per-layer shape table,
//! then all weights as little-endian f32 in declaration order (conv1 w/b,
//! conv2 w/b, conv3 w/b, dense w/b).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ConvLayer, DenseLayer, Geometry, ScnnError, ScnnParams, CONV_CHANNELS, CONV_KERNEL};
use crate::stimulus::NUM_CLASSES;

pub const SCN_MAGIC: [u8; 4] = *b"SCN1";

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<(), ScnnError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32_slice<W: Write>(w: &mut W, values: &[f64]) -> Result<(), ScnnError> {
    let mut buf = Vec::with_capacity(values.len().min(1 << 18) * 4);
    for chunk in values.chunks(1 << 16) {
        buf.clear();
        for &v in chunk {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, ScnnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f32_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>, ScnnError> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect())
}

/// Serializes a model to any sink.
pub fn write_checkpoint<W: Write>(params: &ScnnParams, mut sink: W) -> Result<(), ScnnError> {
    sink.write_all(&SCN_MAGIC)?;
    put_u32(&mut sink, params.geometry.input_side as u32)?;
    put_u32(&mut sink, 4)?;
    for layer in [&params.conv1, &params.conv2, &params.conv3] {
        put_u32(&mut sink, layer.out_ch as u32)?;
        put_u32(&mut sink, layer.in_ch as u32)?;
        put_u32(&mut sink, CONV_KERNEL as u32)?;
        put_u32(&mut sink, CONV_KERNEL as u32)?;
    }
    put_u32(&mut sink, params.dense.out as u32)?;
    put_u32(&mut sink, params.dense.input as u32)?;
    put_u32(&mut sink, 1)?;
    put_u32(&mut sink, 1)?;
    for layer in [&params.conv1, &params.conv2, &params.conv3] {
        put_f32_slice(&mut sink, &layer.weights)?;
        put_f32_slice(&mut sink, &layer.bias)?;
    }
    put_f32_slice(&mut sink, &params.dense.weights)?;
    put_f32_slice(&mut sink, &params.dense.bias)?;
    Ok(())
}

/// Reads a model and validates the shape table against the declared geometry.
pub fn read_checkpoint<R: Read>(mut source: R) -> Result<ScnnParams, ScnnError> {
    let mut magic = [0u8; 4];
    source.read_exact(&mut magic)?;
    if magic != SCN_MAGIC {
        return Err(ScnnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let side = get_u32(&mut source)? as usize;
    let geometry = Geometry::new(side)?;
    let layer_count = get_u32(&mut source)?;
    if layer_count != 4 {
        return Err(ScnnError::Checkpoint(format!("expected 4 layers, found {layer_count}")));
    }
    let mut table = [[0u32; 4]; 4];
    for row in &mut table {
        for cell in row.iter_mut() {
            *cell = get_u32(&mut source)?;
        }
    }
    let expected_convs =
        [(CONV_CHANNELS[0], 1), (CONV_CHANNELS[1], CONV_CHANNELS[0]), (CONV_CHANNELS[2], CONV_CHANNELS[1])];
    for (i, (out_ch, in_ch)) in expected_convs.iter().enumerate() {
        let want = [*out_ch as u32, *in_ch as u32, CONV_KERNEL as u32, CONV_KERNEL as u32];
        if table[i] != want {
            return Err(ScnnError::Checkpoint(format!(
                "conv{} shape {:?} does not match {:?}",
                i + 1,
                table[i],
                want
            )));
        }
    }
    let want_dense = [NUM_CLASSES as u32, geometry.flatten_len() as u32, 1, 1];
    if table[3] != want_dense {
        return Err(ScnnError::Checkpoint(format!(
            "dense shape {:?} does not match {:?} for input side {side}",
            table[3], want_dense
        )));
    }

    let mut convs = Vec::with_capacity(3);
    for (out_ch, in_ch) in expected_convs {
        let weights = get_f32_vec(&mut source, out_ch * in_ch * CONV_KERNEL * CONV_KERNEL)?;
        let bias = get_f32_vec(&mut source, out_ch)?;
        convs.push(ConvLayer { out_ch, in_ch, weights, bias });
    }
    let dense_w = get_f32_vec(&mut source, NUM_CLASSES * geometry.flatten_len())?;
    let dense_b = get_f32_vec(&mut source, NUM_CLASSES)?;
    let mut trailing = [0u8; 1];
    if source.read(&mut trailing)? != 0 {
        return Err(ScnnError::Checkpoint("trailing bytes after weights".into()));
    }
    let conv3 = convs.pop().unwrap();
    let conv2 = convs.pop().unwrap();
    let conv1 = convs.pop().unwrap();
    Ok(ScnnParams {
        geometry,
        conv1,
        conv2,
        conv3,
        dense: DenseLayer { out: NUM_CLASSES, input: geometry.flatten_len(), weights: dense_w, bias: dense_b },
    })
}

pub fn save_checkpoint(params: &ScnnParams, path: &Path) -> Result<(), ScnnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ScnnParams, ScnnError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quantizes like a save/load cycle so round-trip comparisons are exact.
    fn quantize(params: &mut ScnnParams) {
        let n = params.param_count();
        for i in 0..n {
            let v = params.get_flat(i);
            params.set_flat(i, f64::from(v as f32));
        }
    }

    #[test]
    fn checkpoint_round_trips_quantized_params() {
        let mut params = ScnnParams::init(Geometry::new(16).unwrap(), 21);
        quantize(&mut params);
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn checkpoint_rejects_bad_magic_and_truncation() {
        let params = ScnnParams::init(Geometry::new(8).unwrap(), 0);
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();

        let mut corrupted = buf.clone();
        corrupted[0] = b'X';
        assert!(matches!(read_checkpoint(&corrupted[..]), Err(ScnnError::Checkpoint(_))));

        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint(truncated).is_err());
    }

    #[test]
    fn checkpoint_rejects_mismatched_dense_table() {
        let params = ScnnParams::init(Geometry::new(8).unwrap(), 0);
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        // Dense input lives in table row 3, second cell: bytes 4+4+4 + 3*16 + 4.
        let offset = 12 + 48 + 4;
        buf[offset..offset + 4].copy_from_slice(&999u32.to_le_bytes());
        assert!(matches!(read_checkpoint(&buf[..]), Err(ScnnError::Checkpoint(_))));
    }

    #[test]
    fn writes_are_byte_identical_for_equal_params() {
        let params = ScnnParams::init(Geometry::new(8).unwrap(), 3);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_checkpoint(&params, &mut a).unwrap();
        write_checkpoint(&params, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
