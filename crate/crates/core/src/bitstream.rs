//! Wire format and the stream-to-image decoding pipeline.
//!
//! Layout (all integers big-endian, `f16` = IEEE binary16 big-endian):
//!
//! | field            | size            |
//! |------------------|-----------------|
//! | magic `"RQAT"`   | 4               |
//! | version (= 1)    | 1               |
//! | q                | 1               |
//! | width, height    | 2 + 2           |
//! | L (layers)       | 1               |
//! | layer_dims       | (L + 1) x 2     |
//! | weight absmax    | L x f16         |
//! | bias absmax      | L x f16         |
//! | mu, sigma        | f16 + f16       |
//! | payload length   | 4               |
//! | payload          | payload length  |
//!
//! The payload is the rANS-coded symbol stream: every weight group in layer
//! order, then every bias group in layer order. The model stores the
//! Gaussian's standard deviation, not its variance.

use crate::entropy_model::{build_frequency_table, BorderAwareModel};
use crate::error::{corrupt, invalid, CodecError, Result};
use crate::quantizer::{dequantize_network, k_of, F16Value, QuantizedNetwork};
use crate::range_coder;
use crate::raster::ImageBuffer;
use crate::scalar::Scalar;
use crate::siren::make_grid;

pub const MAGIC: [u8; 4] = *b"RQAT";
pub const VERSION: u8 = 1;

/// Octets before the payload for a network with `n_layers` layers.
pub fn header_len(n_layers: usize) -> usize {
    4 + 1 + 1 + 2 + 2 + 1 + 2 * (n_layers + 1) + 2 * 2 * n_layers + 2 + 2 + 4
}

/// Bits spent on scales and model parameters: `2 * L * 16 + 2 * 16`.
pub fn side_info_bits(n_layers: usize) -> usize {
    2 * n_layers * 16 + 2 * 16
}

/// A serialized image plus the numbers needed for rate accounting.
#[derive(Clone, Debug)]
pub struct EncodedImage {
    pub bytes: Vec<u8>,
    pub n_layers: usize,
    pub model: BorderAwareModel,
    /// Checksum of the frequency table the payload was coded with.
    pub table_checksum: u64,
}

impl EncodedImage {
    pub fn total_bits(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn payload_bits(&self) -> usize {
        (self.bytes.len() - header_len(self.n_layers)) * 8
    }

    pub fn side_info_bits(&self) -> usize {
        side_info_bits(self.n_layers)
    }

    /// Magic, version, sizes and length fields.
    pub fn structural_bits(&self) -> usize {
        header_len(self.n_layers) * 8 - self.side_info_bits()
    }
}

fn put_u16(out: &mut Vec<u8>, value: usize, what: &str) -> Result<()> {
    let v = u16::try_from(value).map_err(|_| CodecError::Unsupported(format!("{what} {value} exceeds 65535")))?;
    out.extend_from_slice(&v.to_be_bytes());
    Ok(())
}

/// Entropy-codes a quantized network into a self-contained stream.
pub fn serialize(qnet: &QuantizedNetwork, width: usize, height: usize) -> Result<EncodedImage> {
    if width == 0 || height == 0 {
        return Err(invalid("image dimensions must be positive"));
    }
    let n_layers = qnet.n_layers();
    let l_octet = u8::try_from(n_layers).map_err(|_| CodecError::Unsupported(format!("{n_layers} layers exceed 255")))?;
    let symbols = qnet.symbol_stream();
    let model = BorderAwareModel::estimate(&symbols, n_layers, qnet.k())?;
    let table = build_frequency_table(&model)?;
    let payload = range_coder::encode(&symbols, &table)?;
    let payload_len = u32::try_from(payload.bytes.len())
        .map_err(|_| CodecError::Unsupported("payload longer than 2^32 - 1 octets".into()))?;

    let mut out = Vec::with_capacity(header_len(n_layers) + payload.bytes.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(qnet.q() as u8);
    put_u16(&mut out, width, "width")?;
    put_u16(&mut out, height, "height")?;
    out.push(l_octet);
    for &d in qnet.layer_dims() {
        put_u16(&mut out, d, "layer size")?;
    }
    for a in qnet.weight_absmax().iter().chain(qnet.bias_absmax()) {
        out.extend_from_slice(&a.to_bits().to_be_bytes());
    }
    out.extend_from_slice(&model.mu_bits().to_be_bytes());
    out.extend_from_slice(&model.sigma_bits().to_be_bytes());
    out.extend_from_slice(&payload_len.to_be_bytes());
    out.extend_from_slice(&payload.bytes);
    Ok(EncodedImage { bytes: out, n_layers, table_checksum: table.checksum(), model })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("stream truncated"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Everything recovered from a stream.
#[derive(Clone, Debug)]
pub struct DecodedStream {
    pub qnet: QuantizedNetwork,
    pub width: usize,
    pub height: usize,
    pub model: BorderAwareModel,
    /// Checksum of the frequency table rebuilt on the decoder side.
    pub table_checksum: u64,
}

pub fn deserialize(bytes: &[u8]) -> Result<DecodedStream> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| CodecError::Format("stream shorter than magic".into()))? != MAGIC {
        return Err(CodecError::Format("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::Format(format!("unsupported version {version}")));
    }
    let q = u32::from(r.u8()?);
    let k = k_of(q).map_err(|_| corrupt(format!("bit depth {q} out of range")))?;
    let width = usize::from(r.u16()?);
    let height = usize::from(r.u16()?);
    if width == 0 || height == 0 {
        return Err(corrupt("zero image dimension"));
    }
    let n_layers = usize::from(r.u8()?);
    if n_layers == 0 {
        return Err(corrupt("stream declares no layers"));
    }
    let layer_dims = (0..=n_layers).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
    let mut scales = || (0..n_layers).map(|_| F16Value::from_bits(r.u16()?)).collect::<Result<Vec<_>>>();
    let weight_absmax = scales()?;
    let bias_absmax = scales()?;
    let mu_bits = r.u16()?;
    let sigma_bits = r.u16()?;
    let payload_len = r.u32()? as usize;
    let payload = r.take(payload_len)?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailing octets after payload"));
    }

    crate::siren::validate_layer_dims(&layer_dims).map_err(|e| corrupt(e.to_string()))?;
    let n_params: usize = layer_dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
    let model = BorderAwareModel::from_bits(mu_bits, sigma_bits, n_layers, n_params, k)?;
    let table = build_frequency_table(&model)?;
    let symbols = range_coder::decode(payload, &table, n_params)?;
    let qnet = QuantizedNetwork::from_symbol_stream(layer_dims, q, &symbols, weight_absmax, bias_absmax)?;
    Ok(DecodedStream { qnet, width, height, model, table_checksum: table.checksum() })
}

/// Unclamped network output for a stream: `(predictions, width, height)`.
pub fn decode_predictions<F: Scalar>(bytes: &[u8], w0: F) -> Result<(Vec<F>, usize, usize)> {
    let stream = deserialize(bytes)?;
    let net = dequantize_network(&stream.qnet, w0)?;
    let grid = make_grid(stream.width, stream.height)?;
    Ok((net.forward(&grid)?, stream.width, stream.height))
}

/// Full decoder: stream to clamped image.
pub fn decode_image<F: Scalar>(bytes: &[u8], w0: F) -> Result<ImageBuffer<F>> {
    let (pred, width, height) = decode_predictions(bytes, w0)?;
    ImageBuffer::from_predictions(width, height, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::quantize_network;
    use crate::siren::SirenNetwork;

    fn sample(dims: Vec<usize>, seed: u64) -> QuantizedNetwork {
        quantize_network(&SirenNetwork::<f64>::random(dims, 30.0, seed).unwrap(), 8).unwrap()
    }

    #[test]
    fn header_size_for_five_layers() {
        assert_eq!(header_len(5), 51);
        assert_eq!(side_info_bits(5), 192);
        let enc = serialize(&sample(vec![2, 8, 8, 8, 8, 3], 1), 16, 16).unwrap();
        assert_eq!(enc.side_info_bits(), 192);
        assert_eq!(enc.total_bits(), enc.structural_bits() + enc.side_info_bits() + enc.payload_bits());
        assert_eq!(&enc.bytes[..4], b"RQAT");
        assert_eq!(enc.bytes[4], 1);
        assert_eq!(enc.bytes[5], 8);
        assert_eq!(&enc.bytes[6..10], &[0, 16, 0, 16]);
        assert_eq!(enc.bytes[10], 5);
    }

    #[test]
    fn round_trip_is_exact_and_stable() {
        let qnet = sample(vec![2, 10, 7, 3], 4);
        let enc = serialize(&qnet, 33, 21).unwrap();
        let dec = deserialize(&enc.bytes).unwrap();
        assert_eq!(dec.qnet, qnet);
        assert_eq!((dec.width, dec.height), (33, 21));
        assert_eq!(dec.table_checksum, enc.table_checksum);
        let again = serialize(&dec.qnet, 33, 21).unwrap();
        assert_eq!(again.bytes, enc.bytes);
    }

    #[test]
    fn format_errors() {
        let enc = serialize(&sample(vec![2, 4, 3], 2), 4, 4).unwrap();
        let mut bad = enc.bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(CodecError::Format(_))));
        let mut bad = enc.bytes.clone();
        bad[4] = 2;
        assert!(matches!(deserialize(&bad), Err(CodecError::Format(_))));
        assert!(matches!(deserialize(b"RQ"), Err(CodecError::Format(_))));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_corrupt() {
        let enc = serialize(&sample(vec![2, 12, 12, 3], 3), 8, 8).unwrap();
        for cut in [1, 5, enc.bytes.len() - 20] {
            let r = deserialize(&enc.bytes[..enc.bytes.len() - cut]);
            assert!(matches!(r, Err(CodecError::CorruptData(_))), "cut {cut}");
        }
        let mut longer = enc.bytes.clone();
        longer.push(0);
        assert!(matches!(deserialize(&longer), Err(CodecError::CorruptData(_))));
    }

    #[test]
    fn zero_network_decodes_to_clamped_bias() {
        let net = SirenNetwork::<f64>::zeros(vec![2, 6, 3], 30.0).unwrap();
        let enc = serialize(&quantize_network(&net, 8).unwrap(), 5, 3).unwrap();
        let img = decode_image(&enc.bytes, 30.0f64).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));

        let mut p = net.params().clone();
        p.biases[1] = vec![1.5, 0.5, -0.25];
        let net = net.with_params(p).unwrap();
        let enc = serialize(&quantize_network(&net, 8).unwrap(), 2, 2).unwrap();
        let img = decode_image(&enc.bytes, 30.0f64).unwrap();
        let expect = dequantize_network::<f64>(&quantize_network(&net, 8).unwrap(), 30.0).unwrap().params().biases[1].clone();
        for px in img.pixels().chunks(3) {
            for (v, e) in px.iter().zip(&expect) {
                assert_eq!(*v, e.clamp(0.0, 1.0));
            }
        }
    }

    #[test]
    fn oversized_dimensions_are_unsupported() {
        let qnet = sample(vec![2, 4, 3], 1);
        assert!(matches!(serialize(&qnet, 70_000, 4), Err(CodecError::Unsupported(_))));
        assert!(serialize(&qnet, 0, 4).is_err());
    }
}
