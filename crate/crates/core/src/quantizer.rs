//! Absolute-maximum normalized fixed-bit quantization.
//!
//! Each weight matrix and each bias vector is a separate group. A group is
//! scaled by its absolute maximum (rounded up to binary16, so the scale the
//! decoder reads back is the one the encoder used), multiplied by
//! `k = 2^(q-1) - 1` and rounded half away from zero into `[-k, k]`.

use crate::error::{corrupt, invalid, Result};
use crate::half_float::{is_f16_exact, round_up_f16};
use crate::scalar::Scalar;
use crate::siren::{validate_layer_dims, ParamSet, SirenNetwork};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 15;

/// Largest symbol magnitude for `q`-bit quantization: `2^(q-1) - 1`.
pub fn k_of(q: u32) -> Result<i32> {
    if !(MIN_BITS..=MAX_BITS).contains(&q) {
        return Err(invalid(format!("bit depth {q} outside {MIN_BITS}..={MAX_BITS}")));
    }
    Ok((1 << (q - 1)) - 1)
}

/// Quantizes one group, returning its symbols and binary16 scale.
///
/// An all-zero group gets scale 0 and all-zero symbols.
pub fn quantize_group<F: Scalar>(values: &[F], q: u32) -> Result<(Vec<i32>, F)> {
    let k = k_of(q)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("cannot quantize non-finite values"));
    }
    let max = values.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let absmax = F::lit(round_up_f16(max.to_f64_lossy())?);
    if absmax == F::zero() {
        return Ok((vec![0; values.len()], absmax));
    }
    let kf = F::from_i32(k).expect("k fits any float");
    let symbols = values
        .iter()
        .map(|&v| {
            // Float::round rounds half away from zero.
            let s = (v / absmax * kf).round().max(-kf).min(kf);
            s.to_i32().expect("clamped symbol fits i32")
        })
        .collect();
    Ok((symbols, absmax))
}

/// `symbol / k * absmax` for every symbol.
pub fn dequantize_group<F: Scalar>(symbols: &[i32], absmax: F, q: u32) -> Result<Vec<F>> {
    let k = k_of(q)?;
    if !(absmax >= F::zero() && absmax.is_finite()) {
        return Err(corrupt(format!("invalid group scale {absmax}")));
    }
    let kf = F::from_i32(k).expect("k fits any float");
    symbols
        .iter()
        .map(|&s| {
            if s.abs() > k {
                Err(corrupt(format!("symbol {s} outside [-{k}, {k}]")))
            } else {
                Ok(F::from_i32(s).expect("symbol fits any float") / kf * absmax)
            }
        })
        .collect()
}

/// Quantize-then-dequantize in one call; the forward transform used by
/// quantization-aware training. Its backward pass is the identity.
pub fn fake_quantize_group<F: Scalar>(values: &[F], q: u32) -> Result<Vec<F>> {
    let (symbols, absmax) = quantize_group(values, q)?;
    dequantize_group(&symbols, absmax, q)
}

/// Integer symbols and binary16 scales for every layer of a network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedNetwork {
    layer_dims: Vec<usize>,
    q: u32,
    weight_symbols: Vec<Vec<i32>>,
    bias_symbols: Vec<Vec<i32>>,
    weight_absmax: Vec<F16Value>,
    bias_absmax: Vec<F16Value>,
}

/// A nonnegative value known to be exactly representable in binary16.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct F16Value(u16);

impl F16Value {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0 && is_f16_exact(value)) {
            return Err(corrupt(format!("{value} is not a nonnegative binary16 value")));
        }
        Ok(Self(half::f16::from_f64(value).to_bits()))
    }

    pub fn from_bits(bits: u16) -> Result<Self> {
        Self::new(half::f16::from_bits(bits).to_f64())
    }

    pub fn get(self) -> f64 {
        half::f16::from_bits(self.0).to_f64()
    }

    pub fn to_bits(self) -> u16 {
        self.0
    }
}

impl QuantizedNetwork {
    /// Assembles a network from parts, checking every invariant.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        q: u32,
        weight_symbols: Vec<Vec<i32>>,
        bias_symbols: Vec<Vec<i32>>,
        weight_absmax: Vec<F16Value>,
        bias_absmax: Vec<F16Value>,
    ) -> Result<Self> {
        let qnet = Self { layer_dims, q, weight_symbols, bias_symbols, weight_absmax, bias_absmax };
        qnet.validate()?;
        Ok(qnet)
    }

    fn validate(&self) -> Result<()> {
        validate_layer_dims(&self.layer_dims).map_err(|e| corrupt(e.to_string()))?;
        let k = k_of(self.q).map_err(|e| corrupt(e.to_string()))?;
        let n_layers = self.n_layers();
        if self.weight_symbols.len() != n_layers
            || self.bias_symbols.len() != n_layers
            || self.weight_absmax.len() != n_layers
            || self.bias_absmax.len() != n_layers
        {
            return Err(corrupt("group count does not match layer count"));
        }
        for (l, d) in self.layer_dims.windows(2).enumerate() {
            if self.weight_symbols[l].len() != d[0] * d[1] || self.bias_symbols[l].len() != d[1] {
                return Err(corrupt(format!("layer {l} symbol count does not match {d:?}")));
            }
        }
        for (symbols, absmax) in self.groups() {
            if let Some(s) = symbols.iter().find(|s| s.abs() > k) {
                return Err(corrupt(format!("symbol {s} outside [-{k}, {k}]")));
            }
            if absmax.get() == 0.0 && symbols.iter().any(|&s| s != 0) {
                return Err(corrupt("nonzero symbols in a zero-scale group"));
            }
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn k(&self) -> i32 {
        k_of(self.q).expect("validated bit depth")
    }

    pub fn weight_symbols(&self) -> &[Vec<i32>] {
        &self.weight_symbols
    }

    pub fn bias_symbols(&self) -> &[Vec<i32>] {
        &self.bias_symbols
    }

    pub fn weight_absmax(&self) -> &[F16Value] {
        &self.weight_absmax
    }

    pub fn bias_absmax(&self) -> &[F16Value] {
        &self.bias_absmax
    }

    /// `(symbols, scale)` for each weight group in layer order, then each bias group.
    pub fn groups(&self) -> impl Iterator<Item = (&[i32], F16Value)> {
        self.weight_symbols
            .iter()
            .zip(&self.weight_absmax)
            .chain(self.bias_symbols.iter().zip(&self.bias_absmax))
            .map(|(s, a)| (s.as_slice(), *a))
    }

    pub fn n_symbols(&self) -> usize {
        self.groups().map(|(s, _)| s.len()).sum()
    }

    /// All weight symbols (layer order) followed by all bias symbols.
    pub fn symbol_stream(&self) -> Vec<i32> {
        self.groups().flat_map(|(s, _)| s.iter().copied()).collect()
    }

    /// Inverse of [`symbol_stream`](Self::symbol_stream).
    pub fn from_symbol_stream(
        layer_dims: Vec<usize>,
        q: u32,
        stream: &[i32],
        weight_absmax: Vec<F16Value>,
        bias_absmax: Vec<F16Value>,
    ) -> Result<Self> {
        validate_layer_dims(&layer_dims).map_err(|e| corrupt(e.to_string()))?;
        let expected: usize = layer_dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        if stream.len() != expected {
            return Err(corrupt(format!("{} symbols for a network with {expected} parameters", stream.len())));
        }
        let mut rest = stream;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let weight_symbols = layer_dims.windows(2).map(|d| take(d[0] * d[1])).collect();
        let bias_symbols = layer_dims.windows(2).map(|d| take(d[1])).collect();
        Self::from_parts(layer_dims, q, weight_symbols, bias_symbols, weight_absmax, bias_absmax)
    }
}

/// Quantizes every weight group and every bias group of `net` independently.
pub fn quantize_network<F: Scalar>(net: &SirenNetwork<F>, q: u32) -> Result<QuantizedNetwork> {
    let params = net.params();
    let quantize_all = |groups: &[Vec<F>]| -> Result<(Vec<Vec<i32>>, Vec<F16Value>)> {
        let mut symbols = Vec::with_capacity(groups.len());
        let mut scales = Vec::with_capacity(groups.len());
        for g in groups {
            let (s, a) = quantize_group(g, q)?;
            symbols.push(s);
            scales.push(F16Value::new(a.to_f64_lossy())?);
        }
        Ok((symbols, scales))
    };
    let (weight_symbols, weight_absmax) = quantize_all(&params.weights)?;
    let (bias_symbols, bias_absmax) = quantize_all(&params.biases)?;
    QuantizedNetwork::from_parts(
        net.layer_dims().to_vec(),
        q,
        weight_symbols,
        bias_symbols,
        weight_absmax,
        bias_absmax,
    )
}

/// Rebuilds full-precision parameters from symbols and scales.
pub fn dequantize_network<F: Scalar>(qnet: &QuantizedNetwork, w0: F) -> Result<SirenNetwork<F>> {
    let q = qnet.q();
    let restore = |symbols: &[Vec<i32>], scales: &[F16Value]| -> Result<Vec<Vec<F>>> {
        symbols.iter().zip(scales).map(|(s, a)| dequantize_group(s, F::lit(a.get()), q)).collect()
    };
    let params = ParamSet {
        weights: restore(&qnet.weight_symbols, &qnet.weight_absmax)?,
        biases: restore(&qnet.bias_symbols, &qnet.bias_absmax)?,
    };
    SirenNetwork::new(qnet.layer_dims.clone(), params, w0)
}

/// Applies [`fake_quantize_group`] to every group of a parameter set.
pub fn fake_quantize_params<F: Scalar>(params: &ParamSet<F>, q: u32) -> Result<ParamSet<F>> {
    let fq = |groups: &[Vec<F>]| -> Result<Vec<Vec<F>>> { groups.iter().map(|g| fake_quantize_group(g, q)).collect() };
    Ok(ParamSet { weights: fq(&params.weights)?, biases: fq(&params.biases)? })
}
