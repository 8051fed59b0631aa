//! Border-aware probability model over quantized symbols.
//!
//! The two extreme symbols `±k` each get the fixed mass `L / n_params`; the
//! interior `[-(k-1), k-1]` shares the remaining `1 - 2L / n_params` in
//! proportion to a Gaussian density evaluated at the integers. Mean and
//! standard deviation are estimated from interior symbols only and stored as
//! binary16 so the decoder rebuilds exactly the encoder's frequency table.

use half::f16;

use crate::error::{invalid, CodecError, Result};
use crate::half_float::{round_nearest_f16, round_up_f16};

/// Nominal lower bound on the standard deviation.
pub const SIGMA_FLOOR: f64 = 0.1;

/// Frequency tables sum to `2^TABLE_PRECISION_BITS`.
pub const TABLE_PRECISION_BITS: u32 = 16;

const TABLE_TOTAL: u32 = 1 << TABLE_PRECISION_BITS;

/// Smallest binary16 value not below [`SIGMA_FLOOR`]; this is the floor
/// actually applied, since stored parameters must be binary16-exact.
pub fn sigma_floor() -> f64 {
    round_up_f16(SIGMA_FLOOR).expect("floor is in binary16 range")
}

#[derive(Clone, Debug, PartialEq)]
pub struct BorderAwareModel {
    mu: f16,
    sigma: f16,
    n_layers: usize,
    n_params: usize,
    k: i32,
    /// Exponent shift that makes the largest interior kernel value 1.
    shift: f64,
    /// Sum of shifted kernel values over the interior, left to right.
    norm: f64,
}

impl BorderAwareModel {
    /// Validates parameters; `mu` and `sigma` must already be binary16 values.
    pub fn new(mu: f64, sigma: f64, n_layers: usize, n_params: usize, k: i32) -> Result<Self> {
        let mu_h = f16::from_f64(mu);
        let sigma_h = f16::from_f64(sigma);
        if !mu.is_finite() || mu_h.to_f64() != mu {
            return Err(invalid(format!("mu {mu} is not a finite binary16 value")));
        }
        if !sigma.is_finite() || sigma_h.to_f64() != sigma {
            return Err(invalid(format!("sigma {sigma} is not a finite binary16 value")));
        }
        if sigma < sigma_floor() {
            return Err(invalid(format!("sigma {sigma} below floor {}", sigma_floor())));
        }
        if k < 1 {
            return Err(invalid(format!("k must be at least 1, got {k}")));
        }
        if n_layers == 0 || 2 * n_layers >= n_params {
            return Err(invalid(format!(
                "border mass 2L/n = {}/{n_params} must be below 1",
                2 * n_layers
            )));
        }
        let inner = k - 1;
        let peak = mu.round().clamp(f64::from(-inner), f64::from(inner));
        let shift = exponent(peak, mu, sigma);
        let norm = (-inner..=inner).fold(0.0, |acc, u| acc + (exponent(f64::from(u), mu, sigma) - shift).exp());
        Ok(Self { mu: mu_h, sigma: sigma_h, n_layers, n_params, k, shift, norm })
    }

    /// Rebuilds a model from the two stored binary16 bit patterns.
    pub fn from_bits(mu_bits: u16, sigma_bits: u16, n_layers: usize, n_params: usize, k: i32) -> Result<Self> {
        let mu = f16::from_bits(mu_bits).to_f64();
        let sigma = f16::from_bits(sigma_bits).to_f64();
        Self::new(mu, sigma, n_layers, n_params, k).map_err(|e| CodecError::CorruptData(e.to_string()))
    }

    /// Fits the model to a symbol stream.
    ///
    /// Moments come from the interior symbols only (population variance);
    /// both are rounded to the nearest binary16 and sigma is floored. An empty
    /// interior yields `(0, floor)`.
    pub fn estimate(symbols: &[i32], n_layers: usize, k: i32) -> Result<Self> {
        if symbols.is_empty() {
            return Err(invalid("cannot estimate a model from no symbols"));
        }
        if k < 1 {
            return Err(invalid(format!("k must be at least 1, got {k}")));
        }
        if let Some(s) = symbols.iter().find(|s| s.abs() > k) {
            return Err(invalid(format!("symbol {s} outside [-{k}, {k}]")));
        }
        let (mu, sd) = interior_moments(symbols, k);
        let mu = round_nearest_f16(mu)?;
        let sigma = round_nearest_f16(sd)?.max(sigma_floor());
        Self::new(mu, sigma, n_layers, symbols.len(), k)
    }

    pub fn mu(&self) -> f64 {
        self.mu.to_f64()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.to_f64()
    }

    pub fn mu_bits(&self) -> u16 {
        self.mu.to_bits()
    }

    pub fn sigma_bits(&self) -> u16 {
        self.sigma.to_bits()
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    fn border_mass(&self) -> f64 {
        self.n_layers as f64 / self.n_params as f64
    }

    fn interior_mass(&self) -> f64 {
        1.0 - 2.0 * self.n_layers as f64 / self.n_params as f64
    }

    fn kernel_exponent(&self, x: i32) -> f64 {
        exponent(f64::from(x), self.mu(), self.sigma()) - self.shift
    }

    /// Probability of symbol `x`; zero outside `[-k, k]`.
    pub fn pmf(&self, x: i32) -> f64 {
        if x.abs() == self.k {
            self.border_mass()
        } else if x.abs() < self.k {
            self.interior_mass() * self.kernel_exponent(x).exp() / self.norm
        } else {
            0.0
        }
    }

    /// Natural log of [`pmf`](Self::pmf), finite for every symbol in range
    /// even where the probability underflows.
    pub fn ln_pmf(&self, x: i32) -> f64 {
        if x.abs() == self.k {
            self.border_mass().ln()
        } else if x.abs() < self.k {
            self.interior_mass().ln() + self.kernel_exponent(x) - self.norm.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Ideal code length `-sum log2 p(s)` in bits.
    pub fn rate(&self, symbols: &[i32]) -> Result<f64> {
        let mut bits = 0.0;
        for &s in symbols {
            if s.abs() > self.k {
                return Err(invalid(format!("symbol {s} has zero probability")));
            }
            bits -= self.ln_pmf(s) / std::f64::consts::LN_2;
        }
        Ok(bits)
    }
}

fn exponent(x: f64, mu: f64, sigma: f64) -> f64 {
    let d = x - mu;
    -d * d / (2.0 * sigma * sigma)
}

/// Mean and population standard deviation of the symbols strictly inside
/// `(-k, k)`, before any rounding. `(0, 0)` when there are none.
pub fn interior_moments(symbols: &[i32], k: i32) -> (f64, f64) {
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0f64, 0.0f64);
    for &s in symbols.iter().filter(|s| s.abs() < k) {
        n += 1;
        sum += f64::from(s);
        sum_sq += f64::from(s) * f64::from(s);
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt())
}

/// Integer symbol frequencies over `[-k, k]` summing to `2^16`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    k: i32,
    freqs: Vec<u32>,
    /// `cumulative[i]` is the sum of `freqs[..i]`; one entry longer than `freqs`.
    cumulative: Vec<u32>,
}

impl FrequencyTable {
    /// Wraps explicit frequencies for symbols `-k..=k` (index 0 is `-k`).
    pub fn from_freqs(k: i32, freqs: Vec<u32>) -> Result<Self> {
        if k < 0 || freqs.len() != 2 * k as usize + 1 {
            return Err(invalid(format!("need {} frequencies for k = {k}", 2 * i64::from(k) + 1)));
        }
        if freqs.contains(&0) {
            return Err(invalid("every symbol needs a nonzero frequency"));
        }
        let mut cumulative = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u64;
        cumulative.push(0);
        for &f in &freqs {
            acc += u64::from(f);
            if acc > u64::from(TABLE_TOTAL) {
                break;
            }
            cumulative.push(acc as u32);
        }
        if acc != u64::from(TABLE_TOTAL) {
            return Err(invalid(format!("frequencies sum to {acc}, expected {TABLE_TOTAL}")));
        }
        Ok(Self { k, freqs, cumulative })
    }

    pub fn precision_bits(&self) -> u32 {
        TABLE_PRECISION_BITS
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cumulative
    }

    pub fn contains(&self, symbol: i32) -> bool {
        symbol.abs() <= self.k
    }

    fn index(&self, symbol: i32) -> usize {
        (symbol + self.k) as usize
    }

    /// `(start, freq)` of a symbol's slot range. Panics outside the alphabet.
    pub fn slot(&self, symbol: i32) -> (u32, u32) {
        let i = self.index(symbol);
        (self.cumulative[i], self.freqs[i])
    }

    /// Symbol whose slot range contains `slot`, with that range.
    pub fn lookup(&self, slot: u32) -> (i32, u32, u32) {
        let i = self.cumulative.partition_point(|&c| c <= slot) - 1;
        (i as i32 - self.k, self.cumulative[i], self.freqs[i])
    }

    /// Ideal code length of `symbols` under the integer probabilities.
    pub fn cross_entropy_bits(&self, symbols: &[i32]) -> f64 {
        symbols
            .iter()
            .map(|&s| f64::from(TABLE_PRECISION_BITS) - f64::from(self.freqs[self.index(s)]).log2())
            .sum()
    }

    /// FNV-1a over `k` and the frequencies.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(&self.k.to_le_bytes());
        for f in &self.freqs {
            feed(&f.to_le_bytes());
        }
        h
    }
}

/// Quantizes the model's probabilities to integers summing to `2^16`.
///
/// Each symbol gets `max(1, floor(p * 2^16))`. The leftover is then added to
/// the most frequent symbol (ties go to the smaller symbol), or, when the
/// total overshoots, taken from symbols in descending-frequency order without
/// letting any drop below 1.
pub fn build_frequency_table(model: &BorderAwareModel) -> Result<FrequencyTable> {
    let k = model.k();
    let n = 2 * i64::from(k) + 1;
    if n > i64::from(TABLE_TOTAL) {
        return Err(CodecError::Unsupported(format!(
            "{n} symbols cannot each get a nonzero share of {TABLE_TOTAL}"
        )));
    }
    let scale = f64::from(TABLE_TOTAL);
    let mut freqs: Vec<u32> = (-k..=k).map(|s| ((model.pmf(s) * scale).floor() as u32).max(1)).collect();
    let total: i64 = freqs.iter().map(|&f| i64::from(f)).sum();
    let mut deficit = i64::from(TABLE_TOTAL) - total;

    // Indices by descending frequency; the stable sort keeps smaller symbols first on ties.
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]));
    if deficit > 0 {
        freqs[order[0]] += deficit as u32;
    } else {
        for &i in &order {
            if deficit == 0 {
                break;
            }
            let take = (i64::from(freqs[i]) - 1).min(-deficit);
            freqs[i] -= take as u32;
            deficit += take;
        }
    }
    FrequencyTable::from_freqs(k, freqs)
}
