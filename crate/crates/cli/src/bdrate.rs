//! Reads rate-distortion curves back from sweep CSV files.

use std::collections::HashMap;
use std::path::Path;

use inr_codec::RdPoint;

use crate::failure::{CliResult, Failure};
use crate::sweep::AVERAGE_LABEL;

/// Points of one curve. With `image` set only its rows are used; otherwise
/// the `average` rows if there are any, else every row.
///
/// Rate and quality come from `bpp_total`/`psnr_quant`, falling back to
/// plain `bpp`/`psnr` columns for hand-written files.
pub fn read_curve(path: &Path, image: Option<&str>) -> CliResult<Vec<RdPoint>> {
    let data_err = |msg: String| Failure::Data(anyhow::anyhow!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| data_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let pick = |names: [&str; 2]| names.iter().find_map(|n| col.get(n).copied());
    let rate = pick(["bpp_total", "bpp"]).ok_or_else(|| data_err("no bpp_total or bpp column".into()))?;
    let quality = pick(["psnr_quant", "psnr"]).ok_or_else(|| data_err("no psnr_quant or psnr column".into()))?;
    let label = col.get("image").copied();

    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| data_err(format!("row {}: bad number in column {}", line + 2, &headers[i])))
        };
        let name = label.and_then(|i| rec.get(i)).unwrap_or("").to_string();
        rows.push((name, num(rate)?, num(quality)?));
    }
    let has_average = rows.iter().any(|r| r.0 == AVERAGE_LABEL);
    let keep = |name: &str| match image {
        Some(want) => name == want,
        None => !has_average || name == AVERAGE_LABEL,
    };
    rows.into_iter()
        .filter(|r| keep(&r.0))
        .map(|(name, r, p)| RdPoint::new(r, p, name).map_err(|e| data_err(e.to_string())))
        .collect()
}
