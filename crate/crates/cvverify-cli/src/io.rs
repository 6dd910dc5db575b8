use crate::CliError;
use cvverify::fock::{CoreState, DensityOp, density_from_pure};
use cvverify::measure::{Records, SampleBatch};
use cvverify::{Complex64, c64};
use serde::de::DeserializeOwned;
use std::io::Write;
use std::path::Path;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A state file holds either a pure core state (one index per mode in each
/// entry) or a density operator (two per mode).
pub fn read_state(path: &Path) -> Result<DensityOp, CliError> {
    let value: serde_json::Value = read_json(path)?;
    let modes = value.get("modes").and_then(|m| m.as_u64()).unwrap_or(0) as usize;
    let width = value
        .get("entries")
        .and_then(|e| e.as_array())
        .and_then(|e| e.first())
        .and_then(|e| e.as_array())
        .map_or(0, Vec::len);
    let parsed = if width == modes + 2 {
        serde_json::from_value::<CoreState>(value).map(|c| density_from_pure(&c))
    } else {
        serde_json::from_value::<DensityOp>(value)
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Target file: one core state, or an array with one core state per block.
pub fn read_targets(path: &Path) -> Result<Vec<CoreState>, CliError> {
    let value: serde_json::Value = read_json(path)?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value::<CoreState>(value).map(|c| vec![c])
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_batch<W: Write>(batch: &SampleBatch, out: W) -> Result<(), CliError> {
    let m = batch.num_modes();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["shot".to_string()];
    match batch.records() {
        Records::Homodyne { .. } => {
            header.push("theta".into());
            header.extend((1..=m).map(|i| format!("x{i}")));
        }
        Records::Heterodyne { .. } => {
            for i in 1..=m {
                header.push(format!("re{i}"));
                header.push(format!("im{i}"));
            }
        }
    }
    w.write_record(&header).map_err(io_err)?;
    let mut row = Vec::with_capacity(header.len());
    for s in 0..batch.len() {
        row.clear();
        row.push(s.to_string());
        match batch.records() {
            Records::Homodyne { .. } => {
                row.push(batch.theta(s).to_string());
                row.extend(batch.x(s).iter().map(f64::to_string));
            }
            Records::Heterodyne { .. } => {
                for a in batch.alpha(s) {
                    row.push(a.re.to_string());
                    row.push(a.im.to_string());
                }
            }
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Reads a sample CSV. Detector efficiency and unbalancing are not stored in
/// the file and come from the caller.
pub fn read_batch(path: &Path, eta: f64, xi: Option<&[Complex64]>) -> Result<SampleBatch, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("shot") || header.len() < 2 {
        return Err(bad("header must start with `shot`".into()));
    }
    let homodyne = header[1] == "theta";
    let m = if homodyne { header.len() - 2 } else { (header.len() - 1) / 2 };
    let expected: Vec<String> = if homodyne {
        (1..=m).map(|i| format!("x{i}")).collect()
    } else {
        (1..=m).flat_map(|i| [format!("re{i}"), format!("im{i}")]).collect()
    };
    let offset = if homodyne { 2 } else { 1 };
    if m == 0 || header[offset..] != expected[..] {
        return Err(bad("header must be `shot,theta,x1,...` or `shot,re1,im1,...`".into()));
    }
    let mut theta = Vec::new();
    let mut xs = Vec::new();
    let mut alpha = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let nums = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if homodyne {
            theta.push(nums[0]);
            xs.extend_from_slice(&nums[1..]);
        } else {
            alpha.extend(nums.chunks(2).map(|p| c64(p[0], p[1])));
        }
    }
    let eta = vec![eta; m];
    let batch = if homodyne {
        SampleBatch::homodyne(m, theta, xs, eta, 0)
    } else {
        let xi = xi.map_or_else(|| vec![c64(0.0, 0.0); m], <[Complex64]>::to_vec);
        SampleBatch::heterodyne(m, alpha, eta, xi, 0)
    };
    batch.map_err(CliError::from)
}
