//! Run manifest embedded in every machine-readable output.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use seqtest::ProblemParams;

/// Provenance block for an output file: rerunning with an equal manifest
/// (command, penalty, parameters and seed) reproduces the numbers
/// bit-identically.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub penalty: String,
    pub alpha: f64,
    pub sigma: f64,
    pub cost: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, penalty: &str, params: &ProblemParams, seed: Option<u64>) -> Self {
        Self {
            command: command.to_owned(),
            penalty: penalty.to_owned(),
            alpha: params.alpha(),
            sigma: params.sigma(),
            cost: params.cost(),
            k: params.k(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            timestamp: timestamp(),
        }
    }
}

/// UTC timestamp, honouring SOURCE_DATE_EPOCH for reproducible outputs.
fn timestamp() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
    rfc3339_utc(epoch)
}

fn rfc3339_utc(epoch_secs: u64) -> String {
    let days = (epoch_secs / 86_400) as i64;
    let secs = epoch_secs % 86_400;
    // Civil-from-days calendar arithmetic (proleptic Gregorian).
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        secs / 3600,
        (secs / 60) % 60,
        secs % 60
    )
}
