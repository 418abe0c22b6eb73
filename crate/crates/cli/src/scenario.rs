//! `scenario/v1` configuration files and the provenance envelope written
//! into every output.

use std::path::Path;

use morse_pi1::geometry::Manifold;
use morse_pi1::relpi1::{BaseSide, NumericProfile};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "scenario/v1";
pub const TOOL_VERSION: &str = concat!("morse-pi1 ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub options: NumericOptions,
    #[serde(default)]
    pub analyze: Option<FieldSpec>,
    #[serde(default, rename = "continue")]
    pub continuation: Option<ContinueSpec>,
    #[serde(default)]
    pub graft: Option<GraftSection>,
    #[serde(default)]
    pub square: Option<SquareSection>,
    #[serde(default)]
    pub relative: Option<RelativeSection>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NumericOptions {
    pub samples: Option<usize>,
    pub wall_tol: Option<f64>,
    pub seeds_per_axis: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub manifold: Manifold,
    pub field: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueSpec {
    pub manifold: Manifold,
    pub f1: String,
    pub f2: String,
    pub eps: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GraftSection {
    pub source: FieldSpec,
    pub target: FieldSpec,
    /// Components of `H`, in the source variables.
    pub map: Vec<String>,
    pub jitter: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SquareSection {
    pub manifold: Manifold,
    pub f1: String,
    pub f2: String,
    pub f3: String,
    pub grid: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RelativeSection {
    #[serde(flatten)]
    pub profile: NumericProfile,
    pub base: BaseSide,
    pub max_len: usize,
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded, String> {
    let src = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&src).map_err(|e| format!("parsing {}: {e}", path.display()))?;
    // keys are sorted by serde_json's map, so the hash ignores layout
    let canonical = serde_json::to_string(&value).expect("value serializes");
    let hash = format!("{:x}", Sha256::digest(canonical.as_bytes()));
    let scenario: Scenario = serde_json::from_value(value).map_err(|e| format!("scenario: {e}"))?;
    if scenario.schema != SCHEMA {
        return Err(format!("scenario schema {:?}, expected {SCHEMA:?}", scenario.schema));
    }
    Ok(Loaded { scenario, hash })
}

/// Provenance written next to every payload.
#[derive(Clone, Debug)]
pub struct Meta {
    pub hash: String,
    pub seed: u64,
}

/// The payload's own fields plus `tool_version`, `scenario_hash` and
/// `seed`, pretty-printed with sorted keys and a trailing newline.
pub fn envelope<T: Serialize>(payload: &T, meta: &Meta) -> String {
    let mut map = match serde_json::to_value(payload).expect("payload serializes") {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("payload".into(), other);
            m
        }
    };
    map.insert("tool_version".into(), Value::from(TOOL_VERSION));
    map.insert("scenario_hash".into(), Value::from(meta.hash.clone()));
    map.insert("seed".into(), Value::from(meta.seed));
    let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("value serializes");
    s.push('\n');
    s
}
