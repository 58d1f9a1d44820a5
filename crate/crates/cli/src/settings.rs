use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or input files (exit 1).
    Usage(String),
    /// Vertex or enumeration budget exceeded (exit 2).
    Budget(String),
    /// Resource failures such as unwritable outputs (exit 2).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Budget(_) | CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Budget(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<percolate::Error> for CliError {
    fn from(e: percolate::Error) -> Self {
        match e {
            percolate::Error::Budget { .. } => CliError::Budget(e.to_string()),
            percolate::Error::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Flat key-value settings: the config file overlaid with explicit flags.
/// Defaults are recorded as they are applied, so the final map is the fully
/// resolved configuration.
pub struct Settings {
    map: Map<String, Value>,
}

/// Reals as JSON numbers; non-finite values as strings (`"inf"`).
fn real_value(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Settings { map: Map::new() });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(map)) => Ok(Settings { map }),
            Ok(_) => Err(CliError::Usage("config file must hold a JSON object".into())),
            Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
        }
    }

    pub fn set<T: Serialize>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.map
                .insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
        }
    }

    pub fn set_real(&mut self, key: &str, value: Option<f64>) {
        if let Some(x) = value {
            self.map.insert(key.to_string(), real_value(x));
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("setting `{key}`: {e}"))),
        }
    }

    pub fn req<T: DeserializeOwned>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn get_or<T: Serialize + DeserializeOwned>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.set(key, &Some(&default));
                Ok(default)
            }
        }
    }

    /// A real given as a number or as a string such as `"inf"`.
    pub fn get_real(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("setting `{key}`: cannot parse {s:?} as a number"))),
            Some(other) => Err(CliError::Usage(format!("setting `{key}`: expected a number, got {other}"))),
        }
    }

    pub fn req_real(&self, key: &str) -> Result<f64, CliError> {
        self.get_real(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn real_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get_real(key)? {
            Some(v) => Ok(v),
            None => Ok(self.record_real(key, default)),
        }
    }

    pub fn record_real(&mut self, key: &str, value: f64) -> f64 {
        self.map.insert(key.to_string(), real_value(value));
        value
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.map)
    }
}
