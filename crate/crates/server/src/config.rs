//! Service configuration: command-line flags over environment over an
//! optional TOML file over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use streetpersona_core::geo::{DEFAULT_OVERPASS_URL, DEFAULT_STREET_VIEW_URL};
use streetpersona_core::runtime::{DEFAULT_CHAT_MODEL, DEFAULT_ENDPOINT, DEFAULT_IMAGE_MODEL, DEFAULT_PARALLELISM};
use thiserror::Error;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "./data";
pub const DEFAULT_THRESHOLD: f64 = 3.0;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_DESIGN_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_CORS_ORIGIN: &str = "http://localhost:5173";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoMode {
    /// Offline fixture context and synthetic imagery.
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveSettings {
    pub api_key: String,
    pub endpoint: String,
    pub chat_model: String,
    pub image_model: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub backend: BackendKind,
    pub listen_addr: String,
    pub parallelism_cap: usize,
    pub conflict_threshold: f64,
    pub max_attempts: u32,
    pub design_timeout: Duration,
    pub geo: GeoMode,
    pub cors_origin: String,
    pub overpass_url: String,
    pub street_view_url: String,
    pub sv_key: Option<String>,
    /// Present iff `backend` is live.
    pub live: Option<LiveSettings>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: DEFAULT_DATA_DIR.into(),
            backend: BackendKind::Mock,
            listen_addr: DEFAULT_LISTEN.into(),
            parallelism_cap: DEFAULT_PARALLELISM,
            conflict_threshold: DEFAULT_THRESHOLD,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            design_timeout: DEFAULT_DESIGN_TIMEOUT,
            geo: GeoMode::Fixture,
            cors_origin: DEFAULT_CORS_ORIGIN.into(),
            overpass_url: DEFAULT_OVERPASS_URL.into(),
            street_view_url: DEFAULT_STREET_VIEW_URL.into(),
            sv_key: None,
            live: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing key {key}: {reason}")]
    MissingKey { key: &'static str, reason: &'static str },
    #[error("invalid {key} from {origin}: {message}")]
    Invalid {
        key: String,
        origin: &'static str,
        message: String,
    },
    #[error("cannot parse config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub config_file: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub backend: Option<String>,
    pub listen: Option<String>,
    pub parallelism: Option<usize>,
    pub conflict_threshold: Option<f64>,
    pub max_attempts: Option<u32>,
}

/// (file key, environment variable)
const KEYS: &[(&str, Option<&str>)] = &[
    ("data_dir", Some("STREETPERSONA_DATA_DIR")),
    ("backend", Some("STREETPERSONA_BACKEND")),
    ("listen", Some("STREETPERSONA_LISTEN")),
    ("parallelism", None),
    ("conflict_threshold", None),
    ("max_attempts", None),
    ("design_timeout_secs", None),
    ("geo", Some("STREETPERSONA_GEO")),
    ("cors_origin", Some("STREETPERSONA_CORS_ORIGIN")),
    ("overpass_url", Some("STREETPERSONA_OVERPASS_URL")),
    ("street_view_url", None),
    ("sv_key", Some("STREETPERSONA_SV_KEY")),
    ("api_key", Some("STREETPERSONA_API_KEY")),
    ("endpoint", Some("STREETPERSONA_ENDPOINT")),
    ("chat_model", Some("STREETPERSONA_CHAT_MODEL")),
    ("image_model", Some("STREETPERSONA_IMAGE_MODEL")),
];

pub const CONFIG_FILE_ENV: &str = "STREETPERSONA_CONFIG";

/// Raw values per key with the source that won.
struct Layered {
    values: BTreeMap<&'static str, (String, &'static str)>,
}

impl Layered {
    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((raw, origin)) => raw.trim().parse().map(Some).map_err(|e: T::Err| ConfigError::Invalid {
                key: key.into(),
                origin,
                message: format!("{raw:?}: {e}"),
            }),
        }
    }

    fn string(&self, key: &'static str) -> Option<String> {
        self.values
            .get(key)
            .map(|(v, _)| v.trim().to_string())
            .filter(|v| !v.is_empty())
    }

    fn invalid(&self, key: &'static str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            key: key.into(),
            origin: self.values.get(key).map(|(_, o)| *o).unwrap_or("default"),
            message: message.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<(&'static str, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (key, value) in table {
        let Some((known, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(ConfigError::Invalid {
                key,
                origin: "config file",
                message: "unknown key".into(),
            });
        };
        let raw = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => {
                return Err(ConfigError::Invalid {
                    key,
                    origin: "config file",
                    message: format!("expected a scalar, found {}", other.type_str()),
                })
            }
        };
        out.push((*known, raw));
    }
    Ok(out)
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "live" => Ok(BackendKind::Live),
            _ => Err("expected mock or live".into()),
        }
    }
}

impl FromStr for GeoMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixture" => Ok(GeoMode::Fixture),
            "live" => Ok(GeoMode::Live),
            _ => Err("expected fixture or live".into()),
        }
    }
}

fn check_listen(addr: &str) -> Result<(), String> {
    let (host, port) = addr.rsplit_once(':').ok_or("expected host:port")?;
    if host.is_empty() {
        return Err("host is empty".into());
    }
    port.parse::<u16>().map_err(|e| format!("port: {e}"))?;
    Ok(())
}

/// Resolve the configuration. `env` looks up environment variables.
pub fn load_config(
    flags: &ConfigOverrides,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<ServiceConfig, ConfigError> {
    let mut values = BTreeMap::new();
    let file = flags
        .config_file
        .clone()
        .or_else(|| env(CONFIG_FILE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    if let Some(path) = &file {
        for (key, raw) in read_file(path)? {
            values.insert(key, (raw, "config file"));
        }
    }
    for (key, var) in KEYS {
        if let Some(value) = var.and_then(env) {
            values.insert(*key, (value, "environment"));
        }
    }
    let flag_values: [(&'static str, Option<String>); 6] = [
        ("data_dir", flags.data_dir.as_ref().map(|p| p.display().to_string())),
        ("backend", flags.backend.clone()),
        ("listen", flags.listen.clone()),
        ("parallelism", flags.parallelism.map(|v| v.to_string())),
        ("conflict_threshold", flags.conflict_threshold.map(|v| v.to_string())),
        ("max_attempts", flags.max_attempts.map(|v| v.to_string())),
    ];
    for (key, value) in flag_values {
        if let Some(value) = value {
            values.insert(key, (value, "command line"));
        }
    }
    let layers = Layered { values };

    let defaults = ServiceConfig::default();
    let backend = layers.get::<BackendKind>("backend")?.unwrap_or(defaults.backend);
    let parallelism_cap = layers.get::<usize>("parallelism")?.unwrap_or(defaults.parallelism_cap);
    if parallelism_cap == 0 {
        return Err(layers.invalid("parallelism", "must be at least 1"));
    }
    let conflict_threshold = layers
        .get::<f64>("conflict_threshold")?
        .unwrap_or(defaults.conflict_threshold);
    if !(conflict_threshold.is_finite() && conflict_threshold > 0.0) {
        return Err(layers.invalid("conflict_threshold", "must be a positive number"));
    }
    let max_attempts = layers.get::<u32>("max_attempts")?.unwrap_or(defaults.max_attempts);
    if max_attempts == 0 {
        return Err(layers.invalid("max_attempts", "must be at least 1"));
    }
    let design_timeout = match layers.get::<f64>("design_timeout_secs")? {
        None => defaults.design_timeout,
        Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
        Some(_) => return Err(layers.invalid("design_timeout_secs", "must be a positive number")),
    };
    let listen_addr = layers.string("listen").unwrap_or(defaults.listen_addr);
    check_listen(&listen_addr).map_err(|e| layers.invalid("listen", e))?;
    let geo = layers.get::<GeoMode>("geo")?.unwrap_or(match backend {
        BackendKind::Mock => GeoMode::Fixture,
        BackendKind::Live => GeoMode::Live,
    });
    let live = match backend {
        BackendKind::Mock => None,
        BackendKind::Live => Some(LiveSettings {
            api_key: layers.string("api_key").ok_or(ConfigError::MissingKey {
                key: "STREETPERSONA_API_KEY",
                reason: "the live backend needs a model API key",
            })?,
            endpoint: layers.string("endpoint").unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
            chat_model: layers.string("chat_model").unwrap_or_else(|| DEFAULT_CHAT_MODEL.into()),
            image_model: layers.string("image_model").unwrap_or_else(|| DEFAULT_IMAGE_MODEL.into()),
        }),
    };
    let sv_key = layers.string("sv_key");
    if geo == GeoMode::Live && sv_key.is_none() {
        return Err(ConfigError::MissingKey {
            key: "STREETPERSONA_SV_KEY",
            reason: "street-level imagery needs a key when geo is live",
        });
    }
    Ok(ServiceConfig {
        data_dir: layers.string("data_dir").map(PathBuf::from).unwrap_or(defaults.data_dir),
        backend,
        listen_addr,
        parallelism_cap,
        conflict_threshold,
        max_attempts,
        design_timeout,
        geo,
        cors_origin: layers.string("cors_origin").unwrap_or(defaults.cors_origin),
        overpass_url: layers.string("overpass_url").unwrap_or(defaults.overpass_url),
        street_view_url: layers.string("street_view_url").unwrap_or(defaults.street_view_url),
        sv_key,
        live,
    })
}

/// Environment lookup against the real process environment.
pub fn process_env(key: &str) -> Option<String> {
    std::env::var(key).ok()
}
