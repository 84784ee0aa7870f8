use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{
    build_overpass_query, parse_street_context, Coordinates, GeoError, Road, StreetContext,
};
use crate::fsutil::write_atomic;
use crate::images::{synthetic_png, ImageRef, ImageSource, ImageStore};
use crate::sha256_hex;

pub const DEFAULT_OVERPASS_URL: &str = "https://overpass-api.de/api/interpreter";
pub const DEFAULT_STREET_VIEW_URL: &str = "https://maps.googleapis.com/maps/api/streetview";

/// Raw remote responses on disk, keyed by a hash of the request.
///
/// Layout: `<data_dir>/cache/<sha256>.{json,jpg}`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: data_dir.into().join("cache"),
        }
    }

    pub fn path(&self, request_key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", sha256_hex(request_key)))
    }

    pub fn get(&self, request_key: &str, ext: &str) -> Option<Vec<u8>> {
        std::fs::read(self.path(request_key, ext)).ok()
    }

    pub fn put(&self, request_key: &str, ext: &str, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(&self.path(request_key, ext), bytes)
    }
}

fn transport(err: reqwest::Error) -> GeoError {
    GeoError::Transport {
        status: err.status().map(|s| s.as_u16()),
        message: err.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct OverpassClient {
    http: reqwest::Client,
    url: String,
    cache: ResponseCache,
}

impl OverpassClient {
    pub fn new(url: impl Into<String>, cache: ResponseCache) -> Self {
        Self {
            http: reqwest::Client::new(),
            url: url.into(),
            cache,
        }
    }

    pub async fn fetch_document(&self, coords: Coordinates, radius_m: f64) -> Result<String, GeoError> {
        let query = build_overpass_query(coords, radius_m)?;
        let key = format!("overpass\n{}\n{}", self.url, query);
        if let Some(hit) = self.cache.get(&key, "json") {
            return String::from_utf8(hit).map_err(|e| GeoError::Parse {
                offset: e.utf8_error().valid_up_to(),
                message: "cached response is not UTF-8".into(),
            });
        }
        let response = self
            .http
            .post(&self.url)
            .form(&[("data", query.as_str())])
            .send()
            .await
            .map_err(transport)?;
        let status = response.status();
        if !status.is_success() {
            return Err(GeoError::Transport {
                status: Some(status.as_u16()),
                message: format!("overpass returned {status}"),
            });
        }
        let body = response.text().await.map_err(transport)?;
        // only cache documents that parse
        super::parse_elements(&body)?;
        self.cache.put(&key, "json", body.as_bytes())?;
        Ok(body)
    }

    pub async fn fetch_context(&self, coords: Coordinates, radius_m: f64) -> Result<StreetContext, GeoError> {
        let doc = self.fetch_document(coords, radius_m).await?;
        parse_street_context(&doc, coords, radius_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub heading: f64,
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for ViewParams {
    fn default() -> Self {
        Self {
            heading: 0.0,
            fov: 90.0,
            width: 640,
            height: 640,
        }
    }
}

impl ViewParams {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !self.heading.is_finite() {
            return Err(GeoError::Validation("heading must be finite".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 120.0) {
            return Err(GeoError::Validation(format!(
                "fov {} out of range (0, 120]",
                self.fov
            )));
        }
        if self.width == 0 || self.height == 0 || self.width > 640 || self.height > 640 {
            return Err(GeoError::Validation(format!(
                "size {}x{} exceeds provider limit 640x640",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Static street-level imagery client with on-disk caching.
#[derive(Debug, Clone)]
pub struct StreetViewClient {
    http: reqwest::Client,
    url: String,
    key: Option<String>,
    cache: ResponseCache,
    images: ImageStore,
    no_imagery_hashes: HashSet<String>,
}

impl StreetViewClient {
    pub fn new(url: impl Into<String>, key: Option<String>, cache: ResponseCache, images: ImageStore) -> Self {
        Self {
            http: reqwest::Client::new(),
            url: url.into(),
            key,
            cache,
            images,
            no_imagery_hashes: HashSet::new(),
        }
    }

    /// Content hashes of the provider's "no imagery here" placeholder image.
    pub fn with_no_imagery_hashes<I: IntoIterator<Item = String>>(mut self, hashes: I) -> Self {
        self.no_imagery_hashes.extend(hashes);
        self
    }

    fn query_params(&self, coords: Coordinates, view: &ViewParams) -> Vec<(&'static str, String)> {
        vec![
            ("size", format!("{}x{}", view.width, view.height)),
            ("location", format!("{},{}", coords.lat, coords.lon)),
            ("heading", view.heading.to_string()),
            ("fov", view.fov.to_string()),
            ("return_error_code", "true".into()),
        ]
    }

    pub async fn fetch_street_image(&self, coords: Coordinates, view: ViewParams) -> Result<ImageRef, GeoError> {
        let coords = Coordinates::new(coords.lat, coords.lon)?;
        view.validate()?;
        let params = self.query_params(coords, &view);
        // the API key is deliberately not part of the cache key
        let key = format!("streetview\n{}\n{:?}", self.url, params);
        let bytes = match self.cache.get(&key, "jpg") {
            Some(hit) => hit,
            None => {
                let mut request = self.http.get(&self.url).query(&params);
                if let Some(k) = &self.key {
                    request = request.query(&[("key", k)]);
                }
                let response = request.send().await.map_err(transport)?;
                let status = response.status();
                if status == StatusCode::NOT_FOUND {
                    return Err(GeoError::NotFound(format!(
                        "no street-level imagery at {},{}",
                        coords.lat, coords.lon
                    )));
                }
                if !status.is_success() {
                    return Err(GeoError::Transport {
                        status: Some(status.as_u16()),
                        message: format!("street view returned {status}"),
                    });
                }
                let bytes = response.bytes().await.map_err(transport)?.to_vec();
                if self.no_imagery_hashes.contains(&sha256_hex(&bytes)) {
                    return Err(GeoError::NotFound(format!(
                        "provider placeholder image at {},{}",
                        coords.lat, coords.lon
                    )));
                }
                self.cache.put(&key, "jpg", &bytes)?;
                bytes
            }
        };
        if self.no_imagery_hashes.contains(&sha256_hex(&bytes)) {
            return Err(GeoError::NotFound("cached placeholder image".into()));
        }
        Ok(self.images.put(&bytes, ImageSource::StreetView)?)
    }
}

/// Source of street context and base imagery for a location.
#[async_trait]
pub trait GeoProvider: Send + Sync {
    async fn street_context(&self, coords: Coordinates, radius_m: f64) -> Result<StreetContext, GeoError>;
    async fn street_image(&self, coords: Coordinates, view: ViewParams) -> Result<ImageRef, GeoError>;
}

pub struct LiveGeo {
    pub overpass: OverpassClient,
    pub street_view: StreetViewClient,
}

#[async_trait]
impl GeoProvider for LiveGeo {
    async fn street_context(&self, coords: Coordinates, radius_m: f64) -> Result<StreetContext, GeoError> {
        self.overpass.fetch_context(coords, radius_m).await
    }

    async fn street_image(&self, coords: Coordinates, view: ViewParams) -> Result<ImageRef, GeoError> {
        self.street_view.fetch_street_image(coords, view).await
    }
}

/// Offline provider: a fixed arterial without bike facilities and a
/// synthetic image seeded by the coordinates.
#[derive(Debug, Clone)]
pub struct FixtureGeo {
    images: ImageStore,
}

impl FixtureGeo {
    pub fn new(images: ImageStore) -> Self {
        Self { images }
    }

    pub fn context(coords: Coordinates, radius_m: f64) -> StreetContext {
        StreetContext {
            coords,
            roads: vec![
                Road {
                    name: "Baltimore Avenue".into(),
                    road_type: "primary".into(),
                },
                Road {
                    name: "College Avenue".into(),
                    road_type: "residential".into(),
                },
            ],
            buildings: 3,
            traffic_signals: 1,
            has_bike_infrastructure: false,
            radius_m,
        }
    }
}

#[async_trait]
impl GeoProvider for FixtureGeo {
    async fn street_context(&self, coords: Coordinates, radius_m: f64) -> Result<StreetContext, GeoError> {
        let coords = Coordinates::new(coords.lat, coords.lon)?;
        build_overpass_query(coords, radius_m)?;
        Ok(Self::context(coords, radius_m))
    }

    async fn street_image(&self, coords: Coordinates, view: ViewParams) -> Result<ImageRef, GeoError> {
        let coords = Coordinates::new(coords.lat, coords.lon)?;
        view.validate()?;
        let seed = format!("{},{},{},{}", coords.lat, coords.lon, view.heading, view.fov);
        let bytes = synthetic_png(seed.as_bytes(), 64, 64);
        Ok(self.images.put(&bytes, ImageSource::Fixture)?)
    }
}

/// Shared handle type used by the service layer.
pub type SharedGeo = Arc<dyn GeoProvider>;
