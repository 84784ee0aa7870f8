//! Backend speaking the OpenAI-compatible chat-completions and image-edit APIs.

use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::multipart::{Form, Part};
use serde_json::{json, Value};

use super::backend::{
    AgentBackend, BackendError, BackendMetadata, BackendOutput, BackendRequest, RequestKind,
};
use crate::images::{ImageRef, ImageStore};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4.1";
pub const DEFAULT_IMAGE_MODEL: &str = "gpt-image-1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key: String,
    pub chat_model: String,
    pub image_model: String,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn new(api_key: impl Into<String>) -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key: api_key.into(),
            chat_model: DEFAULT_CHAT_MODEL.into(),
            image_model: DEFAULT_IMAGE_MODEL.into(),
            timeout: Duration::from_secs(90),
        }
    }
}

pub struct LiveBackend {
    http: reqwest::Client,
    config: LiveConfig,
    images: ImageStore,
}

fn transport(err: reqwest::Error) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout(err.to_string())
    } else {
        BackendError::Transport {
            status: err.status().map(|s| s.as_u16()),
            message: err.to_string(),
        }
    }
}

fn mime_of(image: &ImageRef) -> &'static str {
    if image.uri.ends_with(".png") {
        "image/png"
    } else {
        "image/jpeg"
    }
}

impl LiveBackend {
    pub fn new(config: LiveConfig, images: ImageStore) -> Result<Self, BackendError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(transport)?;
        Ok(Self { http, config, images })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn image_bytes(&self, image: &ImageRef) -> Result<Vec<u8>, BackendError> {
        self.images
            .read(image)
            .map_err(|e| BackendError::Unsupported(e.to_string()))
    }

    async fn send(&self, builder: reqwest::RequestBuilder) -> Result<Value, BackendError> {
        let response = builder
            .bearer_auth(&self.config.api_key)
            .send()
            .await
            .map_err(transport)?;
        let status = response.status();
        let body = response.text().await.map_err(transport)?;
        if !status.is_success() {
            let mut message = body;
            message.truncate(500);
            return Err(BackendError::Transport {
                status: Some(status.as_u16()),
                message,
            });
        }
        serde_json::from_str(&body).map_err(|e| BackendError::Transport {
            status: Some(status.as_u16()),
            message: format!("response envelope is not JSON: {e}"),
        })
    }

    async fn chat(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        let mut content = vec![json!({ "type": "text", "text": request.prompt })];
        for image in &request.images {
            let data = B64.encode(self.image_bytes(image)?);
            content.push(json!({
                "type": "image_url",
                "image_url": { "url": format!("data:{};base64,{data}", mime_of(image)) },
            }));
        }
        let mut body = json!({
            "model": self.config.chat_model,
            "messages": [{ "role": "user", "content": content }],
        });
        if request.expects.is_json() {
            body["response_format"] = json!({ "type": "json_object" });
        }
        let reply = self
            .send(self.http.post(self.url("chat/completions")).json(&body))
            .await?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| BackendOutput::Text(s.to_string()))
            .ok_or_else(|| BackendError::Transport {
                status: None,
                message: "response has no choices[0].message.content".into(),
            })
    }

    async fn edit_image(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        let base = &request.images[0];
        let ext = if mime_of(base) == "image/png" { "png" } else { "jpg" };
        let part = Part::bytes(self.image_bytes(base)?)
            .file_name(format!("base.{ext}"))
            .mime_str(mime_of(base))
            .map_err(transport)?;
        let form = Form::new()
            .text("model", self.config.image_model.clone())
            .text("prompt", request.prompt.clone())
            .text("n", "1")
            .part("image", part);
        let reply = self
            .send(self.http.post(self.url("images/edits")).multipart(form))
            .await?;
        let encoded = reply["data"][0]["b64_json"]
            .as_str()
            .ok_or_else(|| BackendError::Transport {
                status: None,
                message: "response has no data[0].b64_json".into(),
            })?;
        B64.decode(encoded)
            .map(BackendOutput::Image)
            .map_err(|e| BackendError::Transport {
                status: None,
                message: format!("image payload is not base64: {e}"),
            })
    }
}

#[async_trait]
impl AgentBackend for LiveBackend {
    fn metadata(&self) -> BackendMetadata {
        BackendMetadata {
            name: format!("live:{}", self.config.chat_model),
            deterministic: false,
        }
    }

    async fn complete(&self, request: &BackendRequest) -> Result<BackendOutput, BackendError> {
        match request.kind {
            RequestKind::RenderImage => self.edit_image(request).await,
            _ => self.chat(request).await,
        }
    }
}
