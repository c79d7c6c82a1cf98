//! OCR-service metrics through a pluggable client.
//!
//! The real client speaks a minimal HTTP protocol: POST with a JSON body of
//! `{image: <base64 PNG>, prompt: "OCR the plain text"}`, expecting
//! `{text: <transcript>}` back. Transient failures (network errors, 5xx)
//! are retried at most twice with backoff; any final failure surfaces as
//! [`MetricError::OcrUnavailable`] so a report can record the cause instead
//! of a fabricated number.

use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use mapping_core::DocumentImage;
use serde::Deserialize;

use crate::text::{char_error_rate, edit_distance};
use crate::{MetricError, Result};

/// The fixed transcription instruction sent with every request.
pub const OCR_PROMPT: &str = "OCR the plain text";

/// A transcription service.
pub trait OcrClient: Send + Sync {
    fn transcribe(&self, image: &DocumentImage) -> Result<String>;
    /// Stable identifier recorded in reports.
    fn id(&self) -> &'static str;
}

/// OCR-based edit distance and character error rate between a dewarped
/// image and its flat reference. The dewarped image is transcribed first;
/// the flat transcript is the reference.
pub fn mllm_ocr_metrics(
    dewarped: &DocumentImage,
    flat: &DocumentImage,
    client: &dyn OcrClient,
) -> Result<(usize, f64)> {
    let hyp = client.transcribe(dewarped)?;
    let reference = client.transcribe(flat)?;
    let ed = edit_distance(&hyp, &reference);
    let cer = char_error_rate(&hyp, &reference)?;
    Ok((ed, cer))
}

/// HTTP client for a hosted OCR endpoint. The bearer credential is read
/// from the `OCR_API_KEY` environment variable when present.
pub struct HttpOcrClient {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    max_retries: usize,
    backoff: Duration,
}

impl HttpOcrClient {
    pub fn new(endpoint: impl Into<String>) -> Result<Self> {
        Self::with_timeout(endpoint, Duration::from_secs(20))
    }

    pub fn with_timeout(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| MetricError::OcrUnavailable(format!("client construction: {e}")))?;
        Ok(HttpOcrClient {
            endpoint: endpoint.into(),
            api_key: std::env::var("OCR_API_KEY").ok(),
            client,
            max_retries: 2,
            backoff: Duration::from_millis(250),
        })
    }
}

#[derive(Deserialize)]
struct OcrResponse {
    text: String,
}

impl OcrClient for HttpOcrClient {
    fn transcribe(&self, image: &DocumentImage) -> Result<String> {
        let png = encode_png(image)?;
        let body = serde_json::json!({
            "image": base64::engine::general_purpose::STANDARD.encode(&png),
            "prompt": OCR_PROMPT,
        });
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1)));
            }
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return match resp.json::<OcrResponse>() {
                            Ok(r) => Ok(r.text),
                            Err(e) => Err(MetricError::OcrUnavailable(format!(
                                "POST {}: malformed response: {e}",
                                self.endpoint
                            ))),
                        };
                    }
                    last_err = format!("HTTP {status}");
                    // Client errors are permanent; do not burn retries.
                    if status.is_client_error() {
                        break;
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(MetricError::OcrUnavailable(format!(
            "POST {}: {last_err}",
            self.endpoint
        )))
    }

    fn id(&self) -> &'static str {
        "http-ocr-v1"
    }
}

/// Scripted client for tests and offline runs: returns queued transcripts
/// (or errors) in order.
pub struct MockOcrClient {
    responses: Mutex<std::collections::VecDeque<std::result::Result<String, String>>>,
}

impl MockOcrClient {
    pub fn new<S: Into<String>>(transcripts: Vec<S>) -> Self {
        MockOcrClient {
            responses: Mutex::new(transcripts.into_iter().map(|s| Ok(s.into())).collect()),
        }
    }

    pub fn with_outcomes(outcomes: Vec<std::result::Result<String, String>>) -> Self {
        MockOcrClient { responses: Mutex::new(outcomes.into()) }
    }
}

impl OcrClient for MockOcrClient {
    fn transcribe(&self, _image: &DocumentImage) -> Result<String> {
        match self.responses.lock().unwrap().pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(cause)) => Err(MetricError::OcrUnavailable(cause)),
            None => Err(MetricError::OcrUnavailable("mock transcript queue empty".into())),
        }
    }

    fn id(&self) -> &'static str {
        "mock-ocr"
    }
}

fn encode_png(image: &DocumentImage) -> Result<Vec<u8>> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let px = image.pixels();
    let mut buf = Vec::with_capacity(h * w * c);
    for u in 0..h {
        for v in 0..w {
            for ch in 0..c {
                buf.push(quant(px[[u, v, ch]]));
            }
        }
    }
    let color = if c == 3 { image::ExtendedColorType::Rgb8 } else { image::ExtendedColorType::L8 };
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        &buf,
        w as u32,
        h as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| MetricError::InvalidArgument(format!("png encoding: {e}")))?;
    Ok(out.into_inner())
}
