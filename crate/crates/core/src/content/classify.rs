//! Content-based MIME sniffing and the NSFW classifier hook.

use serde::de::IgnoredAny;
use thiserror::Error;

pub const UNKNOWN_MIME: &str = "unknown";
pub const DEFAULT_NSFW_THRESHOLD: f32 = 0.5;

const SNIFF_WINDOW: usize = 64 * 1024;

fn trim_start(bytes: &[u8]) -> &[u8] {
    let bytes = bytes.strip_prefix(b"\xef\xbb\xbf").unwrap_or(bytes);
    let skip = bytes.iter().take_while(|b| b.is_ascii_whitespace()).count();
    &bytes[skip..]
}

fn starts_with_ci(bytes: &[u8], prefix: &[u8]) -> bool {
    bytes.len() >= prefix.len() && bytes[..prefix.len()].eq_ignore_ascii_case(prefix)
}

fn is_text(bytes: &[u8]) -> bool {
    let window = &bytes[..bytes.len().min(SNIFF_WINDOW)];
    let text = match std::str::from_utf8(window) {
        Ok(t) => t,
        // The window may split a multi-byte character.
        Err(e) if e.error_len().is_none() && window.len() < bytes.len() => {
            std::str::from_utf8(&window[..e.valid_up_to()]).unwrap()
        }
        Err(_) => return false,
    };
    !text.is_empty() && text.chars().all(|c| !c.is_control() || matches!(c, '\n' | '\r' | '\t' | '\x0c'))
}

fn looks_like_javascript(text: &str) -> bool {
    const MARKERS: [&str; 9] = [
        "function ", "function(", "=>", "const ", "let ", "var ", "document.", "window.", "require(",
    ];
    let hits = MARKERS.iter().filter(|m| text.contains(*m)).count();
    hits >= 2 && (text.contains(';') || text.contains('{'))
}

/// Identifies a file from its leading bytes. Returns [`UNKNOWN_MIME`] when
/// no signature or structural probe matches.
pub fn sniff_mime(bytes: &[u8]) -> &'static str {
    const SIGNATURES: [(&[u8], &str); 9] = [
        (b"\x89PNG\r\n\x1a\n", "image/png"),
        (b"GIF87a", "image/gif"),
        (b"GIF89a", "image/gif"),
        (b"\xff\xd8\xff", "image/jpeg"),
        (b"%PDF-", "application/pdf"),
        (b"PK\x03\x04", "application/zip"),
        (b"PK\x05\x06", "application/zip"),
        (b"\x1f\x8b", "application/gzip"),
        (b"\x1a\x45\xdf\xa3", "video/webm"),
    ];
    for (sig, mime) in SIGNATURES {
        if bytes.starts_with(sig) {
            return mime;
        }
    }
    if bytes.len() >= 12 && &bytes[4..8] == b"ftyp" {
        return match &bytes[8..12] {
            b"qt  " => "video/quicktime",
            b"M4A " => "audio/mp4",
            _ => "video/mp4",
        };
    }
    if bytes.len() >= 12 && bytes.starts_with(b"RIFF") && &bytes[8..12] == b"WEBP" {
        return "image/webp";
    }
    if !is_text(bytes) {
        return UNKNOWN_MIME;
    }
    let head = trim_start(bytes);
    if starts_with_ci(head, b"<!doctype html") || starts_with_ci(head, b"<html") {
        return "text/html";
    }
    if matches!(head.first(), Some(b'{' | b'[')) && serde_json::from_slice::<IgnoredAny>(bytes).is_ok() {
        return "application/json";
    }
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(SNIFF_WINDOW)]);
    if looks_like_javascript(&text) {
        return "application/javascript";
    }
    "text/plain"
}

/// Fallback used when a name is known from a UnixFS directory entry and the
/// bytes alone were inconclusive.
pub fn mime_from_name(name: &str) -> Option<&'static str> {
    let ext = name.rsplit_once('.')?.1.to_ascii_lowercase();
    Some(match ext.as_str() {
        "png" => "image/png",
        "gif" => "image/gif",
        "jpg" | "jpeg" => "image/jpeg",
        "webp" => "image/webp",
        "mp4" | "m4v" => "video/mp4",
        "webm" => "video/webm",
        "pdf" => "application/pdf",
        "zip" => "application/zip",
        "gz" => "application/gzip",
        "html" | "htm" => "text/html",
        "json" => "application/json",
        "js" | "mjs" => "application/javascript",
        "txt" | "md" => "text/plain",
        _ => return None,
    })
}

pub fn is_image_mime(mime: &str) -> bool {
    mime.starts_with("image/")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NsfwError {
    #[error("no NSFW classifier configured")]
    NoClassifier,
    #[error("image could not be decoded: {0}")]
    UndecodableImage(String),
}

/// A pluggable image classifier returning a score in [0, 1].
pub trait NsfwClassifier: Send + Sync {
    fn score(&self, image: &image::DynamicImage) -> f32;
}

/// Always returns the same score; for tests and dry runs.
pub struct FixedScore(pub f32);

impl NsfwClassifier for FixedScore {
    fn score(&self, _: &image::DynamicImage) -> f32 {
        self.0
    }
}

/// Decodes `bytes` and passes the classifier's score through, clamped to
/// [0, 1].
pub fn nsfw_classify(bytes: &[u8], classifier: Option<&dyn NsfwClassifier>) -> Result<f32, NsfwError> {
    let classifier = classifier.ok_or(NsfwError::NoClassifier)?;
    let img = image::load_from_memory(bytes).map_err(|e| NsfwError::UndecodableImage(e.to_string()))?;
    Ok(classifier.score(&img).clamp(0.0, 1.0))
}

pub fn is_flagged(score: f32, threshold: f32) -> bool {
    score >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::io::Cursor;

    fn png() -> Vec<u8> {
        let img = image::RgbImage::from_pixel(2, 2, image::Rgb([200, 10, 10]));
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn signatures() {
        assert_eq!(sniff_mime(&[0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0]), "image/png");
        assert_eq!(sniff_mime(b"GIF89a...."), "image/gif");
        assert_eq!(sniff_mime(&[0xff, 0xd8, 0xff, 0xe0, 0, 0x10]), "image/jpeg");
        assert_eq!(sniff_mime(b"\0\0\0\x18ftypisom\0\0\0\0"), "video/mp4");
        assert_eq!(sniff_mime(b"%PDF-1.7\n"), "application/pdf");
        assert_eq!(sniff_mime(b"PK\x03\x04\x14\0"), "application/zip");
        assert_eq!(sniff_mime(&[0x1f, 0x8b, 8, 0]), "application/gzip");
    }

    #[test]
    fn text_formats() {
        assert_eq!(sniff_mime(b"  <!DOCTYPE html><html></html>"), "text/html");
        assert_eq!(sniff_mime(br#"{"name": "token #1", "n": [1, 2]}"#), "application/json");
        assert_eq!(sniff_mime(b"{not json"), "text/plain");
        assert_eq!(
            sniff_mime(b"const x = require('fs');\nfunction f(a) { return a; }\n"),
            "application/javascript"
        );
        assert_eq!(sniff_mime(b"just some words\n"), "text/plain");
        assert_eq!(sniff_mime(b""), UNKNOWN_MIME);
    }

    #[test]
    fn random_bytes_are_unknown() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut buf = vec![0u8; 4096];
            rng.fill(&mut buf[..]);
            buf[0] = 0x00;
            assert_eq!(sniff_mime(&buf), UNKNOWN_MIME);
        }
    }

    #[test]
    fn name_fallback() {
        assert_eq!(mime_from_name("cat.JPG"), Some("image/jpeg"));
        assert_eq!(mime_from_name("README"), None);
    }

    #[test]
    fn nsfw_hook() {
        let img = png();
        let hi = nsfw_classify(&img, Some(&FixedScore(0.9))).unwrap();
        assert!(is_flagged(hi, DEFAULT_NSFW_THRESHOLD));
        let lo = nsfw_classify(&img, Some(&FixedScore(0.1))).unwrap();
        assert!(!is_flagged(lo, DEFAULT_NSFW_THRESHOLD));
        assert_eq!(nsfw_classify(&img, None), Err(NsfwError::NoClassifier));
        assert!(matches!(
            nsfw_classify(b"plain text", Some(&FixedScore(0.9))),
            Err(NsfwError::UndecodableImage(_))
        ));
    }
}
