//! Thin HTTP clients for two live intelligence services. Both normalize the
//! service's JSON into [`IntelRecord`]s and map HTTP failures onto
//! [`ProviderError`]. Neither is used unless explicitly configured.

use std::net::IpAddr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::Value;

use super::{Category, IntelProvider, IntelRecord, ProviderError};

const USER_AGENT: &str = concat!("observatory/", env!("CARGO_PKG_VERSION"));

fn client(timeout: Duration) -> Client {
    Client::builder()
        .timeout(timeout)
        .user_agent(USER_AGENT)
        .build()
        .expect("static client configuration")
}

fn retry_after(resp: &Response) -> Option<Duration> {
    resp.headers()
        .get(reqwest::header::RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<u64>()
        .ok()
        .map(Duration::from_secs)
}

/// `Ok(None)` for 404, the parsed body for 2xx, an error otherwise.
fn read_json(result: reqwest::Result<Response>) -> Result<Option<Value>, ProviderError> {
    let resp = result.map_err(|e| ProviderError::Network(e.to_string()))?;
    match resp.status() {
        s if s.is_success() => resp
            .json::<Value>()
            .map(Some)
            .map_err(|e| ProviderError::MalformedResponse(e.to_string())),
        StatusCode::NOT_FOUND => Ok(None),
        StatusCode::TOO_MANY_REQUESTS => Err(ProviderError::RateLimited {
            retry_after: retry_after(&resp),
        }),
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => Err(ProviderError::Auth(format!("HTTP {}", resp.status()))),
        s => Err(ProviderError::Network(format!("HTTP {s}"))),
    }
}

fn epoch(secs: Option<i64>) -> DateTime<Utc> {
    secs.and_then(|s| DateTime::from_timestamp(s, 0)).unwrap_or_else(Utc::now)
}

/// IP reports from a VirusTotal-style v3 API. An IP with at least one
/// malicious or suspicious engine verdict yields one record.
pub struct VirusTotalClient {
    base_url: String,
    api_key: String,
    http: Client,
}

impl VirusTotalClient {
    pub const DEFAULT_BASE_URL: &'static str = "https://www.virustotal.com";

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        VirusTotalClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            http: client(Duration::from_secs(30)),
        }
    }

    pub fn normalize(body: &Value) -> Result<Vec<IntelRecord>, ProviderError> {
        let attrs = body
            .pointer("/data/attributes")
            .ok_or_else(|| ProviderError::MalformedResponse("missing data.attributes".into()))?;
        let stats = &attrs["last_analysis_stats"];
        let flagged = stats["malicious"].as_u64().unwrap_or(0) + stats["suspicious"].as_u64().unwrap_or(0);
        if flagged == 0 {
            return Ok(Vec::new());
        }
        let mut r = IntelRecord::new("virustotal", Category::Malware);
        r.jarm = attrs["jarm"].as_str().and_then(|j| j.parse().ok());
        r.country = attrs["country"].as_str().map(str::to_string);
        r.observed_at = epoch(attrs["last_analysis_date"].as_i64());
        Ok(vec![r])
    }
}

impl IntelProvider for VirusTotalClient {
    fn name(&self) -> &str {
        "virustotal"
    }

    fn query(&self, ip: IpAddr) -> Result<Vec<IntelRecord>, ProviderError> {
        let url = format!("{}/api/v3/ip_addresses/{ip}", self.base_url);
        match read_json(self.http.get(url).header("x-apikey", &self.api_key).send())? {
            Some(body) => Self::normalize(&body),
            None => Ok(Vec::new()),
        }
    }
}

/// Listings from a Spamhaus-style intel API. Every listing result becomes a
/// record: sinkhole hits when a contacted domain is reported, botnet
/// otherwise, with the bot name as campaign.
pub struct SpamhausClient {
    base_url: String,
    api_key: String,
    http: Client,
}

impl SpamhausClient {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.spamhaus.org";

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        SpamhausClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            http: client(Duration::from_secs(30)),
        }
    }

    pub fn normalize(body: &Value) -> Result<Vec<IntelRecord>, ProviderError> {
        let results = body["results"]
            .as_array()
            .ok_or_else(|| ProviderError::MalformedResponse("missing results array".into()))?;
        Ok(results
            .iter()
            .map(|item| {
                let domain = item["domain"].as_str().filter(|d| !d.is_empty());
                let category = if domain.is_some() {
                    Category::SinkholeHit
                } else {
                    Category::Botnet
                };
                let mut r = IntelRecord::new("spamhaus", category);
                r.campaign = item["botname"].as_str().filter(|b| !b.is_empty()).map(str::to_string);
                r.sinkholed_url = domain.map(str::to_string);
                r.country = item["cc"].as_str().map(str::to_string);
                r.observed_at = epoch(item["seen"].as_i64());
                r
            })
            .collect())
    }
}

impl IntelProvider for SpamhausClient {
    fn name(&self) -> &str {
        "spamhaus"
    }

    fn query(&self, ip: IpAddr) -> Result<Vec<IntelRecord>, ProviderError> {
        let url = format!("{}/api/intel/v1/byobject/cidr/XBL/listed/live/{ip}", self.base_url);
        match read_json(self.http.get(url).bearer_auth(&self.api_key).send())? {
            Some(body) => Self::normalize(&body),
            None => Ok(Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Answers one request with a canned response and returns the base URL.
    fn stub(status: &str, headers: &str, body: &str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let response = format!(
            "HTTP/1.1 {status}\r\ncontent-length: {}\r\ncontent-type: application/json\r\nconnection: close\r\n{headers}\r\n{body}",
            body.len()
        );
        let handle = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                request.push_str(&line);
            }
            stream.write_all(response.as_bytes()).unwrap();
            request
        });
        (base, handle)
    }

    const IP: &str = "203.0.113.9";

    #[test]
    fn rate_limit_surfaces_retry_hint() {
        let (base, h) = stub("429 Too Many Requests", "retry-after: 7\r\n", "{}");
        let err = VirusTotalClient::new(base, "k").query(IP.parse().unwrap()).unwrap_err();
        assert_eq!(
            err,
            ProviderError::RateLimited {
                retry_after: Some(Duration::from_secs(7))
            }
        );
        let request = h.join().unwrap();
        assert!(request.starts_with(&format!("GET /api/v3/ip_addresses/{IP} ")));
        assert!(request.to_ascii_lowercase().contains("x-apikey: k"));
    }

    #[test]
    fn auth_and_not_found() {
        let (base, h) = stub("401 Unauthorized", "", "{}");
        assert!(matches!(
            SpamhausClient::new(base, "k").query(IP.parse().unwrap()),
            Err(ProviderError::Auth(_))
        ));
        h.join().unwrap();
        let (base, h) = stub("404 Not Found", "", "");
        assert_eq!(SpamhausClient::new(base, "k").query(IP.parse().unwrap()), Ok(vec![]));
        h.join().unwrap();
    }

    #[test]
    fn malformed_body() {
        let (base, h) = stub("200 OK", "", "not json");
        assert!(matches!(
            VirusTotalClient::new(base, "k").query(IP.parse().unwrap()),
            Err(ProviderError::MalformedResponse(_))
        ));
        h.join().unwrap();
    }

    #[test]
    fn virustotal_normalization() {
        let body = r#"{"data":{"attributes":{"last_analysis_stats":{"malicious":3,"suspicious":0},
            "jarm":"2ad2ad0002ad2ad00042d42d0000008aec5bb03750a1d7eddfa29fb2d1deea","country":"DE",
            "last_analysis_date":1620000000}}}"#;
        let (base, h) = stub("200 OK", "", body);
        let recs = VirusTotalClient::new(base, "k").query(IP.parse().unwrap()).unwrap();
        h.join().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].country.as_deref(), Some("DE"));
        assert!(recs[0].jarm.is_some());

        let clean: Value = serde_json::from_str(r#"{"data":{"attributes":{"last_analysis_stats":{"malicious":0}}}}"#).unwrap();
        assert!(VirusTotalClient::normalize(&clean).unwrap().is_empty());
    }

    #[test]
    fn spamhaus_normalization() {
        let body: Value = serde_json::from_str(
            r#"{"results":[{"botname":"tinba","domain":"differentia.ru","cc":"US","seen":1620000000},
                           {"botname":"mirai","cc":"BR"}]}"#,
        )
        .unwrap();
        let recs = SpamhausClient::normalize(&body).unwrap();
        assert_eq!(recs[0].category, Category::SinkholeHit);
        assert_eq!(recs[0].sinkholed_url.as_deref(), Some("differentia.ru"));
        assert_eq!(recs[1].category, Category::Botnet);
        assert_eq!(recs[1].campaign.as_deref(), Some("mirai"));
    }
}
