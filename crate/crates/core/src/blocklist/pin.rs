//! Optional upload of a published blob to a local IPFS daemon.

use std::time::Duration;

use reqwest::blocking::{multipart, Client};
use serde_json::Value;

use crate::content::Cid;

/// Environment variable holding the daemon's HTTP API base URL, e.g.
/// `http://127.0.0.1:5001`.
pub const IPFS_API_ENV: &str = "OBS_IPFS_API";

/// Adds and pins `blob` through the daemon's `/api/v0/add` endpoint with
/// the legacy defaults, and checks the daemon computed `expected`.
pub fn pin_blob(api_base: &str, blob: &[u8], expected: &Cid) -> Result<Cid, String> {
    let url = format!(
        "{}/api/v0/add?pin=true&cid-version=0&chunker=size-262144&raw-leaves=false",
        api_base.trim_end_matches('/')
    );
    let form = multipart::Form::new().part("file", multipart::Part::bytes(blob.to_vec()).file_name("blocklist.obsb"));
    let client = Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| e.to_string())?;
    let resp = client.post(url).multipart(form).send().map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(format!("IPFS API returned HTTP {}", resp.status()));
    }
    let body: Value = resp.json().map_err(|e| e.to_string())?;
    let hash = body["Hash"].as_str().ok_or("IPFS API reply lacks Hash")?;
    let cid: Cid = hash.parse().map_err(|e| format!("IPFS API returned {hash:?}: {e}"))?;
    if cid != *expected {
        return Err(format!("daemon computed {cid}, expected {expected}"));
    }
    Ok(cid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::cid_of_file;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    fn daemon(reply_hash: String) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let h = thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut r = BufReader::new(s.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                r.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let mut body = vec![0; len];
            r.read_exact(&mut body).unwrap();
            let json = format!(r#"{{"Name":"blocklist.obsb","Hash":"{reply_hash}","Size":"1"}}"#);
            write!(s, "HTTP/1.1 200 OK\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{json}", json.len()).unwrap();
            head
        });
        (base, h)
    }

    #[test]
    fn add_request_and_cid_check() {
        let blob = b"OBSB blob".to_vec();
        let cid = cid_of_file(&blob);
        let (base, h) = daemon(cid.to_string());
        assert_eq!(pin_blob(&base, &blob, &cid).unwrap(), cid);
        let head = h.join().unwrap();
        assert!(head.starts_with("POST /api/v0/add?pin=true"));

        let (base, h) = daemon(cid_of_file(b"other").to_string());
        assert!(pin_blob(&base, &blob, &cid).unwrap_err().contains("expected"));
        h.join().unwrap();
    }
}
