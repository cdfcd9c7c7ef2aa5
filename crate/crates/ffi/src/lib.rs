//! C ABI over the observatory primitives a node or sidecar embeds: blocklist
//! and Bloom-filter membership, connection gating, Kademlia keys and UnixFS
//! CIDs.
//!
//! Every fallible function returns an [`ObsStatus`]; on failure the message
//! is retrievable with [`obs_last_error`] on the same thread. Handles are
//! opaque, immutable after construction and safe to share across threads;
//! each must be released with its `_free` function exactly once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::IpAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use chrono::DateTime;
use observatory::blocklist::{Blocklist, BloomBlocklist, ConnectionGate, GateDecision, IpFilter, BLOOM_MAGIC, MAGIC};
use observatory::content::{cid_of_file, sniff_mime};
use observatory::kad::KeyTable;
use observatory::{common_prefix_len, kad_key, KadKey, Multiaddr};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    NotFound = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Sorted IP blocklist.
pub struct ObsBlocklist(Blocklist);

/// Bloom-filter blocklist.
pub struct ObsBloom(BloomBlocklist);

/// Connection gate over either blocklist format.
pub struct ObsGate(ConnectionGate);

/// Query-key table for exact common-prefix-length lookups.
pub struct ObsKeyTable(KeyTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("NULs replaced")));
}

fn fail(status: ObsStatus, msg: impl Into<String>) -> ObsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> ObsStatus) -> ObsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ObsStatus::Panic, "internal panic"))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], ObsStatus> {
    match (data.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(fail(ObsStatus::NullPointer, "data is null")),
        (false, _) => Ok(slice::from_raw_parts(data, len)),
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, ObsStatus> {
    if s.is_null() {
        return Err(fail(ObsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(ObsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn parse_ip(s: *const c_char) -> Result<IpAddr, ObsStatus> {
    let s = text(s, "ip")?;
    s.trim()
        .parse()
        .map_err(|_| fail(ObsStatus::InvalidArgument, format!("{s:?} is not an IP address")))
}

unsafe fn key32(p: *const u8, what: &str) -> Result<KadKey, ObsStatus> {
    if p.is_null() {
        return Err(fail(ObsStatus::NullPointer, format!("{what} is null")));
    }
    let mut k = [0u8; 32];
    k.copy_from_slice(slice::from_raw_parts(p, 32));
    Ok(KadKey(k))
}

unsafe fn out<T>(p: *mut T, v: T) -> ObsStatus {
    if p.is_null() {
        return fail(ObsStatus::NullPointer, "output pointer is null");
    }
    p.write(v);
    ObsStatus::Ok
}

unsafe fn out_handle<T>(p: *mut *mut T, v: impl FnOnce() -> T) -> ObsStatus {
    if p.is_null() {
        return fail(ObsStatus::NullPointer, "output handle pointer is null");
    }
    p.write(Box::into_raw(Box::new(v())));
    ObsStatus::Ok
}

/// Copies `s` plus a NUL into `buf`. `*written` receives the length without
/// the NUL, or the required capacity minus one when `buf` is too small.
unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, written: *mut usize) -> ObsStatus {
    if !written.is_null() {
        written.write(s.len());
    }
    if s.len() + 1 > cap {
        return fail(ObsStatus::BufferTooSmall, format!("needs {} bytes", s.len() + 1));
    }
    if buf.is_null() {
        return fail(ObsStatus::NullPointer, "buf is null");
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    buf.add(s.len()).write(0);
    ObsStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn obs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn obs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// SHA-256 of `data` into the 32 bytes at `out_key`.
#[no_mangle]
pub unsafe extern "C" fn obs_kad_key(data: *const u8, len: usize, out_key: *mut u8) -> ObsStatus {
    guard(|| {
        let d = tri!(bytes(data, len));
        if out_key.is_null() {
            return fail(ObsStatus::NullPointer, "out_key is null");
        }
        ptr::copy_nonoverlapping(kad_key(d).0.as_ptr(), out_key, 32);
        ObsStatus::Ok
    })
}

/// Leading bits shared by two 32-byte keys, 0..=256.
#[no_mangle]
pub unsafe extern "C" fn obs_common_prefix_len(a: *const u8, b: *const u8, out_cpl: *mut u32) -> ObsStatus {
    guard(|| {
        let a = tri!(key32(a, "a"));
        let b = tri!(key32(b, "b"));
        out(out_cpl, common_prefix_len(&a, &b))
    })
}

/// CIDv0 of `data` laid out as a UnixFS file DAG.
#[no_mangle]
pub unsafe extern "C" fn obs_cid_of_bytes(
    data: *const u8,
    len: usize,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> ObsStatus {
    guard(|| {
        let d = tri!(bytes(data, len));
        write_str(&cid_of_file(d).to_string(), buf, cap, written)
    })
}

/// Content-sniffed MIME type of `data`, or "unknown".
#[no_mangle]
pub unsafe extern "C" fn obs_sniff_mime(
    data: *const u8,
    len: usize,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> ObsStatus {
    guard(|| {
        let d = tri!(bytes(data, len));
        write_str(sniff_mime(d), buf, cap, written)
    })
}

/// Parses a serialized sorted blocklist.
#[no_mangle]
pub unsafe extern "C" fn obs_blocklist_load(data: *const u8, len: usize, out_list: *mut *mut ObsBlocklist) -> ObsStatus {
    guard(|| {
        let d = tri!(bytes(data, len));
        match Blocklist::deserialize(d) {
            Ok(b) => out_handle(out_list, || ObsBlocklist(b)),
            Err(e) => fail(ObsStatus::Format, e.to_string()),
        }
    })
}

/// Builds a blocklist from whitespace-separated IP addresses.
#[no_mangle]
pub unsafe extern "C" fn obs_blocklist_build(
    ips: *const c_char,
    created_at_unix: i64,
    out_list: *mut *mut ObsBlocklist,
) -> ObsStatus {
    guard(|| {
        let s = tri!(text(ips, "ips"));
        let parsed: Result<Vec<IpAddr>, _> = s.split_whitespace().map(str::parse).collect();
        let Ok(parsed) = parsed else {
            return fail(ObsStatus::InvalidArgument, "ips contains a token that is not an IP address");
        };
        let Some(at) = DateTime::from_timestamp(created_at_unix, 0) else {
            return fail(ObsStatus::InvalidArgument, "created_at_unix out of range");
        };
        out_handle(out_list, || ObsBlocklist(Blocklist::build(parsed, at)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn obs_blocklist_len(list: *const ObsBlocklist) -> usize {
    list.as_ref().map_or(0, |l| l.0.len())
}

/// Sets `*out_listed` to 1 when `ip` is listed, else 0.
#[no_mangle]
pub unsafe extern "C" fn obs_blocklist_contains(
    list: *const ObsBlocklist,
    ip: *const c_char,
    out_listed: *mut u8,
) -> ObsStatus {
    guard(|| {
        let Some(l) = list.as_ref() else {
            return fail(ObsStatus::NullPointer, "list is null");
        };
        let ip = tri!(parse_ip(ip));
        out(out_listed, u8::from(l.0.contains(ip)))
    })
}

/// Serializes the list into `buf`; `*written` receives the required length
/// even when `cap` is too small.
#[no_mangle]
pub unsafe extern "C" fn obs_blocklist_serialize(
    list: *const ObsBlocklist,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> ObsStatus {
    guard(|| {
        let Some(l) = list.as_ref() else {
            return fail(ObsStatus::NullPointer, "list is null");
        };
        let blob = l.0.serialize();
        if !written.is_null() {
            written.write(blob.len());
        }
        if blob.len() > cap {
            return fail(ObsStatus::BufferTooSmall, format!("needs {} bytes", blob.len()));
        }
        if buf.is_null() {
            return fail(ObsStatus::NullPointer, "buf is null");
        }
        ptr::copy_nonoverlapping(blob.as_ptr(), buf, blob.len());
        ObsStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn obs_blocklist_free(list: *mut ObsBlocklist) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Parses a serialized Bloom-filter blocklist.
#[no_mangle]
pub unsafe extern "C" fn obs_bloom_load(data: *const u8, len: usize, out_bloom: *mut *mut ObsBloom) -> ObsStatus {
    guard(|| {
        let d = tri!(bytes(data, len));
        match BloomBlocklist::deserialize(d) {
            Ok(b) => out_handle(out_bloom, || ObsBloom(b)),
            Err(e) => fail(ObsStatus::Format, e.to_string()),
        }
    })
}

/// Sets `*out_listed` to 1 when `ip` may be listed, 0 when it certainly is not.
#[no_mangle]
pub unsafe extern "C" fn obs_bloom_contains(bloom: *const ObsBloom, ip: *const c_char, out_listed: *mut u8) -> ObsStatus {
    guard(|| {
        let Some(b) = bloom.as_ref() else {
            return fail(ObsStatus::NullPointer, "bloom is null");
        };
        let ip = tri!(parse_ip(ip));
        out(out_listed, u8::from(b.0.contains(ip)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn obs_bloom_free(bloom: *mut ObsBloom) {
    if !bloom.is_null() {
        drop(Box::from_raw(bloom));
    }
}

/// Builds a gate from a serialized blocklist of either format, told apart by
/// its magic.
#[no_mangle]
pub unsafe extern "C" fn obs_gate_load(data: *const u8, len: usize, out_gate: *mut *mut ObsGate) -> ObsStatus {
    guard(|| {
        let d = tri!(bytes(data, len));
        let filter: Arc<dyn IpFilter> = if d.starts_with(MAGIC) {
            match Blocklist::deserialize(d) {
                Ok(b) => Arc::new(b),
                Err(e) => return fail(ObsStatus::Format, e.to_string()),
            }
        } else if d.starts_with(BLOOM_MAGIC) {
            match BloomBlocklist::deserialize(d) {
                Ok(b) => Arc::new(b),
                Err(e) => return fail(ObsStatus::Format, e.to_string()),
            }
        } else {
            return fail(ObsStatus::Format, "unrecognized blocklist magic");
        };
        out_handle(out_gate, || ObsGate(ConnectionGate::new(filter)))
    })
}

/// Sets `*out_allowed` to 1 when dialing or accepting `multiaddr` is allowed.
#[no_mangle]
pub unsafe extern "C" fn obs_gate_check(gate: *const ObsGate, multiaddr: *const c_char, out_allowed: *mut u8) -> ObsStatus {
    guard(|| {
        let Some(g) = gate.as_ref() else {
            return fail(ObsStatus::NullPointer, "gate is null");
        };
        let s = tri!(text(multiaddr, "multiaddr"));
        let addr: Multiaddr = match s.parse() {
            Ok(a) => a,
            Err(e) => return fail(ObsStatus::InvalidArgument, format!("{s:?}: {e}")),
        };
        out(out_allowed, u8::from(g.0.gate(&addr) == GateDecision::Allow))
    })
}

#[no_mangle]
pub unsafe extern "C" fn obs_gate_denied(gate: *const ObsGate) -> u64 {
    gate.as_ref().map_or(0, |g| g.0.denied())
}

#[no_mangle]
pub unsafe extern "C" fn obs_gate_free(gate: *mut ObsGate) {
    if !gate.is_null() {
        drop(Box::from_raw(gate));
    }
}

/// Builds a query-key table of `pool_size` candidates from `seed`.
#[no_mangle]
pub unsafe extern "C" fn obs_key_table_build(seed: u64, pool_size: usize, out_table: *mut *mut ObsKeyTable) -> ObsStatus {
    guard(|| match KeyTable::build(seed, pool_size) {
        Ok(t) => out_handle(out_table, || ObsKeyTable(t)),
        Err(e) => fail(ObsStatus::InvalidArgument, e.to_string()),
    })
}

/// Deepest common prefix length every lookup is guaranteed to satisfy.
#[no_mangle]
pub unsafe extern "C" fn obs_key_table_max_cpl(table: *const ObsKeyTable) -> u32 {
    table.as_ref().map_or(0, |t| t.0.max_cpl_guarantee())
}

/// Writes into the 32 bytes at `out_key` a preimage whose hash shares exactly
/// `cpl` leading bits with the 32-byte `target`.
#[no_mangle]
pub unsafe extern "C" fn obs_key_table_find(
    table: *const ObsKeyTable,
    target: *const u8,
    cpl: u32,
    out_key: *mut u8,
) -> ObsStatus {
    guard(|| {
        let Some(t) = table.as_ref() else {
            return fail(ObsStatus::NullPointer, "table is null");
        };
        let target = tri!(key32(target, "target"));
        if out_key.is_null() {
            return fail(ObsStatus::NullPointer, "out_key is null");
        }
        match t.0.find_query_key(&target, cpl) {
            Ok(k) => {
                ptr::copy_nonoverlapping(k.as_ptr(), out_key, 32);
                ObsStatus::Ok
            }
            Err(e) => fail(ObsStatus::NotFound, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn obs_key_table_free(table: *mut ObsKeyTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}
