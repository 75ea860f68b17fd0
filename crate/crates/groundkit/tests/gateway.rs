//! Cache, retry, offline and concurrency behaviour of the gateway, driven by
//! in-process fake transports.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use groundkit::core::annotate::{ChatMessage, ChatRequest, Role};
use groundkit::gateway::{
    Gateway, GatewayConfig, GatewayError, RetryPolicy, Transport, TransportError, WireReply, WireRequest, WireUsage,
};

/// Replies with the last message reversed, optionally failing the first calls.
#[derive(Clone, Default)]
struct Fake {
    calls: Arc<AtomicUsize>,
    fail_first: Arc<Mutex<Vec<TransportError>>>,
    delay: Duration,
}

impl Transport for Fake {
    fn chat(&self, req: &WireRequest) -> Result<WireReply, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(self.delay);
        if let Some(e) = self.fail_first.lock().unwrap().pop() {
            return Err(e);
        }
        let last = &req.messages.last().unwrap().content;
        Ok(WireReply { text: last.chars().rev().collect(), usage: WireUsage::default() })
    }
}

fn config(dir: &std::path::Path) -> GatewayConfig {
    GatewayConfig {
        cache_dir: dir.join("cache"),
        api_key_env: None,
        retry: RetryPolicy { max_attempts: 3, backoff_base_ms: 0, max_backoff_ms: 0 },
        ..GatewayConfig::default()
    }
}

fn request(text: &str) -> ChatRequest {
    ChatRequest {
        model: "m".into(),
        messages: vec![ChatMessage::new(Role::User, text)],
        temperature: 0.0,
        max_output_tokens: 16,
    }
}

#[test]
fn second_identical_call_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake::default();
    let gw = Gateway::with_transport(config(dir.path()), Box::new(fake.clone())).unwrap();
    let first = gw.chat(&request("abc")).unwrap();
    let second = gw.chat(&request("abc")).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.text, "cba");
    assert_eq!(fake.calls.load(Ordering::SeqCst), 1);
    let s = gw.stats();
    assert_eq!((s.cache_hits, s.cache_misses), (1, 1));

    // A fresh gateway over the same directory makes no transport calls at all.
    let fake2 = Fake::default();
    let gw2 = Gateway::with_transport(config(dir.path()), Box::new(fake2.clone())).unwrap();
    assert_eq!(gw2.chat(&request("abc")).unwrap(), first);
    assert_eq!(fake2.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn different_requests_get_different_entries() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake::default();
    let gw = Gateway::with_transport(config(dir.path()), Box::new(fake.clone())).unwrap();
    gw.chat(&request("abc")).unwrap();
    let mut hotter = request("abc");
    hotter.temperature = 0.7;
    gw.chat(&hotter).unwrap();
    assert_eq!(fake.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn offline_cold_cache_fails_without_calling_out() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake::default();
    let gw =
        Gateway::with_transport(GatewayConfig { offline: true, ..config(dir.path()) }, Box::new(fake.clone())).unwrap();
    let err = gw.chat(&request("abc")).unwrap_err();
    assert!(matches!(err, GatewayError::OfflineCacheMiss(_)));
    assert!(err.to_string().contains("offline-cache-miss"));
    assert_eq!(fake.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn offline_warm_cache_replays() {
    let dir = tempfile::tempdir().unwrap();
    let online = Gateway::with_transport(config(dir.path()), Box::new(Fake::default())).unwrap();
    let reply = online.chat(&request("hello")).unwrap();
    let fake = Fake::default();
    let offline =
        Gateway::with_transport(GatewayConfig { offline: true, ..config(dir.path()) }, Box::new(fake.clone())).unwrap();
    assert_eq!(offline.chat(&request("hello")).unwrap(), reply);
    assert_eq!(fake.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn rate_limit_then_success_takes_two_attempts() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake::default();
    fake.fail_first.lock().unwrap().push(TransportError::Status { status: 429, body: "slow down".into() });
    let gw = Gateway::with_transport(config(dir.path()), Box::new(fake.clone())).unwrap();
    assert_eq!(gw.chat(&request("xy")).unwrap().text, "yx");
    assert_eq!(gw.stats().attempts, 2);
    assert_eq!(fake.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn retries_stop_at_the_attempt_limit() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake::default();
    for _ in 0..5 {
        fake.fail_first.lock().unwrap().push(TransportError::Status { status: 503, body: String::new() });
    }
    let gw = Gateway::with_transport(config(dir.path()), Box::new(fake.clone())).unwrap();
    let err = gw.chat(&request("xy")).unwrap_err();
    assert!(matches!(err, GatewayError::RetriesExhausted { attempts: 3, .. }), "{err}");
    assert_eq!(fake.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake::default();
    fake.fail_first.lock().unwrap().push(TransportError::Status { status: 400, body: "bad".into() });
    let gw = Gateway::with_transport(config(dir.path()), Box::new(fake.clone())).unwrap();
    assert!(matches!(gw.chat(&request("xy")).unwrap_err(), GatewayError::Transport(_)));
    assert_eq!(fake.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn in_flight_calls_never_exceed_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let fake = Fake { delay: Duration::from_millis(20), ..Fake::default() };
    let gw = Gateway::with_transport(GatewayConfig { max_in_flight: 3, ..config(dir.path()) }, Box::new(fake.clone()))
        .unwrap();
    std::thread::scope(|s| {
        for i in 0..16 {
            let gw = &gw;
            s.spawn(move || gw.chat(&request(&format!("q{i}"))).unwrap());
        }
    });
    let stats = gw.stats();
    assert_eq!(fake.calls.load(Ordering::SeqCst), 16);
    assert!(stats.peak_in_flight <= 3, "peak {}", stats.peak_in_flight);
    assert!(stats.peak_in_flight >= 2, "calls never overlapped");
}

#[test]
fn zero_slots_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err =
        Gateway::with_transport(GatewayConfig { max_in_flight: 0, ..config(dir.path()) }, Box::new(Fake::default()))
            .unwrap_err();
    assert!(matches!(err, GatewayError::Config(_)));
}
