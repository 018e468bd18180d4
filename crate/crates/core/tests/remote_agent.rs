use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use mmcount::agent::{serialize_context, Agent, RemoteAgent, RemoteConfig, TokenizerConfig};
use mmcount::compensation::{CompensationStateSummary, ALPHA_BOUNDS};
use mmcount::heatmap::{Extent, Heatmap};
use mmcount::mcts::{init_root, SearchConfig};
use mmcount::model::{CloudWindow, Frame, RadarPoint, ScenarioDescriptor, SensorSetup};
use mmcount::noise_removal::remove_noise;
use mmcount::Error;
use tiny_http::{Header, Response, Server};

type Handler = dyn Fn(&str, &serde_json::Value) -> (u16, String) + Send + Sync;

/// Serves every request on its own thread so concurrency can be observed.
fn serve(handler: Arc<Handler>) -> String {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let handler = Arc::clone(&handler);
            thread::spawn(move || {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let json: serde_json::Value = serde_json::from_str(&body).unwrap_or(serde_json::Value::Null);
                let (status, reply) = handler(req.url(), &json);
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(Response::from_string(reply).with_status_code(status).with_header(header));
            });
        }
    });
    url
}

fn window() -> CloudWindow {
    let pts = (0..6).map(|i| RadarPoint::new(0.1 * f64::from(i), 1.0 + 0.2 * f64::from(i), 0.0, 0.0, 5.0)).collect();
    CloudWindow::new(0, 200, vec![Frame::new(0, 0, pts)]).unwrap()
}

fn summary() -> CompensationStateSummary {
    CompensationStateSummary::from_window(&window(), &SensorSetup::default(), &ScenarioDescriptor::default(), None)
}

#[test]
fn wrong_length_mask_is_malformed() {
    let url = serve(Arc::new(|_, body| {
        let n = body["total_points"].as_u64().unwrap() as usize;
        (200, serde_json::json!({ "keep": vec![true; n + 1], "confidence": vec![0.9; n + 1] }).to_string())
    }));
    let agent = RemoteAgent::new(RemoteConfig::new(url));
    let seq = serialize_context(&window(), &SensorSetup::default(), &ScenarioDescriptor::default(), "p", &TokenizerConfig::default());
    assert!(matches!(agent.classify_noise(&seq), Err(Error::MalformedAgentReply(_))));

    // Noise removal recovers through the heuristic classifier.
    let (_, report) =
        remove_noise(&window(), &agent, &SensorSetup::default(), &ScenarioDescriptor::default(), &TokenizerConfig::default())
            .unwrap();
    assert!(report.fallback);
}

#[test]
fn valid_mask_is_applied() {
    let url = serve(Arc::new(|path, body| {
        assert_eq!(path, "/v1/noise");
        assert!(body["tokens"].as_array().unwrap().len() > 5);
        let n = body["total_points"].as_u64().unwrap() as usize;
        let keep: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        (200, serde_json::json!({ "keep": keep, "confidence": vec![0.8; n] }).to_string())
    }));
    let agent = RemoteAgent::new(RemoteConfig::new(url));
    let (out, report) =
        remove_noise(&window(), &agent, &SensorSetup::default(), &ScenarioDescriptor::default(), &TokenizerConfig::default())
            .unwrap();
    assert_eq!(out.point_count(), 3);
    assert!(!report.fallback);
    assert!((report.mean_confidence - 0.8).abs() < 1e-12);
}

#[test]
fn out_of_bounds_alpha_is_clamped_and_flagged() {
    let url = serve(Arc::new(|_, _| {
        (200, r#"{"strategies": [{"alpha": 4.5, "sector_gains": [1,1,1,1,1,1,1,1], "clip_db": 20}]}"#.to_string())
    }));
    let agent = RemoteAgent::new(RemoteConfig::new(url));
    let props = agent.propose_strategies(&summary(), 3).unwrap();
    assert_eq!(props.len(), 1);
    assert!(props[0].clamped);
    assert_eq!(props[0].strategy.alpha, ALPHA_BOUNDS.1);

    let mut tree = init_root(&window(), &SensorSetup::default(), &ScenarioDescriptor::default(), SearchConfig::default());
    tree.expand(0, &agent, 3).unwrap();
    assert_eq!(tree.clamped_proposals, 1);
}

#[test]
fn wrong_gain_count_is_malformed() {
    let url = serve(Arc::new(|_, _| (200, r#"{"strategies": [{"alpha": 2, "sector_gains": [1,1], "clip_db": 20}]}"#.to_string())));
    let agent = RemoteAgent::new(RemoteConfig::new(url));
    assert!(matches!(agent.propose_strategies(&summary(), 3), Err(Error::MalformedAgentReply(_))));
}

#[test]
fn unreachable_service_is_unavailable() {
    // Bind and drop a listener to get a port nobody serves.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let agent = RemoteAgent::new(RemoteConfig::new(format!("http://127.0.0.1:{port}")));
    assert!(matches!(agent.propose_strategies(&summary(), 3), Err(Error::AgentUnavailable(_))));
    let err = remove_noise(&window(), &agent, &SensorSetup::default(), &ScenarioDescriptor::default(), &TokenizerConfig::default())
        .unwrap_err();
    assert!(matches!(err, Error::AgentUnavailable(_)));
}

#[test]
fn server_error_is_unavailable_and_garbage_is_malformed() {
    let url = serve(Arc::new(|path, _| match path {
        "/v1/strategies" => (503, "busy".to_string()),
        _ => (200, "not json".to_string()),
    }));
    let agent = RemoteAgent::new(RemoteConfig::new(url));
    assert!(matches!(agent.propose_strategies(&summary(), 3), Err(Error::AgentUnavailable(_))));
    let hm = Heatmap::empty(Extent::room(), (8, 8)).unwrap();
    assert!(matches!(agent.detect_crowd(b"png", &hm), Err(Error::MalformedAgentReply(_))));
}

#[test]
fn detections_round_trip_and_confidence_is_checked() {
    let url = serve(Arc::new(|_, body| {
        assert!(body["image_b64"].as_str().unwrap().len() > 0);
        let conf = body["grid"]["rows"].as_u64().unwrap() as f64 / 10.0;
        let reply = serde_json::json!({ "detections": [{ "x": 0.5, "y": 1.5, "confidence": conf, "label": "person" }] });
        (200, reply.to_string())
    }));
    let agent = RemoteAgent::new(RemoteConfig::new(url));
    let ok = agent.detect_crowd(b"png", &Heatmap::empty(Extent::room(), (8, 8)).unwrap()).unwrap();
    assert_eq!((ok[0].x, ok[0].y), (0.5, 1.5));
    let bad = agent.detect_crowd(b"png", &Heatmap::empty(Extent::room(), (16, 16)).unwrap());
    assert!(matches!(bad, Err(Error::MalformedAgentReply(_))));
}

#[test]
fn in_flight_requests_are_bounded() {
    let current = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (c, p) = (Arc::clone(&current), Arc::clone(&peak));
    let url = serve(Arc::new(move |_, _| {
        let now = c.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(50));
        c.fetch_sub(1, Ordering::SeqCst);
        (200, r#"{"strategies": [{"alpha": 2, "sector_gains": [1,1,1,1,1,1,1,1], "clip_db": 20}]}"#.to_string())
    }));
    let mut config = RemoteConfig::new(url);
    config.max_in_flight = 2;
    let agent = Arc::new(RemoteAgent::new(config));
    let s = summary();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (agent, s) = (Arc::clone(&agent), s.clone());
            thread::spawn(move || agent.propose_strategies(&s, 1).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert!(peak.load(Ordering::SeqCst) >= 1);
}
