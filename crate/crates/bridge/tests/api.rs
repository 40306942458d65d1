use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use foresight::controller::ControllerMode;
use foresight::simlab::bundled_scenario;
use foresight::teleop::{replay, SessionEvent};
use foresight_bridge::{listen_address, serve, Bridge, SessionInfo, SessionStatus, DEFAULT_LISTEN, LISTEN_ENV};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

async fn call(bridge: &Bridge, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let res = bridge.router().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() })
}

#[tokio::test]
async fn health_and_scenarios() {
    let bridge = Bridge::bundled();
    let (status, body) = call(&bridge, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "status": "ok", "sessions": 0 }));
    let (_, body) = call(&bridge, "GET", "/scenarios", None).await;
    assert_eq!(body, json!(["carm_table", "rotating_plate", "parallel_surface"]));
}

#[tokio::test]
async fn session_lifecycle() {
    let bridge = Bridge::bundled();
    let (status, body) = call(&bridge, "POST", "/session", Some(json!({ "scenario_name": "carm_table", "controller": "base" }))).await;
    assert_eq!(status, StatusCode::CREATED);
    let info: SessionInfo = serde_json::from_value(body).unwrap();
    assert_eq!((info.scenario.as_str(), info.controller.as_str(), info.ts), ("carm_table", "base", 0.1));

    let (_, second) = call(&bridge, "POST", "/session", Some(json!({ "scenario_name": "rotating_plate" }))).await;
    assert_ne!(second["session_id"], json!(info.session_id));
    assert_eq!(second["controller"], "new");

    let uri = format!("/session/{}", info.session_id);
    let (status, body) = call(&bridge, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let st: SessionStatus = serde_json::from_value(body).unwrap();
    assert_eq!((st.session_id, st.clients), (info.session_id, 0));

    assert_eq!(call(&bridge, "DELETE", &uri, None).await.0, StatusCode::NO_CONTENT);
    assert_eq!(call(&bridge, "GET", &uri, None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&bridge, "GET", "/health", None).await.1["sessions"], 1);
}

#[tokio::test]
async fn bad_session_requests() {
    let bridge = Bridge::bundled();
    let (status, body) = call(&bridge, "POST", "/session", Some(json!({ "scenario_name": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
    let (status, _) = call(&bridge, "POST", "/session", Some(json!({ "scenario_name": "carm_table", "controller": "mpc" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&bridge, "POST", "/session", Some(json!({ "name": "carm_table" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(call(&bridge, "GET", "/session/99", None).await.0, StatusCode::NOT_FOUND);
}

#[test]
fn listen_address_precedence() {
    std::env::remove_var(LISTEN_ENV);
    assert_eq!(listen_address(None), DEFAULT_LISTEN);
    std::env::set_var(LISTEN_ENV, "0.0.0.0:9000");
    assert_eq!(listen_address(None), "0.0.0.0:9000");
    assert_eq!(listen_address(Some("127.0.0.1:7000")), "127.0.0.1:7000");
    std::env::remove_var(LISTEN_ENV);
}

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn server() -> (Bridge, String) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let bridge = Bridge::bundled();
    tokio::spawn(serve(listener, bridge.clone()));
    (bridge, addr)
}

async fn connect(addr: &str, id: u64) -> Socket {
    tokio_tungstenite::connect_async(format!("ws://{addr}/session/{id}/ws")).await.unwrap().0
}

async fn next_frame(ws: &mut Socket) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("frame within 5 s").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn next_of(ws: &mut Socket, kind: &str) -> Value {
    loop {
        let f = next_frame(ws).await;
        if f["type"] == kind {
            return f;
        }
    }
}

async fn command(ws: &mut Socket, seq: u64, v: [f64; 3]) {
    let frame = json!({ "type": "command", "seq": seq, "vx": v[0], "vy": v[1], "vz": v[2] });
    ws.send(Message::Text(frame.to_string().into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_session_streams_and_accepts_commands() {
    let (bridge, addr) = server().await;
    let info = bridge.start_session("carm_table", "new").unwrap();
    let mut ws = connect(&addr, info.session_id).await;

    let scene = next_frame(&mut ws).await;
    assert_eq!(scene["type"], "scene");
    assert_eq!(scene["robot"]["links"].as_array().unwrap().len(), 3);
    assert_eq!(scene["obstacles"][0]["id"], "table");

    let first = next_of(&mut ws, "snapshot").await;
    assert_eq!(first["command"], json!([0.0, 0.0, 0.0]));

    let sent = Instant::now();
    command(&mut ws, 1, [0.0, 0.0, 2.0]).await;
    let ack = next_of(&mut ws, "ack").await;
    assert_eq!(ack, json!({ "type": "ack", "seq": 1, "accepted": true, "stale": false, "clamped": true, "latest": 1 }));
    let mut last_tick = first["tick"].as_u64().unwrap();
    let applied = loop {
        let s = next_of(&mut ws, "snapshot").await;
        let tick = s["tick"].as_u64().unwrap();
        assert!(tick > last_tick);
        last_tick = tick;
        if s["seq"] == 1 {
            break s;
        }
    };
    let round_trip = sent.elapsed();
    assert_eq!(applied["command"], json!([0.0, 0.0, 0.5]));
    assert!(round_trip < Duration::from_secs(1), "{round_trip:?}");

    command(&mut ws, 1, [0.1, 0.0, 0.0]).await;
    let stale = next_of(&mut ws, "ack").await;
    assert_eq!((stale["stale"].as_bool(), stale["latest"].as_u64()), (Some(true), Some(1)));

    ws.send(Message::Text("{\"type\":\"steer\"}".into())).await.unwrap();
    let err = next_of(&mut ws, "error").await;
    assert!(err["message"].as_str().unwrap().starts_with("bad frame"));

    ws.close(None).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn clients_share_one_timeline() {
    let (bridge, addr) = server().await;
    let info = bridge.start_session("carm_table", "new").unwrap();
    let mut a = connect(&addr, info.session_id).await;
    let mut b = connect(&addr, info.session_id).await;
    next_of(&mut a, "scene").await;
    next_of(&mut b, "scene").await;
    command(&mut a, 1, [0.2, 0.0, 0.0]).await;
    next_of(&mut a, "ack").await;
    let sa = loop {
        let s = next_of(&mut a, "snapshot").await;
        if s["seq"] == 1 {
            break s;
        }
    };
    let sb = loop {
        let s = next_of(&mut b, "snapshot").await;
        if s["tick"] == sa["tick"] {
            break s;
        }
    };
    assert_eq!(sa, sb);
    let (_, status) = call(&bridge, "GET", &format!("/session/{}", info.session_id), None).await;
    assert_eq!(status["clients"], 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn watchdog_and_replay_over_the_wire() {
    let (bridge, addr) = server().await;
    let info = bridge.start_session("rotating_plate", "new").unwrap();
    let mut ws = connect(&addr, info.session_id).await;
    next_of(&mut ws, "scene").await;
    command(&mut ws, 5, [0.0, 0.0, -0.3]).await;
    next_of(&mut ws, "ack").await;

    let mut received = Vec::new();
    loop {
        let s = next_of(&mut ws, "snapshot").await;
        let expired = s["watchdog"] == true;
        received.push(s);
        if expired {
            break;
        }
    }
    let expired = received.last().unwrap();
    assert_eq!(expired["command"], json!([0.0, 0.0, 0.0]));
    assert_eq!(expired["seq"], 5);
    assert!(received.iter().any(|s| s["command"] == json!([0.0, 0.0, -0.3])));

    let (_, log) = call(&bridge, "GET", &format!("/session/{}/log", info.session_id), None).await;
    let log: Vec<SessionEvent> = serde_json::from_value(log).unwrap();
    let scenario = bundled_scenario("rotating_plate").unwrap().unwrap();
    let replayed = replay(&scenario, ControllerMode::Future, &log).unwrap();
    for s in &received {
        let tick = s["tick"].as_u64().unwrap() as usize;
        assert_eq!(&serde_json::to_value(&replayed[tick]).unwrap(), s, "tick {tick}");
    }

    assert_eq!(call(&bridge, "DELETE", &format!("/session/{}", info.session_id), None).await.0, StatusCode::NO_CONTENT);
    let closed = next_of(&mut ws, "error").await;
    assert_eq!(closed["message"], "session closed");
}
