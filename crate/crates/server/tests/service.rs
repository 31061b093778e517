use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use duplexcap_asr::ExternalAsrMessage;
use duplexcap_core::{CaptionConfig, UtteranceStatus};
use duplexcap_server::{replay_log_str, serve, ServerOptions, SessionHandle};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn start(log: bool) -> (SessionHandle, SocketAddr, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let handle = SessionHandle::spawn(ServerOptions {
        log_dir: log.then(|| dir.path().to_owned()),
        ..ServerOptions::default()
    })
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, handle.clone(), std::future::pending()));
    (handle, addr, dir)
}

async fn open(addr: SocketAddr, role: &str, session: &str) -> Ws {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let hello = json!({"type": "hello", "payload": {"role": role, "session_id": session}, "msg_id": 1});
    ws.send(Message::text(hello.to_string())).await.unwrap();
    ws
}

async fn recv(ws: &mut Ws) -> Option<Value> {
    loop {
        match tokio::time::timeout(Duration::from_secs(3), ws.next()).await.ok()?? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => {}
        }
    }
}

async fn recv_type(ws: &mut Ws, kind: &str) -> Value {
    loop {
        let m = recv(ws).await.unwrap_or_else(|| panic!("socket ended waiting for {kind}"));
        if m["type"] == kind {
            return m;
        }
    }
}

/// Connects and consumes the welcome sequence.
async fn join(addr: SocketAddr, role: &str) -> Ws {
    let mut ws = open(addr, role, "default").await;
    let welcome = recv(&mut ws).await.unwrap();
    assert_eq!(welcome["type"], "hello");
    assert_eq!(welcome["payload"]["role"], role);
    assert_eq!(recv(&mut ws).await.unwrap()["type"], "config");
    if role != "control" {
        assert_eq!(recv(&mut ws).await.unwrap()["type"], "frame");
    }
    ws
}

async fn control(ws: &mut Ws, msg_id: u64, payload: Value) -> Value {
    let msg = json!({"type": "control", "payload": payload, "msg_id": msg_id});
    ws.send(Message::text(msg.to_string())).await.unwrap();
    loop {
        let m = recv(ws).await.expect("reply");
        if (m["type"] == "ack" || m["type"] == "error") && m["msg_id"] == msg_id {
            return m;
        }
    }
}

fn asr(id: &str, text: &str, is_final: bool) -> ExternalAsrMessage {
    ExternalAsrMessage {
        result_id: id.into(),
        is_final,
        transcript: text.into(),
        confidence: None,
        stability: None,
    }
}

#[tokio::test]
async fn face_client_gets_welcome_config_and_snapshot() {
    let (_h, addr, _d) = start(false).await;
    let mut ws = open(addr, "face_hearing", "default").await;
    let welcome = recv(&mut ws).await.unwrap();
    assert_eq!(welcome["payload"]["session_id"], "default");
    let config = recv(&mut ws).await.unwrap();
    assert_eq!(config["payload"]["config_rev"], 1);
    let frame = recv(&mut ws).await.unwrap();
    assert_eq!(frame["payload"]["face"], "hearing");
    assert_eq!(frame["payload"]["mirrored"], true);
    assert_eq!(frame["payload"]["lines"], json!([]));
    let ids: Vec<u64> = [&welcome, &config, &frame].iter().map(|m| m["msg_id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 2, 3]);
}

#[tokio::test]
async fn bad_hello_is_rejected_and_closed() {
    let (_h, addr, _d) = start(false).await;
    for (role, session) in [("projector", "default"), ("face_dhh", "elsewhere")] {
        let mut ws = open(addr, role, session).await;
        let err = recv(&mut ws).await.unwrap();
        assert_eq!(err["type"], "error");
        assert_eq!(err["payload"]["code"], "BadHello");
        assert_eq!(err["msg_id"], 1);
        assert!(recv(&mut ws).await.is_none());
    }
}

#[tokio::test]
async fn second_face_client_displaces_first() {
    let (_h, addr, _d) = start(false).await;
    let mut first = join(addr, "face_dhh").await;
    let _second = join(addr, "face_dhh").await;
    let bye = recv_type(&mut first, "bye").await;
    assert_eq!(bye["payload"]["reason"], "displaced");
    assert!(recv(&mut first).await.is_none());
}

#[tokio::test]
async fn control_errors_echo_msg_id() {
    let (_h, addr, _d) = start(false).await;
    let mut ctl = join(addr, "control").await;
    let e = control(&mut ctl, 41, json!({"action": "retract_last"})).await;
    assert_eq!((e["type"].as_str(), e["payload"]["code"].as_str()), (Some("error"), Some("NothingToRetract")));
    let e = control(&mut ctl, 42, json!({"action": "retract_id", "args": {"utterance_id": "nope"}})).await;
    assert_eq!(e["payload"]["code"], "NotFound");
    let e = control(&mut ctl, 43, json!({"action": "dance"})).await;
    assert_eq!(e["payload"]["code"], "BadMessage");
    let e = control(&mut ctl, 44, json!({"action": "config_patch", "args": {"line_width": 2, "font_id": ""}})).await;
    assert_eq!(e["payload"]["code"], "OutOfRange");
    assert_eq!(e["payload"]["fields"].as_array().unwrap().len(), 2);
    let e = control(&mut ctl, 45, json!({"action": "config_patch", "args": {"colour": 1}})).await;
    assert_eq!(e["payload"]["code"], "UnknownField");

    ctl.send(Message::text(json!({"type": "frame", "payload": {}, "msg_id": 46}).to_string())).await.unwrap();
    let e = recv_type(&mut ctl, "error").await;
    assert_eq!((e["msg_id"].as_u64(), e["payload"]["code"].as_str()), (Some(46), Some("BadMessage")));
}

#[tokio::test]
async fn dhh_face_may_restyle_but_not_retract() {
    let (h, addr, _d) = start(false).await;
    let mut dhh = join(addr, "face_dhh").await;
    let mut hearing = join(addr, "face_hearing").await;
    h.submit_asr(asr("r1", "hello", true)).await;
    recv_type(&mut dhh, "frame").await;

    let e = control(&mut dhh, 7, json!({"action": "retract_last"})).await;
    assert_eq!(e["payload"]["code"], "Forbidden");
    let ack = control(&mut dhh, 8, json!({"action": "config_patch", "args": {"char_size_pt": 48}})).await;
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["payload"]["config_rev"], 2);
    let pushed = recv_type(&mut hearing, "config").await;
    assert_eq!(pushed["payload"]["config"]["char_size_pt"], 48.0);

    let ack = control(&mut hearing, 9, json!({"action": "retract_last"})).await;
    assert_eq!(ack["payload"]["utterance_id"], "r1");
    let frame = loop {
        let f = recv_type(&mut dhh, "frame").await;
        if f["payload"]["lines"][0]["retracted"] == true {
            break f;
        }
    };
    assert_eq!(frame["payload"]["config_rev"], 2);
}

#[tokio::test]
async fn frames_reach_both_faces_in_order() {
    let (h, addr, _d) = start(false).await;
    let mut dhh = join(addr, "face_dhh").await;
    let mut hearing = join(addr, "face_hearing").await;
    h.submit_asr(asr("r1", "one", false)).await;
    h.submit_asr(asr("r1", "one two", false)).await;
    h.submit_asr(asr("r1", "one two three", true)).await;
    for ws in [&mut dhh, &mut hearing] {
        let mut last = -1;
        loop {
            let f = recv_type(ws, "frame").await;
            let ts = f["payload"]["frame_ts"].as_i64().unwrap();
            assert!(ts > last);
            last = ts;
            let g = &f["payload"]["lines"][0]["graphemes"];
            if g.as_array().is_some_and(|g| g.len() == 13) {
                break;
            }
        }
    }
}

async fn call(app: axum::Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    (status, headers, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn json_req(method: &str, uri: &str, body: Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn http_config_endpoints() {
    let h = SessionHandle::spawn(ServerOptions::default()).unwrap();
    let (status, headers, body) = call(h.router(), get("/config")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers["x-config-rev"], "1");
    let cfg: CaptionConfig = serde_json::from_slice(&body).unwrap();
    assert_eq!(cfg, CaptionConfig::default());

    let (status, headers, body) = call(h.router(), json_req("PUT", "/config", json!({"max_lines": 5}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers["x-config-rev"], "2");
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["max_lines"], 5);

    let (status, _, body) = call(h.router(), json_req("PUT", "/config", json!({"max_lines": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["code"], "OutOfRange");
    let (status, _, body) = call(h.router(), json_req("PUT", "/config", json!([1]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(serde_json::from_slice::<Value>(&body).unwrap()["code"].is_string());
    assert_eq!(h.config().await.config_rev, 2);
}

#[tokio::test]
async fn http_health_asr_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let h = SessionHandle::spawn(ServerOptions { log_dir: Some(dir.path().to_owned()), ..ServerOptions::default() })
        .unwrap();
    let (status, _, body) = call(h.router(), get("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["status"], "ok");

    for (text, fin) in [("next", false), ("next stop", true)] {
        let msg = json!({"result_id": "r9", "is_final": fin, "transcript": text});
        let (status, _, _) = call(h.router(), json_req("POST", "/asr", msg)).await;
        assert_eq!(status, StatusCode::ACCEPTED);
    }
    let (status, _, _) = call(h.router(), json_req("POST", "/asr", json!({"is_final": true}))).await;
    assert!(status.is_client_error());

    tokio::time::sleep(Duration::from_millis(50)).await;
    let live = h.session().await;
    assert_eq!(live.state().utterances[0].status, UtteranceStatus::Final);
    let (status, headers, body) = call(h.router(), get("/session/log")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers["content-type"], "application/x-ndjson");
    let replayed = replay_log_str(std::str::from_utf8(&body).unwrap()).unwrap();
    assert_eq!(replayed.runtime.session(), &live);
    assert!(replayed.digests_verified >= 1);
}

#[tokio::test]
async fn session_log_absent_without_log_dir() {
    let h = SessionHandle::spawn(ServerOptions::default()).unwrap();
    let (status, _, _) = call(h.router(), get("/session/log")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
