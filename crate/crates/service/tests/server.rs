use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use stresslab_service::{ManualClock, Server, ServiceConfig, ServiceError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

fn config(root: &std::path::Path, port: u16) -> ServiceConfig {
    ServiceConfig {
        port,
        store_root: root.to_path_buf(),
        ..ServiceConfig::default()
    }
}

async fn http(addr: std::net::SocketAddr, request: String) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(request.as_bytes()).await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    buf
}

#[tokio::test]
async fn websocket_ingest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(1_000_000));
    let server = Server::bind(config(dir.path(), 0), clock).await.unwrap();
    let addr = server.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(server.run(async {
        let _ = stopped.await;
    }));

    let body = r#"{"participant_label":"WS"}"#;
    let resp = http(
        addr,
        format!(
            "POST /sessions HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ),
    )
    .await;
    assert!(resp.starts_with("HTTP/1.1 201"), "{resp}");
    let json_start = resp.find("\r\n\r\n").unwrap() + 4;
    let created: Value = serde_json::from_str(&resp[json_start..]).unwrap();
    let id = created["session_id"].as_str().unwrap();

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream"))
        .await
        .unwrap();
    let mut send = async |v: Value| -> Value {
        ws.send(Message::Text(v.to_string().into())).await.unwrap();
        match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => serde_json::from_str(&t).unwrap(),
            other => panic!("unexpected frame {other:?}"),
        }
    };
    let a = send(json!({"channel": "ppg", "sampling_rate_hz": 64.0, "first_sample_t_ms": 0.0, "values": [1.0, 2.0, 3.0]})).await;
    assert_eq!(a["ok"], true, "{a}");
    assert_eq!(a["total_samples"], 3);
    let b = send(json!({"channel": "ppg", "sampling_rate_hz": 64.0, "first_sample_t_ms": 46.875, "values": [4.0]})).await;
    assert_eq!(b["total_samples"], 4);
    let c = send(json!({"channel": "ppg", "sampling_rate_hz": 64.0, "first_sample_t_ms": 10.0, "values": [4.0]})).await;
    assert_eq!(c["ok"], false);
    assert_eq!(c["error"]["code"], "batch_rejected");
    ws.close(None).await.unwrap();

    let data = stresslab_core::store::read_signal(&dir.path().join(id), stresslab_core::store::Channel::Ppg).unwrap();
    assert_eq!(data.values, vec![1.0, 2.0, 3.0, 4.0]);

    stop.send(()).unwrap();
    task.await.unwrap().unwrap();
}

#[tokio::test]
async fn busy_port_is_a_bind_error() {
    let dir = tempfile::tempdir().unwrap();
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    let err = Server::bind(config(dir.path(), port), Arc::new(ManualClock::new(0)))
        .await
        .err()
        .unwrap();
    assert!(matches!(err, ServiceError::Bind { .. }), "{err}");
}
