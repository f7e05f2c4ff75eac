use std::net::TcpStream;
use std::path::PathBuf;
use std::sync::Arc;

use capscan_cli::replay::{replay, ReplayOptions};
use capscan_cli::serve::{ServerContext, ServerFrame, Session, StateFrame, Server, PROTOCOL_VERSION};
use capscan_core::env::{EnvConfig, EpisodeRecord, PhantomSpec};
use serde_json::json;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

fn env() -> EnvConfig {
    let mut cfg = EnvConfig::desk_sphere();
    cfg.phantom = PhantomSpec::Sphere {
        vertices: 500,
        radius: 0.05,
    };
    cfg
}

fn start(dir: &std::path::Path) -> (String, Arc<ServerContext>) {
    let ctx = ServerContext::new(env(), dir).unwrap();
    let server = Server::bind("127.0.0.1:0", ctx.clone()).unwrap();
    let url = format!("ws://{}", server.local_addr().unwrap());
    std::thread::spawn(move || server.run());
    (url, ctx)
}

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn send(ws: &mut Client, v: serde_json::Value) {
    ws.send(Message::text(v.to_string())).unwrap();
}

fn recv(ws: &mut Client) -> ServerFrame {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            _ => continue,
        }
    }
}

fn state(f: ServerFrame) -> StateFrame {
    match f {
        ServerFrame::State(s) => s,
        other => panic!("expected a state frame, got {other:?}"),
    }
}

#[test]
fn lockstep_session_over_websocket() {
    let dir = tempfile::tempdir().unwrap();
    let (url, ctx) = start(dir.path());
    let (mut ws, _) = tungstenite::connect(&url).unwrap();

    send(&mut ws, json!({"t": "reset", "seed": 1}));
    assert!(matches!(recv(&mut ws), ServerFrame::Error { .. }));

    send(&mut ws, json!({"t": "hello", "proto": PROTOCOL_VERSION, "client": "test"}));
    match recv(&mut ws) {
        ServerFrame::Init { vertices, vertice_count } => {
            assert_eq!(vertice_count, ctx.world.mesh.vertex_count());
            assert_eq!(vertices.len(), vertice_count);
        }
        other => panic!("{other:?}"),
    }

    send(&mut ws, json!({"t": "save"}));
    assert!(matches!(recv(&mut ws), ServerFrame::Error { .. }));

    send(&mut ws, json!({"t": "reset", "seed": 77}));
    let s0 = state(recv(&mut ws));
    assert_eq!(s0.step, 0);
    assert_eq!(s0.coverage, 0.0);

    let mut colored = 0usize;
    let mut last = s0;
    for k in 0..10 {
        let ax = ((k as f64) * 0.7).sin();
        send(&mut ws, json!({"t": "action", "ax": ax, "az": 0.5, "extra": [1, 2]}));
        let s = state(recv(&mut ws));
        assert_eq!(s.step, last.step + 1);
        assert!(s.coverage >= last.coverage);
        colored += s.new_vertices.len();
        let expected = 100.0 * colored as f64 / ctx.world.mesh.vertex_count() as f64;
        assert!((s.coverage - expected).abs() < 1e-9, "{} vs {expected}", s.coverage);
        last = s;
    }

    // Malformed and out-of-range frames are rejected without ending the session.
    ws.send(Message::text("{not json")).unwrap();
    assert!(matches!(recv(&mut ws), ServerFrame::Error { .. }));
    send(&mut ws, json!({"t": "action", "ax": 1.5, "az": 0.0}));
    assert!(matches!(recv(&mut ws), ServerFrame::Error { .. }));
    send(&mut ws, json!({"t": "teleport"}));
    assert!(matches!(recv(&mut ws), ServerFrame::Error { .. }));
    send(&mut ws, json!({"t": "action", "ax": 0.0, "az": -1.0}));
    assert_eq!(state(recv(&mut ws)).step, 11);

    send(&mut ws, json!({"t": "save"}));
    let (id1, path1) = match recv(&mut ws) {
        ServerFrame::Saved { id, path, steps } => {
            assert_eq!(steps, 11);
            (id, path)
        }
        other => panic!("{other:?}"),
    };
    send(&mut ws, json!({"t": "save"}));
    let id2 = match recv(&mut ws) {
        ServerFrame::Saved { id, .. } => id,
        other => panic!("{other:?}"),
    };
    assert_ne!(id1, id2);

    let rec = EpisodeRecord::load(&path1).unwrap();
    assert_eq!(rec.steps.len(), 11);
    assert_eq!(rec.header.seed, 77);
    let r = replay(&rec, &ReplayOptions::default()).unwrap();
    assert!(r.divergence.is_none(), "{:?}", r.divergence);
    assert_eq!(r.final_coverage, last_coverage(&rec));

    // Steps after the last save are flushed when the client disconnects.
    for _ in 0..5 {
        send(&mut ws, json!({"t": "action", "ax": 0.2, "az": 0.2}));
        state(recv(&mut ws));
    }
    ws.close(None).unwrap();
    while ws.read().is_ok() {}
    let flushed = wait_for_records(dir.path(), 3);
    let rec = EpisodeRecord::load(flushed.last().unwrap()).unwrap();
    assert_eq!(rec.steps.len(), 16);
    assert!(replay(&rec, &ReplayOptions::default()).unwrap().divergence.is_none());
}

fn last_coverage(r: &EpisodeRecord) -> f64 {
    r.steps.last().unwrap().coverage
}

fn wait_for_records(dir: &std::path::Path, n: usize) -> Vec<PathBuf> {
    for _ in 0..200 {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        if v.len() >= n {
            v.sort();
            return v;
        }
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    panic!("server did not write {n} records");
}

#[test]
fn abrupt_disconnect_mid_episode_flushes_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let (url, _) = start(dir.path());
    {
        let (mut ws, _) = tungstenite::connect(&url).unwrap();
        send(&mut ws, json!({"t": "hello", "proto": 1}));
        recv(&mut ws);
        send(&mut ws, json!({"t": "reset", "seed": 5}));
        recv(&mut ws);
        for _ in 0..7 {
            send(&mut ws, json!({"t": "action", "ax": -0.3, "az": 0.9}));
            recv(&mut ws);
        }
        // Dropped without a close handshake.
    }
    let recs = wait_for_records(dir.path(), 1);
    let rec = EpisodeRecord::load(&recs[0]).unwrap();
    assert_eq!(rec.steps.len(), 7);
}

#[test]
fn session_protocol_rules() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = ServerContext::new(env(), dir.path()).unwrap();
    let mut s = Session::new(ctx.clone()).unwrap();
    assert!(matches!(s.handle_text(r#"{"t":"hello","proto":2}"#)[0], ServerFrame::Error { .. }));
    assert!(matches!(s.handle_text(r#"{"t":"hello","proto":1}"#)[0], ServerFrame::Init { .. }));
    assert!(matches!(s.handle_text(r#"{"t":"hello","proto":1}"#)[0], ServerFrame::Error { .. }));
    assert!(matches!(s.handle_text(r#"{"t":"action","ax":0,"az":0}"#)[0], ServerFrame::Error { .. }));
    assert!(matches!(s.handle_text(r#"{"t":"reset","seed":3}"#)[0], ServerFrame::State(_)));

    // Run the episode to its end; further actions are refused until reset.
    let mut n = 0;
    loop {
        let f = s.handle_text(r#"{"t":"action","ax":1,"az":1}"#);
        let st = state(f.into_iter().next().unwrap());
        n += 1;
        if st.terminated || st.truncated {
            break;
        }
    }
    assert!(n <= ctx.config.max_steps);
    assert!(matches!(s.handle_text(r#"{"t":"action","ax":0,"az":0}"#)[0], ServerFrame::Error { .. }));

    // A reset with unsaved steps keeps them on disk.
    assert!(matches!(s.handle_text(r#"{"t":"reset","seed":4}"#)[0], ServerFrame::State(_)));
    let saved: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(saved.len(), 1);
    assert_eq!(s.flush().unwrap(), None);
    let second = Session::new(ctx).unwrap();
    assert_ne!(second.id(), s.id());
}

#[test]
fn frames_use_the_documented_field_names() {
    let f = serde_json::to_value(ServerFrame::Init {
        vertices: vec![[1.0, 2.0, 3.0]],
        vertice_count: 1,
    })
    .unwrap();
    assert_eq!(f, json!({"t": "init", "vertices": [[1.0, 2.0, 3.0]], "vertice_count": 1}));
    let e = serde_json::to_value(ServerFrame::Error { msg: "x".into() }).unwrap();
    assert_eq!(e, json!({"t": "error", "msg": "x"}));
    let dir = tempfile::tempdir().unwrap();
    let ctx = ServerContext::new(env(), dir.path()).unwrap();
    let mut s = Session::new(ctx).unwrap();
    s.handle_text(r#"{"t":"hello","proto":1}"#);
    let st = serde_json::to_value(&s.handle_text(r#"{"t":"reset","seed":3}"#)[0]).unwrap();
    for key in [
        "t",
        "step",
        "sim_time",
        "capsule",
        "magnet",
        "coverage",
        "new_vertices",
        "reward",
        "terminated",
        "truncated",
    ] {
        assert!(st.get(key).is_some(), "{key}");
    }
    assert_eq!(st["t"], "state");
}
