//! `HttpPredictor` against an in-process mock of the model server.

#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use roixai::occlusion::{self, OcclusionConfig};
use roixai::predictor::{
    HttpPredictor, InfoWire, Predictor, RegionOracle, SegmentRequest, SegmentResponse,
};
use roixai::{BinaryMask, Error, ImageU8, RunOptions};

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Normal,
    GarbageBody,
    BadRequest,
    WrongVersion,
    Stall,
}

struct Mock {
    url: String,
    segments: Arc<AtomicU64>,
}

fn image() -> ImageU8 {
    ImageU8::gray(32, 32, (0..1024).map(|i| 30 + (i % 200) as u8).collect()).unwrap()
}

fn oracle() -> RegionOracle {
    let support = BinaryMask::from_fn(32, 32, |x, y| (8..20).contains(&x) && (10..18).contains(&y));
    RegionOracle::new(image(), support, 0.6)
        .unwrap()
        .with_flops(1000)
}

fn info(version: u32) -> InfoWire {
    InfoWire {
        name: "dummy".into(),
        flops_per_call: 1000,
        deterministic: true,
        max_concurrency: 4,
        input_width: 32,
        input_height: 32,
        protocol_version: version,
    }
}

struct Request {
    path: String,
    body: String,
}

/// Reads one HTTP/1.1 request; `None` once the peer closes the connection.
fn read_request(reader: &mut BufReader<TcpStream>) -> Option<Request> {
    let mut line = String::new();
    if reader.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        path,
        body: String::from_utf8(body).ok()?,
    })
}

fn respond(stream: &mut TcpStream, code: u16, body: &str) {
    let reason = if code == 200 { "OK" } else { "Error" };
    let msg = format!(
        "HTTP/1.1 {code} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(msg.as_bytes());
}

fn handle(mode: Mode, model: &RegionOracle, counter: &AtomicU64, req: &Request) -> (u16, String) {
    match req.path.as_str() {
        "/info" => {
            let v = if mode == Mode::WrongVersion { 2 } else { 1 };
            (200, serde_json::to_string(&info(v)).unwrap())
        }
        "/segment" => {
            counter.fetch_add(1, Ordering::SeqCst);
            match mode {
                Mode::GarbageBody => (200, "{\"mask\": 17".into()),
                Mode::BadRequest => (400, "{\"error\": \"bad\"}".into()),
                Mode::Stall => {
                    thread::sleep(Duration::from_millis(800));
                    (200, "{}".into())
                }
                _ => match serde_json::from_str::<SegmentRequest>(&req.body)
                    .map_err(|e| e.to_string())
                    .and_then(|r| r.decode().map_err(|e| e.to_string()))
                {
                    Ok(img) => {
                        let pred = model.segment(&img).unwrap();
                        (
                            200,
                            serde_json::to_string(&SegmentResponse::encode(&pred)).unwrap(),
                        )
                    }
                    Err(e) => (400, format!("{{\"error\": {e:?}}}")),
                },
            }
        }
        _ => (404, "{}".into()),
    }
}

fn spawn(mode: Mode) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let segments = Arc::new(AtomicU64::new(0));
    let counter = segments.clone();
    thread::spawn(move || {
        let model = Arc::new(oracle());
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (model, counter) = (model.clone(), counter.clone());
            thread::spawn(move || {
                stream.set_nodelay(true).unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                while let Some(req) = read_request(&mut reader) {
                    let (code, body) = handle(mode, &model, &counter, &req);
                    respond(&mut stream, code, &body);
                }
            });
        }
    });
    Mock { url, segments }
}

#[test]
fn handshake_reports_server_info() {
    let mock = spawn(Mode::Normal);
    let p = HttpPredictor::connect(&mock.url, Duration::from_secs(5)).unwrap();
    let info = p.info();
    assert_eq!(info.name, "dummy");
    assert_eq!(info.flops_per_call, 1000);
    assert_eq!(info.max_concurrency, 4);
    assert_eq!(info.input_size, Some((32, 32)));
}

#[test]
fn remote_predictions_match_in_process_oracle() {
    let mock = spawn(Mode::Normal);
    let p = HttpPredictor::connect(&format!("{}/", mock.url), Duration::from_secs(5)).unwrap();
    assert_eq!(
        p.segment(&image()).unwrap(),
        oracle().segment(&image()).unwrap()
    );

    let cfg = OcclusionConfig {
        patch: 8,
        stride: 8,
        ..Default::default()
    };
    let opts = RunOptions {
        jobs: 4,
        roi_flops: 0,
    };
    let remote = occlusion::run(&image(), &p, None, &cfg, &opts).unwrap();
    let local = occlusion::run(&image(), &oracle(), None, &cfg, &opts).unwrap();
    assert_eq!(remote.saliency, local.saliency);
    assert_eq!(remote.report.flops.calls, 17);
    assert_eq!(mock.segments.load(Ordering::SeqCst), 18);
}

#[test]
fn thousand_calls_are_all_counted() {
    let mock = spawn(Mode::Normal);
    let p = HttpPredictor::connect(&mock.url, Duration::from_secs(5)).unwrap();
    let img = image();
    for _ in 0..1000 {
        p.segment(&img).unwrap();
    }
    assert_eq!(mock.segments.load(Ordering::SeqCst), 1000);
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let mock = spawn(Mode::GarbageBody);
    let p = HttpPredictor::connect(&mock.url, Duration::from_secs(5)).unwrap();
    assert!(matches!(p.segment(&image()), Err(Error::Protocol(_))));
}

#[test]
fn http_error_status_is_a_protocol_error() {
    let mock = spawn(Mode::BadRequest);
    let p = HttpPredictor::connect(&mock.url, Duration::from_secs(5)).unwrap();
    assert!(matches!(p.segment(&image()), Err(Error::Protocol(_))));
}

#[test]
fn version_mismatch_is_rejected() {
    let mock = spawn(Mode::WrongVersion);
    assert!(matches!(
        HttpPredictor::connect(&mock.url, Duration::from_secs(5)),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn wrong_input_size_is_rejected_locally() {
    let mock = spawn(Mode::Normal);
    let p = HttpPredictor::connect(&mock.url, Duration::from_secs(5)).unwrap();
    let small = ImageU8::filled(16, 16, 1).unwrap();
    assert!(matches!(
        p.segment(&small),
        Err(Error::DimensionMismatch(_))
    ));
    assert_eq!(mock.segments.load(Ordering::SeqCst), 0);
}

#[test]
fn slow_server_times_out_as_transport_error() {
    let mock = spawn(Mode::Stall);
    let p = HttpPredictor::connect(&mock.url, Duration::from_millis(200)).unwrap();
    assert!(matches!(p.segment(&image()), Err(Error::Transport(_))));
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = HttpPredictor::connect(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2));
    assert!(matches!(err, Err(Error::Transport(_))));
}
