use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use langseg::adapt::{desk_datasets, train_source};
use langseg::classifier::{PixelClassifier, TrainParams};
use langseg::exec::ExecConfig;
use langseg::io::{self, labels_from_pgm};
use langseg::service::{decode_pgm, encode_pgm, router, AppState};
use langseg::session::Transcript;
use langseg::synth::lobe_fixture;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::sync::OnceLock;
use tower::ServiceExt;

fn model() -> PixelClassifier {
    static MODEL: OnceLock<PixelClassifier> = OnceLock::new();
    MODEL
        .get_or_init(|| train_source(&desk_datasets(4, 0, 0, 7).0, &TrainParams::default()).unwrap())
        .clone()
}

fn app(data: Option<PathBuf>) -> axum::Router {
    router(AppState::new(model(), data))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn synth_session(app: &axum::Router, seed: u64) -> (String, Value) {
    let (s, v) = call_json(app, "POST", "/sessions", Some(json!({ "synthSpec": { "seed": seed }, "seed": 3 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    (v["sessionId"].as_str().unwrap().to_string(), v)
}

#[tokio::test]
async fn create_from_synth_spec_picks_disjoint_rois() {
    let app = app(None);
    let (id, v) = synth_session(&app, 5).await;
    assert_eq!(id, "s1");
    let rois = v["rois"].as_array().unwrap();
    assert!(!rois.is_empty());
    for r in rois {
        assert_eq!(r["status"], "pending");
        assert_eq!((r["w"].as_u64(), r["h"].as_u64()), (Some(21), Some(21)));
    }
    let (s, full) = call_json(&app, "GET", "/sessions/s1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((full["width"].as_u64(), full["height"].as_u64()), (Some(128), Some(128)));
    assert!(full["gtPgm"].is_string());
    assert_eq!(full["maskPgm"], full["initialMaskPgm"]);
}

#[tokio::test]
async fn error_statuses() {
    let app = app(None);
    let (s, _) = call_json(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (id, _) = synth_session(&app, 1).await;
    let (s, _) = call_json(&app, "POST", &format!("/sessions/{id}/rois/999/command"), Some(json!({ "text": "Fill up the holes." }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call_json(&app, "POST", &format!("/sessions/{id}/rois/0/command"), Some(json!({ "text": "Expand the boundary and wiggle it." }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["clause"].as_str().unwrap().contains("wiggle"), "{v}");
    let (s, _) = call_json(&app, "POST", &format!("/sessions/{id}/rois/0/accept"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call_json(&app, "POST", &format!("/sessions/{id}/rois/0/reject"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call_json(&app, "POST", "/sessions", Some(json!({ "imageRef": "x" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "POST", "/sessions", Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

fn labels(v: &Value, key: &str) -> langseg::LabelMask {
    labels_from_pgm(&decode_pgm(v[key].as_str().unwrap()).unwrap(), 2).unwrap()
}

/// Writes the lobe fixture as `<dir>/lobe.pgm` and returns its mask as base64 PGM plus the roi.
fn write_fixture(dir: &std::path::Path) -> (String, langseg::Roi, PathBuf, PathBuf) {
    let fx = lobe_fixture(3);
    let img = dir.join("lobe.pgm");
    let mask = dir.join("lobe_mask.pgm");
    std::fs::write(&img, io::write_pgm(&io::image_to_pgm(&fx.image))).unwrap();
    std::fs::write(dir.join("lobe_label.pgm"), io::write_pgm(&io::mask_to_pgm(&fx.gt))).unwrap();
    std::fs::write(&mask, io::write_pgm(&io::mask_to_pgm(&fx.pred))).unwrap();
    (encode_pgm(&io::mask_to_pgm(&fx.pred)), fx.roi, img, mask)
}

fn fixture_command() -> String {
    let fx = lobe_fixture(3);
    let verb = match fx.kind {
        langseg::synth::LobeKind::Erode => "Expand",
        langseg::synth::LobeKind::Dilate => "Shrink",
    };
    format!("{verb} the boundary at the {}.", fx.direction.phrase())
}

#[tokio::test]
async fn accept_changes_only_the_roi_and_replay_rebuilds_it() {
    let dir = tempfile::tempdir().unwrap();
    let (mask_b64, roi, _, _) = write_fixture(dir.path());
    let app = app(Some(dir.path().to_path_buf()));
    let (s, v) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "imageRef": "lobe", "maskPgm": mask_b64, "rois": [roi, { "x": 0, "y": 0, "w": 10, "h": 10 }] })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let id = v["sessionId"].as_str().unwrap().to_string();

    let (s, cmd) = call_json(&app, "POST", &format!("/sessions/{id}/rois/0/command"), Some(json!({ "text": fixture_command() }))).await;
    assert_eq!(s, StatusCode::OK, "{cmd}");
    assert!(cmd["program"].as_str().unwrap().ends_with("FINAL=RESULT(var=OBJ0)\n"), "{}", cmd["program"]);
    let d = &cmd["roiDiceIfGt"];
    assert!(d["after"].as_f64().unwrap() > d["before"].as_f64().unwrap(), "{d}");
    let patch = decode_pgm(cmd["refinedPatch"].as_str().unwrap()).unwrap();
    assert_eq!((patch.width, patch.height), (roi.w, roi.h));

    let (_, before) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (s, acc) = call_json(&app, "POST", &format!("/sessions/{id}/rois/0/accept"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(acc["changedPixels"].as_u64().unwrap() > 0);
    let (_, after) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (m0, m1) = (labels(&before, "maskPgm"), labels(&after, "maskPgm"));
    for y in 0..m0.height() {
        for x in 0..m0.width() {
            if !roi.contains(langseg::Pixel::new(x, y)) {
                assert_eq!(m0.get(x, y), m1.get(x, y), "({x},{y}) changed outside the roi");
            }
        }
    }
    assert_eq!(after["rois"][0]["status"], "accepted");
    assert_eq!(after["history"].as_array().unwrap().len(), 2);

    // Staging then rejecting on the second roi leaves the mask alone.
    let (s, _) = call_json(&app, "POST", &format!("/sessions/{id}/rois/1/command"), Some(json!({ "text": "Mark this region as foreground." }))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call_json(&app, "POST", &format!("/sessions/{id}/rois/1/reject"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, later) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(later["maskPgm"], after["maskPgm"]);

    let (s, text) = call(&app, "GET", &format!("/sessions/{id}/replay"), None).await;
    assert_eq!(s, StatusCode::OK);
    let transcript = Transcript::parse(std::str::from_utf8(&text).unwrap()).unwrap();
    let image = io::image_from_pgm(&decode_pgm(later["imagePgm"].as_str().unwrap()).unwrap());
    let rebuilt = transcript
        .replay(&image, &labels(&later, "initialMaskPgm"), ExecConfig::default())
        .unwrap();
    assert_eq!(rebuilt, labels(&later, "maskPgm"));
}

#[tokio::test]
async fn identical_sessions_end_identical() {
    let app = app(None);
    let mut finals = Vec::new();
    for _ in 0..2 {
        let (id, v) = synth_session(&app, 9).await;
        let n = v["rois"].as_array().unwrap().len();
        for k in 0..n.min(3) {
            let (s, _) = call_json(&app, "POST", &format!("/sessions/{id}/rois/{k}/command"), Some(json!({ "text": "Expand the boundary at the left and fill up the holes." }))).await;
            assert_eq!(s, StatusCode::OK);
            call_json(&app, "POST", &format!("/sessions/{id}/rois/{k}/accept"), None).await;
        }
        let (_, full) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
        finals.push((full["maskPgm"].clone(), full["history"].clone()));
    }
    assert_eq!(finals[0], finals[1]);
}

#[tokio::test]
async fn service_and_cli_agree_on_the_eta_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (mask_b64, roi, img_path, mask_path) = write_fixture(dir.path());
    let command = fixture_command();
    let trace_path = dir.path().join("eta.csv");
    let out_path = dir.path().join("out.pgm");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_langseg"))
        .args(["refine", "--image"])
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path)
        .args(["--roi", &roi.to_string(), "--command", &command, "--out"])
        .arg(&out_path)
        .arg("--eta-trace")
        .arg(&trace_path)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(&trace_path).unwrap();
    let cli: Vec<(usize, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert!(!cli.is_empty());

    let app = app(Some(dir.path().to_path_buf()));
    let (_, v) = call_json(&app, "POST", "/sessions", Some(json!({ "imageRef": "lobe", "maskPgm": mask_b64, "rois": [roi] }))).await;
    let id = v["sessionId"].as_str().unwrap();
    let (_, cmd) = call_json(&app, "POST", &format!("/sessions/{id}/rois/0/command"), Some(json!({ "text": command }))).await;
    let svc: Vec<(usize, f64)> = cmd["etaTrace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["t"].as_u64().unwrap() as usize, e["eta"].as_f64().unwrap()))
        .collect();
    assert_eq!(cli, svc);

    let cli_mask = io::mask_from_pgm(&io::read_pgm(&std::fs::read(&out_path).unwrap()).unwrap());
    call_json(&app, "POST", &format!("/sessions/{id}/rois/0/accept"), None).await;
    let (_, full) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(labels(&full, "maskPgm").class_mask(1), cli_mask);
}
