#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use jsonschema::{Resource, Validator};
use qmoves::service::{router, AppState};
use qmoves::{Lab, RunConfig};
use qmoves_core::PhysicsConfig;
use serde_json::Value;
use tower::ServiceExt;

pub const SCHEMA_BASE: &str = "https://qmoves.invalid/schemas/";

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn read_schema(name: &str) -> Value {
    let text = std::fs::read_to_string(schema_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Validator for one of the shipped schemas, with the others available to `$ref`.
pub fn validator(name: &str) -> Validator {
    let mut options = jsonschema::options().should_validate_formats(true);
    for entry in std::fs::read_dir(schema_dir()).unwrap() {
        let file = entry.unwrap().file_name().into_string().unwrap();
        let resource = Resource::from_contents(read_schema(&file)).unwrap();
        options = options.with_resource(format!("{SCHEMA_BASE}{file}"), resource);
    }
    options.build(&read_schema(name)).unwrap()
}

pub fn assert_valid(schema: &str, value: &Value) {
    let v = validator(schema);
    let errors: Vec<String> = v
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}\n{value}");
}

/// Coarse configuration that keeps every request well under a second.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig {
        physics: PhysicsConfig {
            grid_points: 128,
            ..PhysicsConfig::default()
        },
        ..RunConfig::default()
    };
    cfg.lattice.len = 32;
    cfg
}

pub struct TestApp {
    pub state: Arc<AppState>,
    pub app: Router,
    pub dir: tempfile::TempDir,
}

pub fn app_with(cfg: RunConfig, static_dir: Option<&Path>) -> TestApp {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new(Lab::new(cfg).unwrap(), dir.path()).unwrap();
    let app = router(Arc::clone(&state), static_dir);
    TestApp { state, app, dir }
}

impl TestApp {
    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Value) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = serde_json::from_slice(&bytes)
            .unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send(Request::get(uri).body(Body::empty()).unwrap())
            .await
    }

    pub async fn post(&self, uri: &str, body: &Value) -> (StatusCode, Value) {
        self.post_raw(uri, body.to_string()).await
    }

    pub async fn post_raw(&self, uri: &str, body: String) -> (StatusCode, Value) {
        let req = Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body))
            .unwrap();
        self.send(req).await
    }
}

/// Uniform samples of `f` on `[0, T]`.
pub fn samples(duration: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let t = duration * i as f64 / (n - 1) as f64;
            [t, f(t)]
        })
        .collect()
}
