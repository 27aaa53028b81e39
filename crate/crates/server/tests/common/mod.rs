#![allow(dead_code)]

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use dress_server::{router, AppState, Auth, Service, ServiceConfig};
use dress_store::Repository;

/// A clock that advances one second per reading, so every write has a
/// distinct, deterministic timestamp.
pub fn ticking_clock() -> dress_store::Clock {
    let t = Arc::new(AtomicI64::new(0));
    let base = Utc.with_ymd_and_hms(2026, 5, 1, 9, 0, 0).unwrap();
    Arc::new(move || base + chrono::Duration::seconds(t.fetch_add(1, Ordering::SeqCst)))
}

pub fn service() -> Service {
    Service::new(Repository::in_memory(Some(ticking_clock())), ServiceConfig::default()).unwrap()
}

pub fn app_with(service: Service, tokens: &[&str]) -> Router {
    router(Arc::new(AppState {
        service,
        auth: Auth::from_specs(tokens).unwrap(),
    }))
}

pub fn app() -> Router {
    app_with(service(), &[])
}

pub struct Reply {
    pub status: u16,
    pub raw: String,
    pub json: Value,
}

pub async fn call(app: &Router, method: &str, path: &str, token: Option<&str>, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let raw = String::from_utf8(bytes.to_vec()).unwrap();
    let json = serde_json::from_str(&raw).unwrap_or(Value::Null);
    Reply { status, raw, json }
}

pub async fn send(app: &Router, method: &str, path: &str, body: Value) -> Reply {
    call(app, method, path, None, Some(&body.to_string())).await
}

pub async fn get(app: &Router, path: &str) -> Reply {
    call(app, "GET", path, None, None).await
}

pub fn expect(r: &Reply, status: StatusCode) -> &Value {
    assert_eq!(r.status, status.as_u16(), "body: {}", r.raw);
    &r.json
}

pub fn scoping() -> Value {
    json!({"summary_of_challenges": "screening", "technical_specification": "ranking model"})
}

/// Organization and use-case ids of a fresh org with one use-case.
pub async fn org_and_use_case(app: &Router, phase: &str) -> (String, String) {
    let org = send(app, "POST", "/orgs", json!({"name": "Acme", "sector": "public", "size_band": "Medium"})).await;
    let org_id = expect(&org, StatusCode::CREATED)["org_id"].as_str().unwrap().to_string();
    let uc = send(
        app,
        "POST",
        "/use-cases",
        json!({"org_id": org_id, "title": "Job profiling", "lifecycle_phase": phase, "scoping": scoping()}),
    )
    .await;
    let uc_id = expect(&uc, StatusCode::CREATED)["uc_id"].as_str().unwrap().to_string();
    (org_id, uc_id)
}

pub async fn open(app: &Router, uc_id: &str) -> String {
    let r = send(app, "POST", "/scans", json!({"uc_id": uc_id})).await;
    expect(&r, StatusCode::CREATED)["scan_id"].as_str().unwrap().to_string()
}

/// Answer every question of the scan with `answer`.
pub async fn answer_all(app: &Router, scan_id: &str, answer: &str) {
    let qs = get(app, &format!("/scans/{scan_id}/questions")).await;
    for q in expect(&qs, StatusCode::OK)["questions"].as_array().unwrap() {
        let r = send(
            app,
            "PUT",
            &format!("/scans/{scan_id}/responses"),
            json!({"qid": q["qid"], "role": q["role"], "answer": answer}),
        )
        .await;
        expect(&r, StatusCode::OK);
    }
}

// ---------------------------------------------------------------------------
// Minimal structural check against the shipped OpenAPI schemas.

pub fn openapi() -> Value {
    serde_json::from_str(dress_server::http::OPENAPI_DOCUMENT).unwrap()
}

fn resolve<'a>(doc: &'a Value, schema: &'a Value) -> &'a Value {
    match schema.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let name = r.rsplit('/').next().unwrap();
            &doc["components"]["schemas"][name]
        }
        None => schema,
    }
}

pub fn conforms(doc: &Value, schema: &Value, value: &Value, at: &str) -> Result<(), String> {
    let schema = resolve(doc, schema);
    if value.is_null() && schema["nullable"] == json!(true) {
        return Ok(());
    }
    let fail = |what: &str| Err(format!("{at}: expected {what}, got {value}"));
    match schema.get("type").and_then(Value::as_str) {
        Some("object") => {
            let Some(obj) = value.as_object() else { return fail("object") };
            for req in schema["required"].as_array().into_iter().flatten() {
                let key = req.as_str().unwrap();
                if !obj.contains_key(key) {
                    return Err(format!("{at}: missing required `{key}`"));
                }
            }
            if let Some(props) = schema["properties"].as_object() {
                for (k, sub) in props {
                    if let Some(v) = obj.get(k) {
                        if !v.is_null() {
                            conforms(doc, sub, v, &format!("{at}.{k}"))?;
                        }
                    }
                }
            }
            Ok(())
        }
        Some("array") => {
            let Some(items) = value.as_array() else { return fail("array") };
            for (i, v) in items.iter().enumerate() {
                conforms(doc, &schema["items"], v, &format!("{at}[{i}]"))?;
            }
            Ok(())
        }
        Some("string") => {
            if !value.is_string() {
                return fail("string");
            }
            if let Some(options) = schema["enum"].as_array() {
                if !options.contains(value) {
                    return fail("enum member");
                }
            }
            Ok(())
        }
        Some("integer") => if value.is_i64() || value.is_u64() { Ok(()) } else { fail("integer") },
        Some("number") => if value.is_number() { Ok(()) } else { fail("number") },
        Some("boolean") => if value.is_boolean() { Ok(()) } else { fail("boolean") },
        _ => Ok(()),
    }
}

/// Check a response body against the documented schema for
/// `(method, template, status)`.
pub fn check_response(doc: &Value, method: &str, template: &str, reply: &Reply) {
    let op = &doc["paths"][template][method.to_lowercase()];
    assert!(op.is_object(), "{method} {template} is not documented");
    let status = reply.status.to_string();
    let resp = resolve_response(doc, &op["responses"][&status]);
    assert!(resp.is_object(), "{method} {template}: status {status} not documented ({})", reply.raw);
    let schema = &resp["content"]["application/json"]["schema"];
    if !schema.is_null() {
        conforms(doc, schema, &reply.json, &format!("{method} {template}")).unwrap();
    }
}

fn resolve_response<'a>(doc: &'a Value, r: &'a Value) -> &'a Value {
    match r.get("$ref").and_then(Value::as_str) {
        Some(p) => &doc["components"]["responses"][p.rsplit('/').next().unwrap()],
        None => r,
    }
}

/// Body was emitted in canonical form: sorted keys, no whitespace,
/// trailing newline.
pub fn assert_canonical(r: &Reply) {
    assert!(dress_core::doc::is_canonical_object(&r.raw) || r.raw == dress_core::doc::canonicalize(&r.json), "not canonical: {}", r.raw);
}
