//! HTTP/1.1 facade over [`Service`]. Bodies are canonical JSON documents;
//! errors carry `{status, code, message}`.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;

use dress_core::assessment::{ScanExport, SizeBand, UseCasePhase};
use dress_core::insights::{CohortFilter, Subject, DEFAULT_TOP_FLAGGED};
use dress_core::{doc, Role, Timestamp};

use crate::error::ServiceError;
use crate::service::{
    MitigationPatch, NewEngagement, NewFeedback, NewMitigation, NewOrganization, NewPrincipleMap, NewScenario,
    NewUseCase, OpenScanRequest, ResponseBody, RevisionRequest, ScenarioPatch, Service,
};

pub const OPENAPI_DOCUMENT: &str = include_str!("../openapi.json");

/// Bearer tokens. With no tokens configured every request is allowed.
/// A token restricted to roles may read and answer questions of those
/// roles only.
#[derive(Debug, Clone, Default)]
pub struct Auth {
    tokens: BTreeMap<String, Option<BTreeSet<Role>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Access {
    Full,
    Roles(BTreeSet<Role>),
}

impl Auth {
    /// Parse `TOKEN` or `TOKEN:Role,Role` specs.
    pub fn from_specs<S: AsRef<str>>(specs: &[S]) -> Result<Self, ServiceError> {
        let mut tokens = BTreeMap::new();
        for spec in specs {
            let spec = spec.as_ref();
            let (token, roles) = match spec.split_once(':') {
                None => (spec, None),
                Some((t, r)) => {
                    let roles = r
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.trim().parse::<Role>())
                        .collect::<Result<BTreeSet<_>, _>>()?;
                    (t, Some(roles))
                }
            };
            if token.is_empty() {
                return Err(ServiceError::BadRequest("empty token".into()));
            }
            tokens.insert(token.to_string(), roles);
        }
        Ok(Auth { tokens })
    }

    pub fn is_open(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check(&self, headers: &HeaderMap) -> Result<Access, ServiceError> {
        if self.is_open() {
            return Ok(Access::Full);
        }
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ServiceError::Unauthorized)?;
        match self.tokens.get(token.trim()) {
            None => Err(ServiceError::Unauthorized),
            Some(None) => Ok(Access::Full),
            Some(Some(roles)) => Ok(Access::Roles(roles.clone())),
        }
    }
}

impl Access {
    fn require_full(&self) -> Result<(), ServiceError> {
        match self {
            Access::Full => Ok(()),
            Access::Roles(_) => Err(ServiceError::RoleNotPermitted("non-respondent operation".into())),
        }
    }

    fn require_role(&self, role: Role) -> Result<(), ServiceError> {
        match self {
            Access::Roles(roles) if !roles.contains(&role) => Err(ServiceError::RoleNotPermitted(role.to_string())),
            _ => Ok(()),
        }
    }
}

pub struct AppState {
    pub service: Service,
    pub auth: Auth,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(code = self.code(), "{self}");
        }
        document(status, &self.body())
    }
}

fn document<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match doc::to_canonical(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

type Reply = Result<Response, ServiceError>;

fn ok<T: Serialize>(value: T) -> Reply {
    Ok(document(StatusCode::OK, &value))
}

fn created<T: Serialize>(value: T) -> Reply {
    Ok(document(StatusCode::CREATED, &value))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(bytes).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn query(raw: Option<String>) -> BTreeMap<String, String> {
    form_urlencoded::parse(raw.unwrap_or_default().as_bytes())
        .into_owned()
        .collect()
}

fn query_value<T: DeserializeOwned>(q: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ServiceError> {
    q.get(key)
        .map(|v| {
            serde_json::from_value(serde_json::Value::String(v.clone()))
                .or_else(|_| serde_json::from_str(v))
                .map_err(|e| ServiceError::BadRequest(format!("query `{key}`: {e}")))
        })
        .transpose()
}

fn cohort_filter(q: &BTreeMap<String, String>) -> Result<CohortFilter, ServiceError> {
    Ok(CohortFilter {
        sector: q.get("sector").cloned(),
        size_band: query_value::<SizeBand>(q, "size_band")?,
        lifecycle_phase: query_value::<UseCasePhase>(q, "lifecycle_phase")?,
        from: query_value::<Timestamp>(q, "from")?,
        to: query_value::<Timestamp>(q, "to")?,
    })
}

/// Run a service call off the async workers; store operations do file IO.
async fn blocking<T: Send + 'static>(
    st: &Arc<AppState>,
    f: impl FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    let st = Arc::clone(st);
    tokio::task::spawn_blocking(move || f(&st.service))
        .await
        .map_err(|e| ServiceError::Internal(format!("handler aborted: {e}")))?
}

type St = State<Arc<AppState>>;

async fn health(State(st): St) -> Reply {
    let counts = blocking(&st, |s| Ok(s.counts())).await?;
    ok(serde_json::json!({"status": "ok", "entities": counts}))
}

async fn openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI_DOCUMENT).into_response()
}

async fn create_org(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: NewOrganization = body(&b)?;
    created(blocking(&st, move |s| s.create_organization(req)).await?)
}

async fn get_org(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.organization(&id)).await?)
}

async fn create_uc(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: NewUseCase = body(&b)?;
    created(blocking(&st, move |s| s.create_use_case(req)).await?)
}

async fn get_uc(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.use_case(&id)).await?)
}

async fn open_scan(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: OpenScanRequest = body(&b)?;
    created(blocking(&st, move |s| s.open_scan(req)).await?)
}

async fn get_scan(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.scan(&id)).await?)
}

async fn questions(State(st): St, h: HeaderMap, Path(id): Path<String>, RawQuery(raw): RawQuery) -> Reply {
    let access = st.auth.check(&h)?;
    let q = query(raw);
    let mut role = q.get("role").cloned();
    if let Access::Roles(roles) = &access {
        match &role {
            Some(label) => access.require_role(label.parse::<Role>()?)?,
            None if roles.len() == 1 => role = roles.first().map(|r| r.to_string()),
            None => return Err(ServiceError::BadRequest("a role-scoped token must name `role`".into())),
        }
    }
    ok(blocking(&st, move |s| s.questions(&id, role.as_deref())).await?)
}

async fn respond(State(st): St, h: HeaderMap, Path(id): Path<String>, b: Bytes) -> Reply {
    let access = st.auth.check(&h)?;
    let req: ResponseBody = body(&b)?;
    access.require_role(req.role.parse::<Role>()?)?;
    ok(blocking(&st, move |s| s.respond(&id, req)).await?)
}

async fn import(State(st): St, h: HeaderMap, Path(id): Path<String>, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let export: ScanExport = body(&b)?;
    ok(blocking(&st, move |s| s.import(&id, &export)).await?)
}

async fn export_scan(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.export_scan(&id)).await?)
}

async fn close_scan(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?.require_full()?;
    ok(blocking(&st, move |s| s.close_scan(&id)).await?)
}

async fn profile(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.profile(&id)).await?)
}

async fn create_map(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: NewPrincipleMap = body(&b)?;
    created(blocking(&st, move |s| s.put_principle_map(req)).await?)
}

async fn get_map(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.principle_map(&id)).await?)
}

async fn gap(State(st): St, h: HeaderMap, Path(id): Path<String>, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?;
    let q = query(raw);
    let map_id = q
        .get("map_id")
        .cloned()
        .ok_or_else(|| ServiceError::BadRequest("query `map_id` is required".into()))?;
    let scan_id = q.get("scan_id").cloned();
    ok(blocking(&st, move |s| s.gap(&id, &map_id, scan_id.as_deref())).await?)
}

async fn create_scenario(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: NewScenario = body(&b)?;
    created(blocking(&st, move |s| s.add_scenario(req)).await?)
}

async fn patch_scenario(State(st): St, h: HeaderMap, Path(id): Path<String>, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: ScenarioPatch = body(&b)?;
    ok(blocking(&st, move |s| s.patch_scenario(&id, req)).await?)
}

async fn list_scenarios(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.scenarios(&id)).await?)
}

async fn prioritize(State(st): St, h: HeaderMap, Path(id): Path<String>, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let threshold = query_value::<u8>(&query(raw), "threshold")?;
    ok(blocking(&st, move |s| s.prioritize(&id, threshold)).await?)
}

async fn heatmap(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.heatmap(&id)).await?)
}

async fn create_mitigation(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: NewMitigation = body(&b)?;
    created(blocking(&st, move |s| s.add_mitigation(req)).await?)
}

async fn patch_mitigation(State(st): St, h: HeaderMap, Path(id): Path<String>, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: MitigationPatch = body(&b)?;
    ok(blocking(&st, move |s| s.patch_mitigation(&id, req)).await?)
}

async fn create_engagement(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: NewEngagement = body(&b)?;
    created(blocking(&st, move |s| s.add_engagement(req)).await?)
}

async fn review(State(st): St, h: HeaderMap, Path(id): Path<String>) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, move |s| s.review(&id)).await?)
}

async fn benchmark(State(st): St, h: HeaderMap, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?;
    let q = query(raw);
    let subject = match (q.get("org_id"), q.get("uc_id")) {
        (Some(o), None) => Subject::Organization(o.clone()),
        (None, Some(u)) => Subject::UseCase(u.clone()),
        _ => return Err(ServiceError::BadRequest("name exactly one of `org_id`, `uc_id`".into())),
    };
    let filter = cohort_filter(&q)?;
    ok(blocking(&st, move |s| s.benchmark(&subject, &filter)).await?)
}

async fn aggregate(State(st): St, h: HeaderMap, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?;
    let q = query(raw);
    let filter = cohort_filter(&q)?;
    let top_k = query_value::<usize>(&q, "top_k")?.unwrap_or(DEFAULT_TOP_FLAGGED);
    ok(blocking(&st, move |s| s.aggregate(&filter, top_k)).await?)
}

async fn create_feedback(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?;
    let req: NewFeedback = body(&b)?;
    created(blocking(&st, move |s| s.add_feedback(req)).await?)
}

async fn candidates(State(st): St, h: HeaderMap, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?;
    let min_count = query_value::<usize>(&query(raw), "min_count")?.unwrap_or(1);
    ok(blocking(&st, move |s| s.candidates(min_count)).await?)
}

async fn load_bank(State(st): St, h: HeaderMap, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let text = String::from_utf8(b.to_vec()).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    created(blocking(&st, move |s| s.load_bank(&text)).await?)
}

async fn list_banks(State(st): St, h: HeaderMap) -> Reply {
    st.auth.check(&h)?;
    ok(blocking(&st, |s| s.list_banks()).await?)
}

async fn get_bank(State(st): St, h: HeaderMap, Path(id): Path<String>, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?;
    let version = query_value::<semver::Version>(&query(raw), "version")?;
    let bank = blocking(&st, move |s| s.get_bank(&id, version.as_ref())).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bank.to_document()).into_response())
}

async fn validate_bank(State(st): St, h: HeaderMap, Path(id): Path<String>, RawQuery(raw): RawQuery) -> Reply {
    st.auth.check(&h)?;
    let q = query(raw);
    let version = query_value::<semver::Version>(&q, "version")?;
    let tolerance = query_value::<f64>(&q, "tolerance")?;
    ok(blocking(&st, move |s| s.validate_bank(&id, version.as_ref(), tolerance)).await?)
}

async fn revise_bank(State(st): St, h: HeaderMap, Path(id): Path<String>, b: Bytes) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let req: RevisionRequest = body(&b)?;
    created(blocking(&st, move |s| s.revise_bank(&id, req)).await?)
}

async fn export(State(st): St, h: HeaderMap) -> Reply {
    st.auth.check(&h)?.require_full()?;
    let out = blocking(&st, |s| Ok(s.export_all())).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], out).into_response())
}

async fn fallback() -> Response {
    ServiceError::not_found("route", "").into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/openapi.json", get(openapi))
        .route("/orgs", post(create_org))
        .route("/orgs/{id}", get(get_org))
        .route("/use-cases", post(create_uc))
        .route("/use-cases/{id}", get(get_uc))
        .route("/use-cases/{id}/gap", get(gap))
        .route("/use-cases/{id}/scenarios", get(list_scenarios))
        .route("/use-cases/{id}/prioritize", post(prioritize))
        .route("/use-cases/{id}/heatmap", get(heatmap))
        .route("/use-cases/{id}/review", get(review))
        .route("/scans", post(open_scan))
        .route("/scans/{id}", get(get_scan))
        .route("/scans/{id}/questions", get(questions))
        .route("/scans/{id}/responses", put(respond))
        .route("/scans/{id}/import", post(import))
        .route("/scans/{id}/export", get(export_scan))
        .route("/scans/{id}/close", post(close_scan))
        .route("/scans/{id}/profile", get(profile))
        .route("/principle-maps", post(create_map))
        .route("/principle-maps/{id}", get(get_map))
        .route("/scenarios", post(create_scenario))
        .route("/scenarios/{id}", patch(patch_scenario))
        .route("/mitigations", post(create_mitigation))
        .route("/mitigations/{id}", patch(patch_mitigation))
        .route("/engagements", post(create_engagement))
        .route("/benchmark", get(benchmark))
        .route("/insights/aggregate", get(aggregate))
        .route("/feedback", post(create_feedback))
        .route("/feedback/candidates", get(candidates))
        .route("/banks", post(load_bank).get(list_banks))
        .route("/banks/{id}", get(get_bank))
        .route("/banks/{id}/validate", get(validate_bank))
        .route("/banks/{id}/revisions", post(revise_bank))
        .route("/export", get(export))
        .fallback(fallback)
        .with_state(state)
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
