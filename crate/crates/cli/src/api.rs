//! HTTP JSON API over one immutable session.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value as Json};

use hyperq::error::ErrorClass;
use hyperq::session::Session;
use hyperq::{Error, Result};

type Shared = Arc<Session>;

pub fn status_of(e: &Error) -> StatusCode {
    match e.class() {
        ErrorClass::Query => StatusCode::BAD_REQUEST,
        ErrorClass::Evaluation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorClass::Data => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn respond(status: StatusCode, body: &Json) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], crate::render(body)).into_response()
}

fn bad_request(message: &str) -> Response {
    respond(StatusCode::BAD_REQUEST, &json!({"error": {"kind": "BadRequest", "message": message}}))
}

/// Extracts the `hql` field of a JSON request body, or says what is wrong with it.
fn query_text(body: &Bytes) -> std::result::Result<String, String> {
    if body.is_empty() {
        return Err("request body is empty; expected {\"hql\": \"...\"}".into());
    }
    let v: Json = serde_json::from_slice(body).map_err(|e| format!("request body is not JSON: {e}"))?;
    match v.get("hql").and_then(Json::as_str) {
        Some(t) => Ok(t.to_string()),
        None => Err("request body lacks a string field `hql`".into()),
    }
}

async fn run(s: Shared, body: Bytes, f: fn(&Session, &str) -> Result<Json>) -> Response {
    let text = match query_text(&body) {
        Ok(t) => t,
        Err(m) => return bad_request(&m),
    };
    let out = tokio::task::spawn_blocking(move || f(&s, &text)).await;
    match out {
        Ok(Ok(v)) => respond(StatusCode::OK, &v),
        Ok(Err(e)) => respond(status_of(&e), &e.to_json()),
        Err(e) => respond(
            StatusCode::INTERNAL_SERVER_ERROR,
            &json!({"error": {"kind": "Internal", "message": e.to_string()}}),
        ),
    }
}

async fn whatif(State(s): State<Shared>, body: Bytes) -> Response {
    run(s, body, crate::whatif).await
}

async fn howto(State(s): State<Shared>, body: Bytes) -> Response {
    run(s, body, crate::howto).await
}

async fn validate(State(s): State<Shared>, body: Bytes) -> Response {
    run(s, body, |s, t| crate::check(Some(s), t)).await
}

async fn schema(State(s): State<Shared>) -> Response {
    respond(StatusCode::OK, &crate::schema(&s))
}

async fn dag(State(s): State<Shared>) -> Response {
    respond(StatusCode::OK, &crate::dag(&s))
}

async fn blocks(State(s): State<Shared>) -> Response {
    respond(StatusCode::OK, &crate::blocks(&s))
}

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/query/whatif", post(whatif))
        .route("/query/howto", post(howto))
        .route("/validate", post(validate))
        .route("/schema", get(schema))
        .route("/dag", get(dag))
        .route("/blocks", get(blocks))
        .with_state(session)
}

pub async fn serve(session: Session, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(session))).await
}
