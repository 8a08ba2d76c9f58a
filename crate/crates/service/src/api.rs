use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use guesswho_core::catalog::Method;
use guesswho_core::engine::{CardId, CardStatus, GameStatus, TurnRecord};
use guesswho_core::{GameSession, Question};

use crate::error::ApiError;
use crate::state::AppState;
use crate::store::Slot;

type Shared = State<Arc<AppState>>;

pub fn routes(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/questions", post(ask_question))
        .route("/sessions/:id/guess", post(make_guess))
        .route("/attributes", get(list_attributes))
        .route("/cards/:sid/:cid/image", get(card_image))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardView {
    pub id: CardId,
    pub status: CardStatus,
    pub image_url: String,
}

/// What the player sees. `winner_id` stays empty until the game ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub cards: Vec<CardView>,
    pub score: u32,
    pub initial_score: u32,
    pub remaining: usize,
    pub status: GameStatus,
    pub history: Vec<TurnRecord>,
    pub winner_id: Option<CardId>,
}

impl SessionResponse {
    fn of(session: &GameSession) -> Self {
        let view = session.snapshot();
        let cards = view
            .cards
            .iter()
            .map(|c| CardView {
                id: c.id,
                status: c.status,
                image_url: format!("/cards/{}/{}/image", view.session_id, c.id),
            })
            .collect();
        SessionResponse {
            session_id: view.session_id,
            cards,
            score: view.score,
            initial_score: view.initial_score,
            remaining: view.remaining,
            status: view.status,
            history: view.history,
            winner_id: view.winner_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub turn: TurnRecord,
    pub session: SessionResponse,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Fixes the board and the winner; random when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessRequest {
    pub card_id: CardId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeInfo {
    pub name: String,
    pub target: String,
    pub counter: String,
    pub method: Method,
    pub warning: Option<String>,
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Slot>, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::session_not_found(id))
}

async fn create_session(State(state): Shared, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let request: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let seed = request.seed.unwrap_or_else(rand::random);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let board = sample(&mut rng, state.pool.len(), state.board_size)
        .into_iter()
        .map(|i| state.pool[i].clone())
        .collect();
    let id = uuid::Uuid::new_v4().to_string();
    let session = GameSession::new(id, board, rng.next_u64(), state.initial_score)?;
    let response = SessionResponse::of(&session);
    state.store.insert(session);
    Ok((StatusCode::CREATED, Json(response)))
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> Result<Json<SessionResponse>, ApiError> {
    let slot = lookup(&state, &id)?;
    let session = slot.session.lock().unwrap_or_else(|p| p.into_inner());
    Ok(Json(SessionResponse::of(&session)))
}

/// Run a turn off the async runtime. Turns on one session are serialized by
/// its lock, so concurrent requests see each other's results.
async fn run_turn(
    state: Arc<AppState>,
    slot: Arc<Slot>,
    turn: impl FnOnce(&AppState, &mut GameSession) -> Result<TurnRecord, ApiError> + Send + 'static,
) -> Result<Json<TurnResponse>, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut session = slot.session.lock().unwrap_or_else(|p| p.into_inner());
        let record = turn(&state, &mut session)?;
        Ok(Json(TurnResponse { turn: record, session: SessionResponse::of(&session) }))
    })
    .await
    .map_err(|e| ApiError::internal(format!("turn task failed: {e}")))?
}

async fn ask_question(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<Question>, JsonRejection>,
) -> Result<Json<TurnResponse>, ApiError> {
    let question = json_body(body)?;
    let slot = lookup(&state, &id)?;
    run_turn(Arc::clone(&state), slot, move |state, session| {
        Ok(session.ask(&question, &state.catalog, &state.backend)?.clone())
    })
    .await
}

async fn make_guess(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<GuessRequest>, JsonRejection>,
) -> Result<Json<TurnResponse>, ApiError> {
    let GuessRequest { card_id } = json_body(body)?;
    let slot = lookup(&state, &id)?;
    run_turn(Arc::clone(&state), slot, move |_, session| Ok(session.guess(card_id)?.clone())).await
}

async fn list_attributes(State(state): Shared) -> Json<Vec<AttributeInfo>> {
    let entries = state.catalog.entries().iter().map(|e| AttributeInfo {
        name: e.attribute.clone(),
        target: e.pair.target().to_owned(),
        counter: e.pair.counter().to_owned(),
        method: e.pair.method(),
        warning: e.warning(),
    });
    Json(entries.collect())
}

async fn card_image(
    State(state): Shared,
    Path((sid, cid)): Path<(String, u32)>,
) -> Result<Response, ApiError> {
    let slot = lookup(&state, &sid)?;
    let image = {
        let session = slot.session.lock().unwrap_or_else(|p| p.into_inner());
        let card = session
            .card(CardId(cid))
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "card_not_found", format!("no card {cid}")))?;
        card.image_ref.clone()
    };
    let bytes = tokio::fs::read(image.as_path()).await.map_err(|e| {
        ApiError::new(StatusCode::NOT_FOUND, "image_unavailable", format!("card {cid}: {e}"))
    })?;
    let mime = match image.as_path().extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(e) if e == "png" => "image/png",
        _ => "image/jpeg",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}
