//! Turn-based game state.
//!
//! A [`GameSession`] holds the board, the hidden winner and the score. Every
//! question classifies all active cards (winner included) in one batch and
//! discards the cards whose answer differs from the winner's, so the winner
//! can never be eliminated. The game ends when one card is left or the
//! player guesses the winner.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{contrary_pair, neutral_pair, Catalog, CatalogError, PromptPair};
use crate::classifier::{predict_batch, BinaryPrediction, ClassifierError, EncoderBackend, ImageRef};

pub const DEFAULT_INITIAL_SCORE: u32 = 100;

/// Extra points lost when a question discards nothing.
pub const NO_DISCARD_PENALTY: u32 = 2;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid board: {0}")]
    InvalidBoard(String),
    #[error("image {0} appears more than once on the board")]
    DuplicateImage(ImageRef),
    #[error("the game is over")]
    GameOver,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Backend(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CardId(pub u32);

impl fmt::Display for CardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardStatus {
    Active,
    Discarded,
    GuessedWrong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCard {
    pub id: CardId,
    pub image_ref: ImageRef,
    pub status: CardStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameStatus {
    InProgress,
    WonByElimination,
    WonByGuess,
}

impl GameStatus {
    pub fn is_finished(self) -> bool {
        self != GameStatus::InProgress
    }
}

/// A yes/no question in one of the three prompt modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Question {
    /// A pre-set question from the catalog.
    FromList { attribute: String },
    /// Free text confronted with the neutral caption.
    OnePrompt { text: String },
    /// Two free-text captions of opposite meaning.
    TwoPrompts { text_a: String, text_b: String },
}

impl Question {
    pub fn prompt_pair(&self, catalog: &Catalog) -> Result<PromptPair, CatalogError> {
        match self {
            Question::FromList { attribute } => catalog.lookup_attribute(attribute),
            Question::OnePrompt { text } => neutral_pair(text),
            Question::TwoPrompts { text_a, text_b } => contrary_pair(text_a, text_b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnAction {
    Question { question: Question },
    Guess { card_id: CardId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    None,
    NoDiscard,
    Guess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub action: TurnAction,
    /// Absent for guesses.
    pub prompt_pair: Option<PromptPair>,
    /// The winner's answer to the question; absent for guesses.
    pub winner_prediction: Option<BinaryPrediction>,
    /// Cards still active after the turn.
    pub kept_ids: Vec<CardId>,
    pub discarded_ids: Vec<CardId>,
    pub score_before: u32,
    pub score_after: u32,
    pub penalty_applied: Penalty,
    pub status_after: GameStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringAction {
    Question,
    Guess,
}

/// Penalty for selecting a winner directly: grows as fewer cards remain.
pub fn guess_penalty(initial_board_size: u32, remaining: u32) -> u32 {
    initial_board_size.div_ceil(remaining.max(1))
}

/// Score after one turn, floored at zero.
///
/// For a question, `remaining` is the number of active cards after
/// elimination; the score drops by that number, and by two more points when
/// nothing was discarded. For a guess, `remaining` is the number of active
/// cards before the guess and the score drops by
/// `ceil(initial_board_size / remaining)`.
pub fn apply_scoring(
    score: u32,
    remaining: u32,
    discarded_count: u32,
    action: ScoringAction,
    initial_board_size: u32,
) -> u32 {
    let loss = match action {
        ScoringAction::Question if discarded_count == 0 => remaining + NO_DISCARD_PENALTY,
        ScoringAction::Question => remaining,
        ScoringAction::Guess => guess_penalty(initial_board_size, remaining),
    };
    score.saturating_sub(loss)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Elimination {
    pub kept: Vec<CardId>,
    pub discarded: Vec<CardId>,
}

/// Split cards by whether their answer matches the winner's. Input order is
/// preserved within each side.
pub fn compute_elimination(
    predictions: &[(CardId, BinaryPrediction)],
    winner_prediction: &BinaryPrediction,
) -> Elimination {
    let (kept, discarded): (Vec<_>, Vec<_>) = predictions
        .iter()
        .partition(|(_, p)| p.decision == winner_prediction.decision);
    Elimination {
        kept: kept.into_iter().map(|(id, _)| id).collect(),
        discarded: discarded.into_iter().map(|(id, _)| id).collect(),
    }
}

/// One game. Turns must be applied one at a time; distinct sessions are
/// independent.
#[derive(Debug, Clone)]
pub struct GameSession {
    session_id: String,
    cards: Vec<ImageCard>,
    winner: CardId,
    score: u32,
    initial_score: u32,
    history: Vec<TurnRecord>,
    status: GameStatus,
}

impl GameSession {
    /// Deal a board, one card per image, and pick the winner uniformly with
    /// the seed.
    pub fn new(
        session_id: impl Into<String>,
        image_refs: Vec<ImageRef>,
        seed: u64,
        initial_score: u32,
    ) -> Result<Self, EngineError> {
        if image_refs.len() < 2 {
            return Err(EngineError::InvalidBoard(format!(
                "a board needs at least 2 images, got {}",
                image_refs.len()
            )));
        }
        if image_refs.len() > u32::MAX as usize {
            return Err(EngineError::InvalidBoard("board too large".into()));
        }
        let mut seen = HashSet::with_capacity(image_refs.len());
        for r in &image_refs {
            if !seen.insert(r) {
                return Err(EngineError::DuplicateImage(r.clone()));
            }
        }
        let cards: Vec<ImageCard> = image_refs
            .into_iter()
            .enumerate()
            .map(|(i, image_ref)| ImageCard { id: CardId(i as u32), image_ref, status: CardStatus::Active })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let winner = cards[rng.gen_range(0..cards.len())].id;
        Ok(GameSession {
            session_id: session_id.into(),
            cards,
            winner,
            score: initial_score,
            initial_score,
            history: Vec::new(),
            status: GameStatus::InProgress,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn cards(&self) -> &[ImageCard] {
        &self.cards
    }

    pub fn card(&self, id: CardId) -> Option<&ImageCard> {
        self.cards.get(id.0 as usize)
    }

    pub fn score(&self) -> u32 {
        self.score
    }

    pub fn initial_score(&self) -> u32 {
        self.initial_score
    }

    pub fn status(&self) -> GameStatus {
        self.status
    }

    pub fn history(&self) -> &[TurnRecord] {
        &self.history
    }

    pub fn initial_board_size(&self) -> u32 {
        self.cards.len() as u32
    }

    /// The hidden winner; only for server-side use. Player-facing views go
    /// through [`GameSession::snapshot`].
    pub fn winner_id(&self) -> CardId {
        self.winner
    }

    pub fn active_ids(&self) -> Vec<CardId> {
        self.cards.iter().filter(|c| c.status == CardStatus::Active).map(|c| c.id).collect()
    }

    fn ensure_in_progress(&self) -> Result<(), EngineError> {
        if self.status.is_finished() {
            Err(EngineError::GameOver)
        } else {
            Ok(())
        }
    }

    /// Ask a question. On any error the session is left unchanged.
    pub fn ask<B: EncoderBackend + ?Sized>(
        &mut self,
        question: &Question,
        catalog: &Catalog,
        backend: &B,
    ) -> Result<&TurnRecord, EngineError> {
        self.ensure_in_progress()?;
        let pair = question.prompt_pair(catalog)?;

        let active: Vec<&ImageCard> =
            self.cards.iter().filter(|c| c.status == CardStatus::Active).collect();
        let refs: Vec<ImageRef> = active.iter().map(|c| c.image_ref.clone()).collect();
        let batch = predict_batch(backend, &refs, &pair)?;
        let mut predictions = Vec::with_capacity(batch.len());
        for (card, p) in active.iter().zip(batch) {
            predictions.push((card.id, p?));
        }
        let winner_prediction = predictions
            .iter()
            .find(|(id, _)| *id == self.winner)
            .map(|(_, p)| *p)
            .expect("winner is active while the game is in progress");

        let Elimination { kept, discarded } = compute_elimination(&predictions, &winner_prediction);
        for id in &discarded {
            self.cards[id.0 as usize].status = CardStatus::Discarded;
        }
        let score_before = self.score;
        self.score = apply_scoring(
            score_before,
            kept.len() as u32,
            discarded.len() as u32,
            ScoringAction::Question,
            self.initial_board_size(),
        );
        if kept.len() == 1 {
            self.status = GameStatus::WonByElimination;
        }
        let penalty_applied = if discarded.is_empty() { Penalty::NoDiscard } else { Penalty::None };
        self.history.push(TurnRecord {
            turn: self.history.len() + 1,
            action: TurnAction::Question { question: question.clone() },
            prompt_pair: Some(pair),
            winner_prediction: Some(winner_prediction),
            kept_ids: kept,
            discarded_ids: discarded,
            score_before,
            score_after: self.score,
            penalty_applied,
            status_after: self.status,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Select a card as the winner. The guess penalty applies whether or not
    /// the guess is right; a wrong guess removes the card from play.
    pub fn guess(&mut self, card_id: CardId) -> Result<&TurnRecord, EngineError> {
        self.ensure_in_progress()?;
        let card = self
            .card(card_id)
            .ok_or_else(|| EngineError::InvalidTarget(format!("no card {card_id}")))?;
        if card.status != CardStatus::Active {
            return Err(EngineError::InvalidTarget(format!("card {card_id} is not active")));
        }
        let remaining_before = self.active_ids().len() as u32;
        let score_before = self.score;
        self.score = apply_scoring(
            score_before,
            remaining_before,
            0,
            ScoringAction::Guess,
            self.initial_board_size(),
        );
        if card_id == self.winner {
            self.status = GameStatus::WonByGuess;
        } else {
            self.cards[card_id.0 as usize].status = CardStatus::GuessedWrong;
            if remaining_before - 1 == 1 {
                self.status = GameStatus::WonByElimination;
            }
        }
        self.history.push(TurnRecord {
            turn: self.history.len() + 1,
            action: TurnAction::Guess { card_id },
            prompt_pair: None,
            winner_prediction: None,
            kept_ids: self.active_ids(),
            discarded_ids: Vec::new(),
            score_before,
            score_after: self.score,
            penalty_applied: Penalty::Guess,
            status_after: self.status,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Player-visible state. The winner is revealed only once the game ends.
    pub fn snapshot(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            cards: self.cards.clone(),
            score: self.score,
            initial_score: self.initial_score,
            remaining: self.active_ids().len(),
            status: self.status,
            history: self.history.clone(),
            winner_id: self.status.is_finished().then_some(self.winner),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub cards: Vec<ImageCard>,
    pub score: u32,
    pub initial_score: u32,
    pub remaining: usize,
    pub status: GameStatus,
    pub history: Vec<TurnRecord>,
    pub winner_id: Option<CardId>,
}
