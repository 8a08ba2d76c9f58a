//! The `play` subcommand: a line-oriented client for the game server.

use std::io::{BufRead, Write};

use anyhow::{anyhow, Context};
use serde_json::{json, Value};

use guesswho_core::engine::{CardStatus, GameStatus};
use guesswho_core::Question;
use guesswho_service::api::{AttributeInfo, SessionResponse, TurnResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Ask(Question),
    Guess(u32),
    Board,
    Show(u32),
    Attributes,
    New,
    Help,
    Quit,
}

pub const HELP: &str = "\
commands:
  ask <attribute>        pre-set question, e.g. `ask male`
  say <caption>          your caption against \"A picture of a person\"
  versus <a> / <b>       two captions of opposite meaning
  guess <card>           pick the winner directly (costs points)
  board                  show the board
  show <card>            print the image URL of a card
  attributes             list the pre-set questions
  new                    start over on a fresh board
  quit";

pub fn parse_command(line: &str) -> Result<Command, String> {
    let line = line.trim();
    let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim();
    let card = |s: &str| s.parse::<u32>().map_err(|_| format!("{s:?} is not a card number"));
    let needs = |what: &str| if rest.is_empty() { Err(format!("{head} needs {what}")) } else { Ok(()) };
    match head.to_ascii_lowercase().as_str() {
        "ask" => needs("an attribute").map(|_| Command::Ask(Question::FromList { attribute: rest.to_owned() })),
        "say" => needs("a caption").map(|_| Command::Ask(Question::OnePrompt { text: rest.to_owned() })),
        "versus" => {
            let (a, b) = rest.split_once(" / ").ok_or("use `versus <caption a> / <caption b>`")?;
            Ok(Command::Ask(Question::TwoPrompts { text_a: a.trim().to_owned(), text_b: b.trim().to_owned() }))
        }
        "guess" => card(rest).map(Command::Guess),
        "show" => card(rest).map(Command::Show),
        "board" => Ok(Command::Board),
        "attributes" | "list" => Ok(Command::Attributes),
        "new" => Ok(Command::New),
        "help" | "?" => Ok(Command::Help),
        "quit" | "exit" => Ok(Command::Quit),
        "" => Err("empty command".into()),
        other => Err(format!("unknown command {other:?}; try `help`")),
    }
}

/// The server operations the client needs.
pub trait GameApi {
    fn create_session(&self, seed: Option<u64>) -> anyhow::Result<SessionResponse>;
    fn ask(&self, session: &str, question: &Question) -> anyhow::Result<TurnResponse>;
    fn guess(&self, session: &str, card: u32) -> anyhow::Result<TurnResponse>;
    fn attributes(&self) -> anyhow::Result<Vec<AttributeInfo>>;
    fn base_url(&self) -> &str;
}

pub struct HttpApi {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpApi {
    pub fn new(base: &str) -> Self {
        HttpApi { base: base.trim_end_matches('/').to_owned(), client: reqwest::blocking::Client::new() }
    }

    fn decode<T: serde::de::DeserializeOwned>(resp: reqwest::blocking::Response) -> anyhow::Result<T> {
        let status = resp.status();
        let body: Value = resp.json().context("reading server response")?;
        if !status.is_success() {
            let message = body["message"].as_str().unwrap_or("request failed");
            let hint = match body["detail"]["nearest"].as_array() {
                Some(n) if !n.is_empty() && !message.contains("did you mean") => {
                    let names: Vec<&str> = n.iter().filter_map(Value::as_str).collect();
                    format!(" (did you mean: {})", names.join(", "))
                }
                _ => String::new(),
            };
            return Err(anyhow!("{message}{hint}"));
        }
        Ok(serde_json::from_value(body)?)
    }

    fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: Value) -> anyhow::Result<T> {
        let resp = self.client.post(format!("{}{path}", self.base)).json(&body).send()?;
        Self::decode(resp)
    }
}

impl GameApi for HttpApi {
    fn create_session(&self, seed: Option<u64>) -> anyhow::Result<SessionResponse> {
        self.post("/sessions", json!({ "seed": seed }))
    }

    fn ask(&self, session: &str, question: &Question) -> anyhow::Result<TurnResponse> {
        self.post(&format!("/sessions/{session}/questions"), serde_json::to_value(question)?)
    }

    fn guess(&self, session: &str, card: u32) -> anyhow::Result<TurnResponse> {
        self.post(&format!("/sessions/{session}/guess"), json!({ "card_id": card }))
    }

    fn attributes(&self) -> anyhow::Result<Vec<AttributeInfo>> {
        Self::decode(self.client.get(format!("{}/attributes", self.base)).send()?)
    }

    fn base_url(&self) -> &str {
        &self.base
    }
}

pub fn render_board(s: &SessionResponse) -> String {
    let mut out = String::new();
    for row in s.cards.chunks(8) {
        let cells: Vec<String> = row
            .iter()
            .map(|c| {
                let mark = match c.status {
                    CardStatus::Active => ' ',
                    CardStatus::Discarded => 'x',
                    CardStatus::GuessedWrong => '?',
                };
                format!("{:>3}[{mark}]", c.id)
            })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out.push_str(&format!("score {}  remaining {}", s.score, s.remaining));
    out
}

fn render_status(s: &SessionResponse) -> Option<String> {
    let winner = s.winner_id.map(|w| w.to_string()).unwrap_or_default();
    match s.status {
        GameStatus::InProgress => None,
        GameStatus::WonByElimination => Some(format!("only card {winner} is left. final score {}", s.score)),
        GameStatus::WonByGuess => Some(format!("card {winner} it is! final score {}", s.score)),
    }
}

/// Read commands until `quit` or end of input.
pub fn run<A: GameApi, R: BufRead, W: Write>(api: &A, input: R, mut out: W, seed: Option<u64>) -> anyhow::Result<()> {
    let mut session = api.create_session(seed)?;
    writeln!(out, "new board, {} cards. type `help` for commands.", session.cards.len())?;
    writeln!(out, "{}", render_board(&session))?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let command = match parse_command(&line) {
            Ok(c) => c,
            Err(e) => {
                writeln!(out, "error: {e}")?;
                continue;
            }
        };
        let turn = match command {
            Command::Quit => break,
            Command::Help => {
                writeln!(out, "{HELP}")?;
                continue;
            }
            Command::Board => {
                writeln!(out, "{}", render_board(&session))?;
                continue;
            }
            Command::Show(id) => {
                match session.cards.iter().find(|c| c.id.0 == id) {
                    Some(c) => writeln!(out, "{}{}", api.base_url(), c.image_url)?,
                    None => writeln!(out, "error: no card {id}")?,
                }
                continue;
            }
            Command::Attributes => {
                for a in api.attributes()? {
                    let warn = a.warning.map(|w| format!("  ({w})")).unwrap_or_default();
                    writeln!(out, "{:<20} {}{warn}", a.name, a.target)?;
                }
                continue;
            }
            Command::New => {
                session = api.create_session(None)?;
                writeln!(out, "{}", render_board(&session))?;
                continue;
            }
            Command::Ask(q) => api.ask(&session.session_id, &q),
            Command::Guess(id) => api.guess(&session.session_id, id),
        };
        match turn {
            Ok(t) => {
                if let Some(p) = &t.turn.winner_prediction {
                    let answer = if p.decision == guesswho_core::Decision::Positive { "yes" } else { "no" };
                    writeln!(out, "answer: {answer} ({:.0}% sure)", p.confidence * 100.0)?;
                }
                let lost = t.turn.score_before - t.turn.score_after;
                writeln!(out, "discarded {} card(s), -{lost} points", t.turn.discarded_ids.len())?;
                session = t.session;
                writeln!(out, "{}", render_board(&session))?;
                if let Some(done) = render_status(&session) {
                    writeln!(out, "{done}")?;
                }
            }
            Err(e) => writeln!(out, "error: {e}")?,
        }
    }
    Ok(())
}
