use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use guesswho_core::GameSession;

/// One live game. The mutex serializes turns on the same session.
pub struct Slot {
    pub created_at: Instant,
    pub session: Mutex<GameSession>,
}

/// In-memory sessions that expire a fixed time after creation.
pub struct SessionStore {
    slots: RwLock<HashMap<String, Arc<Slot>>>,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore { slots: RwLock::default(), ttl }
    }

    pub fn insert(&self, session: GameSession) -> Arc<Slot> {
        let id = session.session_id().to_owned();
        let slot = Arc::new(Slot { created_at: Instant::now(), session: Mutex::new(session) });
        self.slots.write().unwrap_or_else(|p| p.into_inner()).insert(id, Arc::clone(&slot));
        slot
    }

    /// The live session, or `None` if it never existed or has expired.
    /// Expired sessions are dropped on the way.
    pub fn get(&self, id: &str) -> Option<Arc<Slot>> {
        let slot = self.slots.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()?;
        if slot.created_at.elapsed() < self.ttl {
            return Some(slot);
        }
        self.slots.write().unwrap_or_else(|p| p.into_inner()).remove(id);
        None
    }

    /// Drop every expired session and return how many went.
    pub fn sweep(&self) -> usize {
        let mut slots = self.slots.write().unwrap_or_else(|p| p.into_inner());
        let before = slots.len();
        slots.retain(|_, s| s.created_at.elapsed() < self.ttl);
        before - slots.len()
    }

    pub fn len(&self) -> usize {
        self.slots.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
