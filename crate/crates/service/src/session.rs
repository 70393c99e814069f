//! Sessions: an action log replayed into network state and dag, plus the
//! in-memory store the HTTP API serves from.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tnet_core::codegen::{generate, CodegenError};
use tnet_core::lowering::ScriptError;
use tnet_core::network::NetworkError;
use tnet_core::optimizer::{run_pipeline, OptLevel, PassReport};
use tnet_core::{Lowerer, NetworkState, NodeId, OpDag, UserAction};

use crate::script::ActionScript;

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    pub opt_level: OptLevel,
    pub target: String,
}

impl Default for SessionSettings {
    fn default() -> Self {
        SessionSettings {
            opt_level: OptLevel::O0,
            target: "numpy".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("revision {given} is stale, the session is at revision {current}")]
    StaleRevision { given: u64, current: u64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::StaleRevision { .. } => "stale_revision",
            SessionError::Network(e) => e.code(),
            SessionError::Codegen(e) => codegen_code(e),
        }
    }
}

pub fn codegen_code(e: &CodegenError) -> &'static str {
    match e {
        CodegenError::UnsupportedTarget(_) => "unsupported_target",
        CodegenError::InvalidDag(_) => "invalid_dag",
        CodegenError::TooManyLabels { .. } => "too_many_labels",
    }
}

/// State, dag and code of a session, in the form compared across replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub opt_level: OptLevel,
    pub state: NetworkState,
    pub dag: OpDag,
    pub code_text: String,
}

impl Snapshot {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("snapshots always serialize");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagView {
    pub opt_level: OptLevel,
    pub dag: OpDag,
    pub schedule: Vec<Vec<NodeId>>,
    pub reports: Vec<PassReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    lowerer: Lowerer,
    log: Vec<UserAction>,
    revision: u64,
    settings: SessionSettings,
}

impl Session {
    pub fn new(settings: SessionSettings) -> Result<Self, SessionError> {
        generate(&OpDag::new(), &settings.target)?;
        Ok(Session {
            lowerer: Lowerer::new(),
            log: Vec::new(),
            revision: 0,
            settings,
        })
    }

    /// Rebuilds a session from its log; the revision equals the log length.
    pub fn replay(actions: &[UserAction], settings: SessionSettings) -> Result<Self, ScriptError> {
        let lowerer = tnet_core::lower_script(actions)?;
        Ok(Session {
            lowerer,
            log: actions.to_vec(),
            revision: actions.len() as u64,
            settings,
        })
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn state(&self) -> &NetworkState {
        self.lowerer.state()
    }

    pub fn log(&self) -> &[UserAction] {
        &self.log
    }

    pub fn script(&self) -> ActionScript {
        ActionScript::new(self.log.clone())
    }

    /// Applies one action if `revision` is current. The action is rejected,
    /// leaving the session untouched, when code cannot be generated for
    /// the result.
    pub fn apply(&mut self, revision: u64, action: &UserAction) -> Result<(), SessionError> {
        if revision != self.revision {
            return Err(SessionError::StaleRevision {
                given: revision,
                current: self.revision,
            });
        }
        let mut next = self.lowerer.clone();
        next.apply(action)?;
        let (dag, _) = run_pipeline(&next.dag(), self.settings.opt_level);
        generate(&dag, &self.settings.target)?;
        self.lowerer = next;
        self.log.push(action.clone());
        self.revision += 1;
        Ok(())
    }

    pub fn dag(&self, level: OptLevel) -> DagView {
        let (dag, reports) = run_pipeline(&self.lowerer.dag(), level);
        let schedule = dag
            .topo_levels()
            .unwrap_or_else(|e| panic!("lowered dags are acyclic: {e}"));
        DagView {
            opt_level: level,
            dag,
            schedule,
            reports,
        }
    }

    pub fn code(&self, level: OptLevel) -> Result<String, CodegenError> {
        let (dag, _) = run_pipeline(&self.lowerer.dag(), level);
        generate(&dag, &self.settings.target)
    }

    pub fn snapshot(&self) -> Result<Snapshot, CodegenError> {
        let level = self.settings.opt_level;
        let (dag, _) = run_pipeline(&self.lowerer.dag(), level);
        let code_text = generate(&dag, &self.settings.target)?;
        Ok(Snapshot {
            opt_level: level,
            state: self.state().clone(),
            dag,
            code_text,
        })
    }
}

/// A stored session and the time it was last used.
#[derive(Debug)]
pub struct Slot {
    pub session: RwLock<Session>,
    touched: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.touched.lock().unwrap() = Instant::now();
    }

    fn idle_since(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.touched.lock().unwrap())
    }
}

/// Sessions keyed by opaque id. Each session has its own lock, so distinct
/// sessions never wait on each other.
#[derive(Debug)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    ttl: Duration,
}

impl Default for SessionStore {
    fn default() -> Self {
        SessionStore::new(DEFAULT_TTL)
    }
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            sessions: RwLock::new(HashMap::new()),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn insert(&self, session: Session) -> (String, Arc<Slot>) {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let slot = Arc::new(Slot {
            session: RwLock::new(session),
            touched: Mutex::new(Instant::now()),
        });
        self.sessions.write().unwrap().insert(id.clone(), slot.clone());
        (id, slot)
    }

    /// Looks a session up and marks it as used. Expired sessions are gone
    /// even before the next sweep.
    pub fn get(&self, id: &str) -> Option<Arc<Slot>> {
        let slot = self.sessions.read().unwrap().get(id).cloned()?;
        if slot.idle_since(Instant::now()) > self.ttl {
            self.sessions.write().unwrap().remove(id);
            return None;
        }
        slot.touch();
        Some(slot)
    }

    pub fn remove(&self, id: &str) -> bool {
        self.sessions.write().unwrap().remove(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the TTL; returns how many.
    pub fn evict_expired(&self) -> usize {
        let now = Instant::now();
        let mut sessions = self.sessions.write().unwrap();
        let before = sessions.len();
        sessions.retain(|_, slot| slot.idle_since(now) <= self.ttl);
        before - sessions.len()
    }
}
