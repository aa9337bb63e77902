//! In-memory logs and sessions, with optional JSON snapshots on disk.

use std::collections::{BTreeSet, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use rulemine_core::{
    parse_csv, parse_xes, CsvConfig, EventLog, LogError, ProcessTree, Rule, RuleStats,
};
use rulemine_llm::{
    ClientError, Conversation, HttpClient, LlmClient, Message, ProviderConfig, ScriptedClient,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Xes,
}

impl LogFormat {
    /// XES when the content looks like XML, CSV otherwise.
    pub fn sniff(content: &[u8]) -> LogFormat {
        let start = content.iter().find(|b| !b.is_ascii_whitespace());
        if start == Some(&b'<') {
            LogFormat::Xes
        } else {
            LogFormat::Csv
        }
    }

    pub fn from_path(path: &Path) -> LogFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("xes") => LogFormat::Xes,
            _ => LogFormat::Csv,
        }
    }
}

/// Parses an uploaded log; returns the log and the number of skipped events.
pub fn load_log(
    content: &[u8],
    format: LogFormat,
    csv: &CsvConfig,
) -> Result<(EventLog, usize), LogError> {
    match format {
        LogFormat::Csv => parse_csv(content, csv).map(|log| (log, 0)),
        LogFormat::Xes => parse_xes(content).map(|x| (x.log, x.skipped_events)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredLog {
    pub id: String,
    pub log: EventLog,
    pub skipped_events: usize,
}

/// How a session talks to an LLM. Provider keys are never written out.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClientSpec {
    Scripted {
        responses: Vec<String>,
        #[serde(default)]
        repeat: bool,
        #[serde(default)]
        delay_ms: u64,
    },
    Provider(ProviderConfig),
}

impl ClientSpec {
    pub fn build(&self) -> Result<Arc<dyn LlmClient>, ClientError> {
        match self {
            ClientSpec::Scripted {
                responses,
                repeat,
                delay_ms,
            } => {
                let mut client = ScriptedClient::new(responses.clone())
                    .with_delay(Duration::from_millis(*delay_ms));
                if *repeat {
                    client = client.repeating();
                }
                Ok(Arc::new(client))
            }
            ClientSpec::Provider(config) => {
                Ok(Arc::new(HttpClient::new(config.clone().with_env_key())?))
            }
        }
    }
}

/// Stand-in for a restored session whose credential is gone.
struct Unavailable(String);

impl LlmClient for Unavailable {
    fn complete(&self, _: &[Message]) -> Result<String, ClientError> {
        Err(ClientError::Credential(self.0.clone()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub sup: f64,
    pub rules: Vec<Rule>,
    #[serde(with = "tree_text")]
    pub tree: ProcessTree,
    pub warnings: Vec<String>,
}

mod tree_text {
    use rulemine_core::ProcessTree;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tree: &ProcessTree, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&tree.to_text())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ProcessTree, D::Error> {
        let text = String::deserialize(d)?;
        ProcessTree::parse_text(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub log_id: String,
    pub conversation: Conversation,
    /// Rules from the latest successful extraction, with their statistics.
    pub rules: Vec<RuleStats>,
    /// Every rule ever shown to or entered by the expert.
    pub presented: BTreeSet<Rule>,
    pub selected: Vec<Rule>,
    pub model: Option<ModelRecord>,
    pub models_built: u64,
    /// Warnings not yet handed out by a mutating request.
    pub pending_warnings: Vec<String>,
    pub client_spec: ClientSpec,
    #[serde(skip, default = "missing_client")]
    pub client: Arc<dyn LlmClient>,
}

fn missing_client() -> Arc<dyn LlmClient> {
    Arc::new(Unavailable("session restored without a client".into()))
}

impl Session {
    pub fn new(
        id: String,
        log: &StoredLog,
        conversation: Conversation,
        spec: ClientSpec,
        client: Arc<dyn LlmClient>,
    ) -> Self {
        debug_assert_eq!(conversation.alphabet(), log.log.alphabet());
        Session {
            id,
            log_id: log.id.clone(),
            conversation,
            rules: Vec::new(),
            presented: BTreeSet::new(),
            selected: Vec::new(),
            model: None,
            models_built: 0,
            pending_warnings: Vec::new(),
            client_spec: spec,
            client,
        }
    }

    pub fn set_selection(&mut self, rules: Vec<Rule>) {
        self.presented.extend(rules.iter().cloned());
        self.conversation.selected_rules = rules.iter().cloned().collect();
        self.selected = rules;
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.pending_warnings)
    }
}

pub type SessionSlot = Arc<Mutex<Session>>;

#[derive(Default)]
pub struct AppState {
    logs: RwLock<HashMap<String, Arc<StoredLog>>>,
    sessions: RwLock<HashMap<String, SessionSlot>>,
    state_dir: Option<PathBuf>,
}

impl AppState {
    pub fn in_memory() -> Self {
        AppState::default()
    }

    /// Loads any snapshots under `dir` and writes future changes there.
    pub fn with_state_dir(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("logs"))?;
        std::fs::create_dir_all(dir.join("sessions"))?;
        let state = AppState {
            state_dir: Some(dir.clone()),
            ..AppState::default()
        };
        for log in read_snapshots::<StoredLog>(&dir.join("logs"))? {
            state
                .logs
                .write()
                .unwrap()
                .insert(log.id.clone(), Arc::new(log));
        }
        for mut session in read_snapshots::<Session>(&dir.join("sessions"))? {
            session.client = match session.client_spec.build() {
                Ok(client) => client,
                Err(e) => Arc::new(Unavailable(e.to_string())),
            };
            state
                .sessions
                .write()
                .unwrap()
                .insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(state)
    }

    pub fn insert_log(&self, log: EventLog, skipped_events: usize) -> io::Result<Arc<StoredLog>> {
        let stored = Arc::new(StoredLog {
            id: new_id("log"),
            log,
            skipped_events,
        });
        self.write_snapshot("logs", &stored.id, stored.as_ref())?;
        self.logs
            .write()
            .unwrap()
            .insert(stored.id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn log(&self, id: &str) -> Option<Arc<StoredLog>> {
        self.logs.read().unwrap().get(id).cloned()
    }

    pub fn insert_session(&self, session: Session) -> io::Result<SessionSlot> {
        self.persist(&session)?;
        let id = session.id.clone();
        let slot = Arc::new(Mutex::new(session));
        self.sessions.write().unwrap().insert(id, slot.clone());
        Ok(slot)
    }

    pub fn session(&self, id: &str) -> Option<SessionSlot> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    pub fn persist(&self, session: &Session) -> io::Result<()> {
        self.write_snapshot("sessions", &session.id, session)
    }

    fn write_snapshot<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> io::Result<()> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let path = dir.join(kind).join(format!("{id}.json"));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
        std::fs::rename(tmp, path)
    }
}

pub fn new_id(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

fn read_snapshots<T: for<'de> Deserialize<'de>>(dir: &Path) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let bytes = std::fs::read(&path)?;
        let value = serde_json::from_slice(&bytes).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: {e}", path.display()),
            )
        })?;
        out.push(value);
    }
    Ok(out)
}
