//! Search agents: the replay fixture, a recorder, and live API transports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use newsaudit_core::probe::{ProbeKey, ProbeSpec, RawAnswer};

use crate::config::{Config, EngineConfig, EngineKind};
use crate::error::{Error, Result};
use crate::store;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentReply {
    pub text: String,
    pub meta: BTreeMap<String, String>,
    /// Set by agents that already know the answer time (replay).
    pub fetched_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct AgentError {
    pub message: String,
    pub retryable: bool,
}

impl AgentError {
    pub fn retryable(message: impl Into<String>) -> Self {
        AgentError {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        AgentError {
            message: message.into(),
            retryable: false,
        }
    }
}

pub trait SearchAgent: Send + Sync {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError>;
}

/// Engine id to agent. Read-only once built.
#[derive(Default, Clone)]
pub struct Registry {
    agents: BTreeMap<String, Arc<dyn SearchAgent>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, engine: impl Into<String>, agent: Arc<dyn SearchAgent>) {
        self.agents.insert(engine.into(), agent);
    }

    pub fn get(&self, engine: &str) -> Option<&Arc<dyn SearchAgent>> {
        self.agents.get(engine)
    }

    pub fn engines(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }

    /// Builds agents for every configured engine. A `replay` fixture
    /// replaces all live transports; `record` tees answers into a fixture.
    pub fn from_config(config: &Config, replay: Option<&Path>, record: Option<&Path>) -> Result<Registry> {
        let replay_path = replay.map(Path::to_path_buf).or_else(|| config.replay.clone());
        let shared_replay = match &replay_path {
            Some(p) if replay.is_some() || config.engines.iter().any(|e| e.kind == EngineKind::Replay) => {
                Some(Arc::new(ReplayAgent::load(p)?))
            }
            _ => None,
        };
        let recorder = record.map(|p| Arc::new(FixtureWriter::new(p)));
        let mut reg = Registry::new();
        for engine in &config.engines {
            let agent: Arc<dyn SearchAgent> = match (&shared_replay, engine.kind) {
                (Some(r), _) if replay.is_some() => r.clone(),
                (Some(r), EngineKind::Replay) => r.clone(),
                (None, EngineKind::Replay) => {
                    return Err(Error::Config(format!(
                        "engine {:?} replays a fixture but no `collection.replay` path is set",
                        engine.id
                    )))
                }
                _ => live_agent(engine, config.timeout)?,
            };
            let agent = match &recorder {
                Some(w) => Arc::new(RecordingAgent {
                    inner: agent,
                    writer: w.clone(),
                }) as Arc<dyn SearchAgent>,
                None => agent,
            };
            reg.insert(engine.id.clone(), agent);
        }
        Ok(reg)
    }
}

/// Answers from a stored RawAnswer file, byte for byte.
pub struct ReplayAgent {
    answers: BTreeMap<ProbeKey, RawAnswer>,
}

impl ReplayAgent {
    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<RawAnswer> = store::read_jsonl(path)?;
        Ok(Self::from_answers(records))
    }

    pub fn from_answers(records: impl IntoIterator<Item = RawAnswer>) -> Self {
        ReplayAgent {
            answers: records.into_iter().map(|a| (a.key.clone(), a)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl SearchAgent for ReplayAgent {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError> {
        match self.answers.get(&probe.key) {
            Some(a) => Ok(AgentReply {
                text: a.text.clone(),
                meta: a.meta.clone(),
                fetched_at: Some(a.fetched_at.clone()),
            }),
            None => Err(AgentError::fatal(format!("fixture miss for {}", probe.key))),
        }
    }
}

struct FixtureWriter {
    path: PathBuf,
    lock: Mutex<()>,
}

impl FixtureWriter {
    fn new(path: &Path) -> Self {
        FixtureWriter {
            path: path.to_path_buf(),
            lock: Mutex::new(()),
        }
    }
}

/// Passes queries through and appends each answer to a replay fixture.
pub struct RecordingAgent {
    inner: Arc<dyn SearchAgent>,
    writer: Arc<FixtureWriter>,
}

impl RecordingAgent {
    pub fn new(inner: Arc<dyn SearchAgent>, fixture: &Path) -> Self {
        RecordingAgent {
            inner,
            writer: Arc::new(FixtureWriter::new(fixture)),
        }
    }
}

impl SearchAgent for RecordingAgent {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError> {
        let mut reply = self.inner.query(probe)?;
        let fetched_at = reply.fetched_at.get_or_insert_with(crate::now_rfc3339).clone();
        let record = RawAnswer {
            key: probe.key.clone(),
            fetched_at,
            text: reply.text.clone(),
            meta: reply.meta.clone(),
        };
        let _guard = self.writer.lock.lock().unwrap_or_else(|e| e.into_inner());
        store::append_jsonl(&self.writer.path, &[record])
            .map_err(|e| AgentError::fatal(format!("recording failed: {e}")))?;
        Ok(reply)
    }
}

/// `NEWSAUDIT_<ENGINE>_KEY`, with the engine id upper-cased and
/// non-alphanumerics mapped to `_`.
pub fn credential_var(engine_id: &str) -> String {
    let id: String = engine_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("NEWSAUDIT_{id}_KEY")
}

fn credential(engine: &EngineConfig) -> Result<String> {
    let var = credential_var(&engine.id);
    std::env::var(&var).map_err(|_| Error::Config(format!("engine {:?} needs credentials in ${var}", engine.id)))
}

fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn live_agent(engine: &EngineConfig, timeout: Duration) -> Result<Arc<dyn SearchAgent>> {
    let model = || {
        engine
            .model
            .clone()
            .ok_or_else(|| Error::Config(format!("engine {:?} needs a `model`", engine.id)))
    };
    let http = http_agent(timeout);
    Ok(match engine.kind {
        EngineKind::Openai => Arc::new(OpenAiAgent {
            http,
            key: credential(engine)?,
            model: model()?,
            endpoint: engine
                .endpoint
                .clone()
                .unwrap_or_else(|| "https://api.openai.com/v1/chat/completions".into()),
        }),
        EngineKind::Anthropic => Arc::new(AnthropicAgent {
            http,
            key: credential(engine)?,
            model: model()?,
            endpoint: engine
                .endpoint
                .clone()
                .unwrap_or_else(|| "https://api.anthropic.com/v1/messages".into()),
        }),
        EngineKind::Gemini => Arc::new(GeminiAgent {
            http,
            key: credential(engine)?,
            model: model()?,
            endpoint: engine
                .endpoint
                .clone()
                .unwrap_or_else(|| "https://generativelanguage.googleapis.com/v1beta/models".into()),
        }),
        EngineKind::GoogleNews => Arc::new(GoogleNewsAgent {
            http,
            endpoint: engine
                .endpoint
                .clone()
                .unwrap_or_else(|| "https://news.google.com/rss/search".into()),
        }),
        EngineKind::Replay => unreachable!("replay engines are built from the fixture"),
    })
}

fn transport_error(e: ureq::Error) -> AgentError {
    let retryable = match &e {
        ureq::Error::StatusCode(code) => *code == 408 || *code == 429 || *code >= 500,
        ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => true,
        _ => false,
    };
    AgentError {
        message: e.to_string(),
        retryable,
    }
}

fn post_json(
    req: ureq::RequestBuilder<ureq::typestate::WithBody>,
    body: &Value,
) -> std::result::Result<(Value, BTreeMap<String, String>), AgentError> {
    let started = Instant::now();
    let mut resp = req.send_json(body).map_err(transport_error)?;
    let status = resp.status().as_u16();
    let value: Value = resp
        .body_mut()
        .read_json()
        .map_err(|e| AgentError::retryable(format!("unreadable response body: {e}")))?;
    let mut meta = BTreeMap::new();
    meta.insert("status".into(), status.to_string());
    meta.insert("latency_ms".into(), started.elapsed().as_millis().to_string());
    if let Some(m) = value.get("model").or_else(|| value.get("modelVersion")).and_then(Value::as_str) {
        meta.insert("model_version".into(), m.to_string());
    }
    Ok((value, meta))
}

fn empty_answer(engine: &str) -> AgentError {
    AgentError::retryable(format!("{engine} response carried no text"))
}

pub struct OpenAiAgent {
    http: ureq::Agent,
    key: String,
    model: String,
    endpoint: String,
}

impl SearchAgent for OpenAiAgent {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError> {
        let body = json!({
            "model": self.model,
            "web_search_options": {
                "user_location": {"type": "approximate", "approximate": {"country": "US"}}
            },
            "messages": [
                {"role": "system", "content": probe.system_prompt},
                {"role": "user", "content": probe.user_prompt}
            ]
        });
        let req = self
            .http
            .post(&self.endpoint)
            .header("Authorization", format!("Bearer {}", self.key));
        let (value, meta) = post_json(req, &body)?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| empty_answer("openai"))?;
        Ok(AgentReply {
            text: text.to_string(),
            meta,
            fetched_at: None,
        })
    }
}

pub struct AnthropicAgent {
    http: ureq::Agent,
    key: String,
    model: String,
    endpoint: String,
}

impl SearchAgent for AnthropicAgent {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError> {
        let body = json!({
            "model": self.model,
            "max_tokens": 2048,
            "system": probe.system_prompt,
            "messages": [{"role": "user", "content": probe.user_prompt}],
            "tools": [{
                "type": "web_search_20250305",
                "name": "web_search",
                "max_uses": 5,
                "user_location": {"type": "approximate", "country": "US"}
            }]
        });
        let req = self
            .http
            .post(&self.endpoint)
            .header("x-api-key", &self.key)
            .header("anthropic-version", "2023-06-01");
        let (value, meta) = post_json(req, &body)?;
        let text: String = value
            .get("content")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
            .filter_map(|b| b.get("text").and_then(Value::as_str))
            .collect();
        if text.is_empty() {
            return Err(empty_answer("anthropic"));
        }
        Ok(AgentReply {
            text,
            meta,
            fetched_at: None,
        })
    }
}

pub struct GeminiAgent {
    http: ureq::Agent,
    key: String,
    model: String,
    endpoint: String,
}

impl SearchAgent for GeminiAgent {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError> {
        let body = json!({
            "system_instruction": {"parts": [{"text": probe.system_prompt}]},
            "contents": [{"role": "user", "parts": [{"text": probe.user_prompt}]}],
            "tools": [{"google_search": {}}]
        });
        let url = format!("{}/{}:generateContent", self.endpoint.trim_end_matches('/'), self.model);
        let req = self.http.post(&url).header("x-goog-api-key", &self.key);
        let (value, meta) = post_json(req, &body)?;
        let text: String = value
            .pointer("/candidates/0/content/parts")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect();
        if text.is_empty() {
            return Err(empty_answer("gemini"));
        }
        Ok(AgentReply {
            text,
            meta,
            fetched_at: None,
        })
    }
}

/// The reference aggregator: Google News search RSS rendered in the same
/// "- Title (URL)" bullet form the agents are asked for.
pub struct GoogleNewsAgent {
    http: ureq::Agent,
    endpoint: String,
}

impl SearchAgent for GoogleNewsAgent {
    fn query(&self, probe: &ProbeSpec) -> std::result::Result<AgentReply, AgentError> {
        let started = Instant::now();
        let mut resp = self
            .http
            .get(&self.endpoint)
            .query("q", &probe.key.topic)
            .query("hl", "en-US")
            .query("gl", "US")
            .query("ceid", "US:en")
            .call()
            .map_err(transport_error)?;
        let status = resp.status().as_u16();
        let xml = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AgentError::retryable(format!("unreadable feed: {e}")))?;
        let items = parse_rss_items(&xml).map_err(|e| AgentError::retryable(format!("malformed feed: {e}")))?;
        let text = rss_to_bullets(&items);
        let mut meta = BTreeMap::new();
        meta.insert("status".into(), status.to_string());
        meta.insert("latency_ms".into(), started.elapsed().as_millis().to_string());
        meta.insert("items".into(), items.len().to_string());
        Ok(AgentReply {
            text,
            meta,
            fetched_at: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RssItem {
    pub title: String,
    pub link: String,
    /// Publisher home page from `<source url=...>`.
    pub source_url: Option<String>,
}

/// Items of an RSS 2.0 document, in feed order.
pub fn parse_rss_items(xml: &str) -> std::result::Result<Vec<RssItem>, String> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(xml);
    let mut items = Vec::new();
    let mut current: Option<RssItem> = None;
    let mut field: Option<&'static str> = None;
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            Event::Start(e) => match e.name().as_ref() {
                b"item" => current = Some(RssItem::default()),
                b"title" if current.is_some() => field = Some("title"),
                b"link" if current.is_some() => field = Some("link"),
                b"source" => {
                    if let Some(item) = current.as_mut() {
                        if let Ok(Some(attr)) = e.try_get_attribute("url") {
                            item.source_url = Some(attr.unescape_value().map_err(|e| e.to_string())?.into_owned());
                        }
                    }
                }
                _ => {}
            },
            Event::End(e) => match e.name().as_ref() {
                b"item" => items.extend(current.take()),
                b"title" | b"link" => field = None,
                _ => {}
            },
            Event::Text(t) => push_field(&mut current, field, &t.decode().map_err(|e| e.to_string())?),
            Event::CData(t) => push_field(&mut current, field, &t.decode().map_err(|e| e.to_string())?),
            Event::GeneralRef(r) => {
                let resolved = match r.resolve_char_ref().map_err(|e| e.to_string())? {
                    Some(c) => c.to_string(),
                    None => {
                        let name = r.decode().map_err(|e| e.to_string())?;
                        quick_xml::escape::resolve_predefined_entity(&name)
                            .map(str::to_string)
                            .unwrap_or_else(|| format!("&{name};"))
                    }
                };
                push_field(&mut current, field, &resolved);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    for item in &mut items {
        item.title = item.title.trim().to_string();
        item.link = item.link.trim().to_string();
    }
    Ok(items)
}

fn push_field(item: &mut Option<RssItem>, field: Option<&str>, text: &str) {
    if let Some(item) = item.as_mut() {
        match field {
            Some("title") => item.title.push_str(text),
            Some("link") => item.link.push_str(text),
            _ => {}
        }
    }
}

/// Google News wraps article links in `news.google.com` redirects that are
/// resolved client-side, so the publisher URL from `<source>` stands in for
/// them. Titles carry a " - Publisher" suffix which is dropped.
pub fn rss_to_bullets(items: &[RssItem]) -> String {
    let mut out = String::new();
    for item in items {
        let wrapped = newsaudit_core::attribution::url_host(&item.link)
            .map(|h| h == "news.google.com")
            .unwrap_or(true);
        let url = match (&item.source_url, wrapped) {
            (Some(src), true) => src.as_str(),
            _ => item.link.as_str(),
        };
        let title = match item.title.rsplit_once(" - ") {
            Some((head, _)) if item.source_url.is_some() && !head.is_empty() => head,
            _ => item.title.as_str(),
        };
        out.push_str(&format!("- {title} ({url})\n"));
    }
    out
}
