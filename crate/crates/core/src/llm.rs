//! Chat-completion client and the machinery that turns a remote model into a [`Policy`].
//!
//! Wire shape (OpenAI-style): `POST {endpoint}` with body
//! `{"model", "messages": [{"role", "content"}], "temperature", "max_tokens"}`; the reply text is
//! read from `choices[0].message.content`. The API key comes from the environment variable
//! named in the provider profile. It is sent in the profile's header, prefixed with `Bearer `
//! when that header is `Authorization`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{Action, AgentView, MemoryKind, Policy, Utterance};
use crate::game::{ActionKind, EventKind, Role};
use crate::rng::{self, GameRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub endpoint: String,
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn body(&self) -> Value {
        json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }

    fn validate(&self) -> Result<(), CompletionError> {
        if self.messages.is_empty() {
            return Err(CompletionError::InvalidRequest("at least one message is required".into()));
        }
        if self.model.trim().is_empty() {
            return Err(CompletionError::InvalidRequest("model name is empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(CompletionError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// One named model endpoint from the run config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub endpoint: String,
    #[serde(default = "default_header")]
    pub header: String,
    pub model: String,
    /// Environment variable holding the API key. `None` for endpoints that need no key.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_header() -> String {
    "Authorization".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Transport attempts per request, the first one included.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// Delay after the `failures`-th consecutive failure (1-based): `base · 2^(failures-1)`,
    /// capped at `max_delay_ms`.
    pub fn delay(&self, failures: u32) -> Duration {
        let factor = 1u64.checked_shl(failures.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// Sends one HTTP POST. Implementations must not retry on their own.
pub trait Transport: Send + Sync {
    fn post(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError>;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RealSleeper;

impl Sleeper for RealSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Blocking HTTP transport backed by `ureq`.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn post(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let payload = serde_json::to_string(body).map_err(|e| TransportError(e.to_string()))?;
        let mut resp = req.send(payload.as_bytes()).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompletionError {
    #[error("credential error: {0}")]
    Credential(String),
    #[error("gave up after {attempts} attempts (last status {last_status:?}): {message}")]
    Exhausted { attempts: u32, last_status: Option<u16>, message: String },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Shareable chat client; clones share the transport and the concurrency limit.
#[derive(Clone)]
pub struct ChatClient {
    profile: ProviderProfile,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    retry: RetryPolicy,
    limiter: Arc<Limiter>,
}

impl fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatClient").field("profile", &self.profile).field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(profile: ProviderProfile, transport: Arc<dyn Transport>) -> Self {
        let api_key = profile.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        Self {
            profile,
            api_key,
            transport,
            sleeper: Arc::new(RealSleeper),
            retry: RetryPolicy::default(),
            limiter: Arc::new(Limiter { in_flight: Mutex::new(0), freed: Condvar::new(), max: 8 }),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, max_in_flight: usize) -> Self {
        self.limiter = Arc::new(Limiter { in_flight: Mutex::new(0), freed: Condvar::new(), max: max_in_flight.max(1) });
        self
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    pub fn retry(&self) -> RetryPolicy {
        self.retry
    }

    /// Sends `request`, retrying transport failures, 429 and 5xx with exponential backoff.
    /// 401/403 fail at once with a credential error; other 4xx fail without retry.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, CompletionError> {
        request.validate()?;
        let mut headers = Vec::new();
        if let Some(var) = &self.profile.api_key_env {
            let key = self.api_key.as_ref().ok_or_else(|| CompletionError::Credential(format!("environment variable {var} is not set")))?;
            let value = if self.profile.header.eq_ignore_ascii_case("authorization") { format!("Bearer {key}") } else { key.clone() };
            headers.push((self.profile.header.clone(), value));
        }
        let body = request.body();
        let attempts = self.retry.max_attempts.max(1);
        let mut last_status = None;
        let mut message = String::new();
        for attempt in 1..=attempts {
            let reply = {
                let _permit = self.limiter.acquire();
                self.transport.post(&request.endpoint, &headers, &body)
            };
            match reply {
                Ok(HttpReply { status, body }) if (200..300).contains(&status) => return extract_content(&body),
                Ok(HttpReply { status: status @ (401 | 403), body }) => {
                    return Err(CompletionError::Credential(format!("status {status}: {body}")))
                }
                Ok(HttpReply { status, body }) if status == 429 || status >= 500 => {
                    last_status = Some(status);
                    message = body;
                }
                Ok(HttpReply { status, body }) => return Err(CompletionError::Rejected { status, body }),
                Err(e) => {
                    last_status = None;
                    message = e.0;
                }
            }
            if attempt < attempts {
                log::debug!("attempt {attempt} failed ({last_status:?}), backing off");
                self.sleeper.sleep(self.retry.delay(attempt));
            }
        }
        Err(CompletionError::Exhausted { attempts, last_status, message })
    }
}

fn extract_content(body: &str) -> Result<String, CompletionError> {
    let v: Value = serde_json::from_str(body).map_err(|e| CompletionError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| CompletionError::Malformed("missing choices[0].message.content".into()))
}

/// Slots a prompt template may reference.
pub const SLOTS: &[&str] =
    &["game_rules", "role_brief", "view_summary", "memory", "transcript", "candidates", "action_instructions", "output_schema"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown slot {{{0}}}")]
    UnknownSlot(String),
    #[error("no value for slot {{{0}}}")]
    MissingSlot(String),
    #[error("unbalanced brace at byte {0}")]
    Unbalanced(usize),
}

/// Template text with `{slot}` placeholders; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    text: String,
}

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Slot(&'a str),
}

fn pieces(text: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&text[start..i]));
                out.push(Piece::Brace('{'));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&text[start..i]));
                out.push(Piece::Brace('}'));
                i += 2;
                start = i;
            }
            b'{' => {
                let end = text[i + 1..].find('}').map(|j| i + 1 + j).ok_or(TemplateError::Unbalanced(i))?;
                out.push(Piece::Text(&text[start..i]));
                out.push(Piece::Slot(&text[i + 1..end]));
                i = end + 1;
                start = i;
            }
            b'}' => return Err(TemplateError::Unbalanced(i)),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&text[start..]));
    Ok(out)
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for p in pieces(&text)? {
            if let Piece::Slot(name) = p {
                if !SLOTS.contains(&name) {
                    return Err(TemplateError::UnknownSlot(name.to_string()));
                }
            }
        }
        Ok(Self { text })
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len() * 2);
        for p in pieces(&self.text)? {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Brace(c) => out.push(c),
                Piece::Slot(name) => {
                    if !SLOTS.contains(&name) {
                        return Err(TemplateError::UnknownSlot(name.to_string()));
                    }
                    out.push_str(values.get(name).ok_or_else(|| TemplateError::MissingSlot(name.to_string()))?);
                }
            }
        }
        Ok(out)
    }
}

/// One template per policy capability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub bid: PromptTemplate,
    pub speak: PromptTemplate,
    pub vote: PromptTemplate,
    pub night_action: PromptTemplate,
    pub summarize: PromptTemplate,
}

const STANDARD_TEMPLATE: &str = "{game_rules}\n\n\
## Your role\n{role_brief}\n\n\
## Current situation\n{view_summary}\n\n\
## Your memory\n{memory}\n\n\
## Today's debate so far\n{transcript}\n\n\
## Options\n{candidates}\n\n\
## Task\n{action_instructions}\n\n\
{output_schema}";

impl Default for TemplateSet {
    fn default() -> Self {
        let t = || PromptTemplate::new(STANDARD_TEMPLATE).expect("built-in template is valid");
        Self { bid: t(), speak: t(), vote: t(), night_action: t(), summarize: t() }
    }
}

impl TemplateSet {
    pub fn for_action(&self, kind: ActionKind) -> &PromptTemplate {
        match kind {
            ActionKind::Bid => &self.bid,
            ActionKind::Speak => &self.speak,
            ActionKind::Vote | ActionKind::SyntheticVote => &self.vote,
            ActionKind::Eliminate | ActionKind::Protect | ActionKind::Investigate => &self.night_action,
            ActionKind::Summarize => &self.summarize,
        }
    }
}

pub const GAME_RULES: &str = "You are playing Werewolf with other players. Two Werewolves hide among \
Villagers, one Seer and one Doctor. Each night the Werewolves eliminate a player, the Doctor protects \
one player (a protected player survives the attack) and the Seer learns one player's true role. Each \
day everyone debates and then votes; a player is exiled only if they receive a strict majority of the \
votes. Villagers win when both Werewolves are gone. Werewolves win once they are as many as everyone else.";

fn role_brief(role: Role) -> &'static str {
    match role {
        Role::Villager => "You are a Villager. Find the Werewolves through discussion and vote them out.",
        Role::Werewolf => "You are a Werewolf. Hide your identity, protect your partner and mislead the village.",
        Role::Seer => "You are the Seer. Each night you learn one player's true role. Decide carefully when to share what you know; revealing yourself makes you a target.",
        Role::Doctor => "You are the Doctor. Each night you protect one player, yourself included, from the Werewolves.",
    }
}

const BID_LEVELS: &str = "0: I would like to observe and listen for now.\n\
1: I have some general thoughts to share with the group.\n\
2: I have something critical and specific to contribute to this discussion.\n\
3: It is absolutely urgent for me to speak next.\n\
4: Someone has addressed me directly and I must respond.";

fn instructions(kind: ActionKind) -> String {
    match kind {
        ActionKind::Bid => format!("Decide how urgently you want to speak next.\n{BID_LEVELS}"),
        ActionKind::Speak => "It is your turn to speak in the debate. Say what helps your side win.".into(),
        ActionKind::Vote => "Vote for the player to exile. Choose exactly one name from the options.".into(),
        ActionKind::SyntheticVote => {
            "If the vote were held right now, who would you vote to exile? Choose exactly one name from the options.".into()
        }
        ActionKind::Eliminate => "Choose the player the Werewolves will eliminate tonight.".into(),
        ActionKind::Protect => "Choose the player you will protect tonight.".into(),
        ActionKind::Investigate => "Choose the player whose role you will learn tonight.".into(),
        ActionKind::Summarize => "Summarize the key insights from this round that you want to remember.".into(),
    }
}

/// Expected JSON object per capability. Unknown fields are ignored; `reasoning` is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionSchema {
    Bid,
    Speak,
    Vote { candidates: Vec<String> },
    Target { candidates: Vec<String> },
    Summarize,
}

impl ActionSchema {
    pub fn for_view(view: &AgentView) -> Self {
        let candidates = view.decision.candidates.clone();
        match view.decision.kind {
            ActionKind::Bid => ActionSchema::Bid,
            ActionKind::Speak => ActionSchema::Speak,
            ActionKind::Vote | ActionKind::SyntheticVote => ActionSchema::Vote { candidates },
            ActionKind::Eliminate | ActionKind::Protect | ActionKind::Investigate => ActionSchema::Target { candidates },
            ActionKind::Summarize => ActionSchema::Summarize,
        }
    }

    fn field(&self) -> &'static str {
        match self {
            ActionSchema::Bid => "bid",
            ActionSchema::Speak => "say",
            ActionSchema::Vote { .. } => "vote",
            ActionSchema::Target { .. } => "target",
            ActionSchema::Summarize => "summary",
        }
    }

    pub fn instructions(&self) -> String {
        let value = match self {
            ActionSchema::Bid => "<integer 0-4>",
            ActionSchema::Speak => "\"<what you say to the group>\"",
            ActionSchema::Vote { .. } | ActionSchema::Target { .. } => "\"<one name from the options>\"",
            ActionSchema::Summarize => "\"<your summary>\"",
        };
        format!(
            "Respond with exactly one JSON object and nothing else:\n{{\"reasoning\": \"<your private reasoning>\", \"{}\": {value}}}",
            self.field()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionValue {
    Bid(u8),
    Say(String),
    Name(String),
    Summary(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAction {
    pub value: ActionValue,
    pub reasoning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found")]
    NoJson,
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {0:?} has the wrong type")]
    WrongType(&'static str),
    #[error("bid {0} is outside 0-4")]
    BidRange(i64),
    #[error("{0:?} is not one of the options")]
    UnknownCandidate(String),
}

/// First JSON object embedded in `text`, tolerating surrounding prose and code fences.
pub fn first_json_object(text: &str) -> Option<Value> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = stream.next() {
            return Some(v);
        }
    }
    None
}

pub fn parse_action(text: &str, schema: &ActionSchema) -> Result<ParsedAction, ParseError> {
    let obj = first_json_object(text).ok_or(ParseError::NoJson)?;
    let field = schema.field();
    let raw = obj.get(field).ok_or(ParseError::MissingField(field))?;
    let reasoning = obj.get("reasoning").and_then(Value::as_str).map(str::to_string);
    let string = || raw.as_str().map(str::to_string).ok_or(ParseError::WrongType(field));
    let value = match schema {
        ActionSchema::Bid => {
            let n = raw.as_i64().ok_or(ParseError::WrongType(field))?;
            if !(0..=4).contains(&n) {
                return Err(ParseError::BidRange(n));
            }
            ActionValue::Bid(n as u8)
        }
        ActionSchema::Speak => ActionValue::Say(string()?),
        ActionSchema::Summarize => ActionValue::Summary(string()?),
        ActionSchema::Vote { candidates } | ActionSchema::Target { candidates } => {
            let name = string()?;
            let found = candidates
                .iter()
                .find(|c| c.eq_ignore_ascii_case(name.trim()))
                .ok_or_else(|| ParseError::UnknownCandidate(name.clone()))?;
            ActionValue::Name(found.clone())
        }
    };
    Ok(ParsedAction { value, reasoning })
}

fn view_summary(view: &AgentView) -> String {
    let mut s = format!(
        "You are {}. It is round {} ({:?}). Players still in the game: {}.",
        view.name,
        view.round,
        view.decision.kind,
        view.living.join(", ")
    );
    let allies = view.allies();
    if !allies.is_empty() {
        let names: Vec<&str> = allies.iter().map(|a| view.name_of(*a)).collect();
        s.push_str(&format!(" Your fellow werewolves: {}.", names.join(", ")));
    }
    s
}

fn memory_text(view: &AgentView) -> String {
    if view.memory.entries().is_empty() {
        return "(nothing yet)".into();
    }
    view.memory
        .entries()
        .iter()
        .map(|e| match e.kind {
            MemoryKind::Observation => format!("- {}", e.text),
            MemoryKind::Reflection => format!("- (your notes from round {}) {}", e.round, e.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn transcript_text(view: &AgentView) -> String {
    if view.transcript.is_empty() {
        return "(no one has spoken yet)".into();
    }
    view.transcript.iter().map(|l| format!("{}: {}", l.speaker, l.text)).collect::<Vec<_>>().join("\n")
}

/// Renders the prompt for `view`'s pending decision. The candidate list is re-permuted with
/// `rng` on every render.
pub fn render_prompt(template: &PromptTemplate, view: &AgentView, rng: &mut GameRng) -> Result<String, TemplateError> {
    let mut candidates = view.decision.candidates.clone();
    candidates.shuffle(rng);
    let candidates = if candidates.is_empty() { "(no options; answer freely)".to_string() } else { candidates.join(", ") };
    let schema = ActionSchema::for_view(view);
    let values: BTreeMap<&str, String> = BTreeMap::from([
        ("game_rules", GAME_RULES.to_string()),
        ("role_brief", role_brief(view.role).to_string()),
        ("view_summary", view_summary(view)),
        ("memory", memory_text(view)),
        ("transcript", transcript_text(view)),
        ("candidates", candidates),
        ("action_instructions", instructions(view.decision.kind)),
        ("output_schema", schema.instructions()),
    ]);
    template.render(&values)
}

pub const FALLBACK_SPEECH: &str = "I would like to hear more from everyone before I decide.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Extra requests after an unusable answer.
    pub reasks: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self { temperature: 1.0, max_tokens: 1024, reasks: 2 }
    }
}

/// Policy backed by a chat model: render, complete, parse; re-ask on bad answers, then fall
/// back to a legal default.
pub struct LlmPolicy {
    client: ChatClient,
    templates: TemplateSet,
    settings: LlmSettings,
    rng: GameRng,
}

impl LlmPolicy {
    pub fn new(client: ChatClient, templates: TemplateSet, settings: LlmSettings, seed: u64) -> Self {
        Self { client, templates, settings, rng: rng::stream(seed, rng::streams::GAMEPLAY) }
    }

    fn ask(&mut self, view: &AgentView) -> Result<ParsedAction, String> {
        let template = self.templates.for_action(view.decision.kind).clone();
        let prompt = render_prompt(&template, view, &mut self.rng).map_err(|e| e.to_string())?;
        let schema = ActionSchema::for_view(view);
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut last = String::new();
        for _ in 0..=self.settings.reasks {
            let request = ChatRequest {
                endpoint: self.client.profile().endpoint.clone(),
                model: self.client.profile().model.clone(),
                messages: messages.clone(),
                temperature: self.settings.temperature,
                max_tokens: self.settings.max_tokens,
            };
            let reply = match self.client.complete(&request) {
                Ok(r) => r,
                Err(e @ CompletionError::Credential(_)) => return Err(e.to_string()),
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            match parse_action(&reply, &schema) {
                Ok(action) => return Ok(action),
                Err(e) => {
                    last = e.to_string();
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "That answer could not be used ({e}). {}",
                        schema.instructions()
                    )));
                }
            }
        }
        Err(last)
    }

    fn random_candidate(&mut self, view: &AgentView) -> String {
        view.decision.candidates.choose(&mut self.rng).cloned().unwrap_or_default()
    }
}

impl Policy for LlmPolicy {
    fn bid(&mut self, view: &AgentView) -> Action<u8> {
        match self.ask(view) {
            Ok(ParsedAction { value: ActionValue::Bid(b), reasoning }) => Action { value: b, reasoning, fallback: None },
            Ok(_) => unreachable!("schema fixes the value kind"),
            Err(e) => Action::fallback(0, e),
        }
    }

    fn speak(&mut self, view: &AgentView) -> Action<Utterance> {
        match self.ask(view) {
            Ok(ParsedAction { value: ActionValue::Say(s), reasoning }) => Action { value: Utterance::plain(s), reasoning, fallback: None },
            Ok(_) => unreachable!("schema fixes the value kind"),
            Err(e) => Action::fallback(Utterance::plain(FALLBACK_SPEECH), e),
        }
    }

    fn vote(&mut self, view: &AgentView) -> Action<String> {
        match self.ask(view) {
            Ok(ParsedAction { value: ActionValue::Name(n), reasoning }) => Action { value: n, reasoning, fallback: None },
            Ok(_) => unreachable!("schema fixes the value kind"),
            Err(e) => Action::fallback(self.random_candidate(view), e),
        }
    }

    fn night_action(&mut self, view: &AgentView) -> Action<String> {
        self.vote(view)
    }

    fn summarize(&mut self, view: &AgentView) -> Action<String> {
        match self.ask(view) {
            Ok(ParsedAction { value: ActionValue::Summary(s), reasoning }) => Action { value: s, reasoning, fallback: None },
            Ok(_) => unreachable!("schema fixes the value kind"),
            Err(e) => Action::fallback(String::new(), e),
        }
    }
}

/// True if `text` mentions a role-revealing private event the view's owner should not know.
/// Used by privacy tests over rendered prompts.
pub fn leaks_private_event(text: &str, view: &AgentView, event: &crate::game::GameEvent) -> bool {
    if event.visibility.visible_to(view.seat) {
        return false;
    }
    match &event.kind {
        EventKind::SeerResult { target, role, .. } => {
            text.contains(&format!("you investigated {} and learned they are a {role}", view.name_of(*target)))
        }
        EventKind::RoundSummary { text: summary, .. } => !summary.is_empty() && text.contains(summary.as_str()),
        _ => false,
    }
}
