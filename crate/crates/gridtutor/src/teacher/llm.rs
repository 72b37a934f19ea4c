//! Chat-completion teacher: prompting, parsing, transport, caching.
//!
//! Uncertainty comes from repetition: the same prompt is sent M times at
//! nonzero temperature and the parsed decisions form a frequency
//! histogram. Responses that parse to nothing usable count as Wait.
//! Distributions are cached on the canonical scene description, so one
//! knowledge state costs at most M round trips per run.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gridworld::{describe, Color, EnvState, ExplorationMemory};
use crate::options::{is_executable, OptionId, Target};

use super::OptionDistribution;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token; unset
    /// or empty variable sends no auth header.
    pub api_key_env: String,
    pub temperature: f64,
    /// M: independent samples per state for the frequency histogram.
    pub samples: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    /// Bound on concurrent in-flight requests.
    pub concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> LlmConfig {
        LlmConfig {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "local".into(),
            api_key_env: "TEACHER_API_KEY".into(),
            temperature: 0.7,
            samples: 5,
            timeout_secs: 30,
            max_retries: 3,
            retry_backoff_ms: 250,
            concurrency: 4,
        }
    }
}

const SYSTEM_MESSAGE: &str =
    "You advise an agent in a grid room. Follow the requested output format exactly.";

/// Fixed prompt template: rules, option menu, chain-of-thought directive,
/// one worked example, then the live scene.
pub fn build_prompt(description: &str) -> String {
    format!(
        "You control an agent in a grid room. The task: find the key whose color \
matches the exit door, pick it up, and open the door. Stepping onto lava kills \
the agent. The agent can hold one key at a time.\n\
\n\
Choose exactly one option:\n\
- explore: look for cells not seen yet\n\
- go to <color> <key|door>: walk next to an object already seen\n\
- pick up <color> key: fetch a key already seen\n\
- drop: put the held key on a free adjacent cell\n\
- open <color> door: toggle the door the agent is facing\n\
\n\
First summarize the scene in one sentence. Then reason step by step about the \
best option. Finish with one line in exactly this format:\n\
DECISION: <option>\n\
\n\
Example:\n\
Scene: a yellow key lies ahead and the exit door is yellow; hands empty.\n\
Reasoning: the key matches the exit door, so fetching it comes before walking \
to the door.\n\
DECISION: pick up yellow key\n\
\n\
Scene description:\n\
{description}"
    )
}

/// Parses one option phrase like "pick up red key" or "explore".
fn parse_option_text(text: &str) -> Option<OptionId> {
    let lower = text.to_ascii_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let color = words.iter().find_map(|w| {
        Color::ALL.iter().copied().find(|c| c.name() == *w)
    });
    let has = |w: &str| words.contains(&w);
    let kind = if has("door") {
        Some(crate::options::TargetKind::Door)
    } else if has("key") {
        Some(crate::options::TargetKind::Key)
    } else {
        None
    };

    if has("explore") {
        return Some(OptionId::Explore);
    }
    if has("drop") {
        return Some(OptionId::Drop);
    }
    if has("pickup") || (has("pick") && has("up")) || has("fetch") {
        return match (color, kind) {
            (Some(c), Some(crate::options::TargetKind::Key) | None) => {
                Some(OptionId::Pickup(Target::key(c)))
            }
            _ => None,
        };
    }
    if has("open") || has("unlock") {
        return match (color, kind) {
            (Some(c), Some(crate::options::TargetKind::Door) | None) => {
                Some(OptionId::Open(Target::door(c)))
            }
            _ => None,
        };
    }
    if has("go") || has("goto") {
        return match (color, kind) {
            (Some(c), Some(k)) => Some(OptionId::GoTo(Target { kind: k, color: c })),
            _ => None,
        };
    }
    None
}

/// Extracts the final `DECISION:` line and parses it; None when no such
/// line exists or the verb is unknown.
pub fn parse_response(text: &str) -> Option<OptionId> {
    let line = text
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.to_ascii_uppercase().starts_with("DECISION:"))?;
    parse_option_text(&line[line.find(':').unwrap() + 1..])
}

/// Alternate uncertainty format: a `DECISION_PROBS:` line such as
/// `DECISION_PROBS: explore=0.6, pick up red key=0.4`. Returns the
/// parsed pairs plus the weight attached to unparseable phrases.
pub fn parse_prob_line(text: &str) -> Option<(Vec<(OptionId, f64)>, f64)> {
    let line = text
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.to_ascii_uppercase().starts_with("DECISION_PROBS:"))?;
    let body = &line[line.find(':').unwrap() + 1..];
    let mut pairs = Vec::new();
    let mut unparsed = 0.0;
    for part in body.split(',') {
        let Some((phrase, weight)) = part.rsplit_once('=') else {
            continue;
        };
        let Ok(w) = weight.trim().parse::<f64>() else {
            continue;
        };
        if w < 0.0 {
            continue;
        }
        match parse_option_text(phrase) {
            Some(option) => pairs.push((option, w)),
            None => unparsed += w,
        }
    }
    if pairs.is_empty() && unparsed == 0.0 {
        return None;
    }
    Some((pairs, unparsed))
}

/// One chat-completion round trip with exponential backoff retries.
pub fn llm_query(config: &LlmConfig, prompt: &str) -> anyhow::Result<String> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .context("building http client")?;
    let body = serde_json::json!({
        "model": config.model,
        "temperature": config.temperature,
        "messages": [
            {"role": "system", "content": SYSTEM_MESSAGE},
            {"role": "user", "content": prompt},
        ],
    });
    let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());

    let mut last_err = anyhow!("no attempts made");
    for attempt in 0..=config.max_retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(
                config.retry_backoff_ms << (attempt - 1).min(8),
            ));
        }
        let mut request = client.post(&config.endpoint).json(&body);
        if let Some(key) = &api_key {
            request = request.bearer_auth(key);
        }
        match request.send() {
            Ok(response) => {
                let status = response.status();
                if !status.is_success() {
                    last_err = anyhow!("endpoint returned {status}");
                    continue;
                }
                let value: serde_json::Value =
                    match response.json().context("decoding completion json") {
                        Ok(v) => v,
                        Err(e) => {
                            last_err = e;
                            continue;
                        }
                    };
                match value["choices"][0]["message"]["content"].as_str() {
                    Some(content) => return Ok(content.to_string()),
                    None => last_err = anyhow!("completion missing message content"),
                }
            }
            Err(e) => last_err = anyhow!(e).context("transport"),
        }
    }
    Err(last_err.context(format!("after {} retries", config.max_retries)))
}

/// Description-keyed distribution cache. Many readers, one writer; the
/// first insertion for a key wins so concurrent misses stay consistent.
#[derive(Default)]
pub struct TeacherCache {
    map: RwLock<HashMap<String, OptionDistribution>>,
}

impl TeacherCache {
    pub fn get(&self, key: &str) -> Option<OptionDistribution> {
        self.map.read().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: String, dist: OptionDistribution) {
        self.map.write().unwrap().entry(key).or_insert(dist);
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Serialize)]
struct TranscriptRecord<'a> {
    description: &'a str,
    prompt_sha256: String,
    raw_response: Option<&'a str>,
    error: Option<String>,
    parsed: Option<OptionId>,
    latency_ms: u128,
}

pub struct LlmTeacher {
    pub config: LlmConfig,
    cache: TeacherCache,
    transcript: Option<Mutex<std::io::BufWriter<std::fs::File>>>,
}

impl LlmTeacher {
    pub fn new(config: LlmConfig) -> LlmTeacher {
        LlmTeacher { config, cache: TeacherCache::default(), transcript: None }
    }

    /// Logs one JSON record per query to `path` (append mode).
    pub fn with_transcript(config: LlmConfig, path: &std::path::Path) -> anyhow::Result<LlmTeacher> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening transcript {}", path.display()))?;
        Ok(LlmTeacher {
            config,
            cache: TeacherCache::default(),
            transcript: Some(Mutex::new(std::io::BufWriter::new(file))),
        })
    }

    pub fn cached_states(&self) -> usize {
        self.cache.len()
    }

    pub fn option_probs(
        &self,
        state: &EnvState,
        memory: &ExplorationMemory,
    ) -> OptionDistribution {
        let description = describe(state, memory);
        if let Some(hit) = self.cache.get(&description) {
            return hit;
        }
        let dist = self.sample_distribution(state, memory, &description);
        self.cache.insert(description, dist.clone());
        dist
    }

    /// M round trips (at most `concurrency` in flight), parsed into a
    /// frequency histogram. Unparseable, non-executable and failed
    /// samples all land on Wait.
    fn sample_distribution(
        &self,
        state: &EnvState,
        memory: &ExplorationMemory,
        description: &str,
    ) -> OptionDistribution {
        let prompt = build_prompt(description);
        let m = self.config.samples.max(1);
        let share = 1.0 / m as f64;

        let mut results: Vec<(anyhow::Result<String>, Duration)> = Vec::with_capacity(m);
        let batch = self.config.concurrency.max(1);
        let mut remaining = m;
        while remaining > 0 {
            let now = remaining.min(batch);
            let mut batch_results: Vec<(anyhow::Result<String>, Duration)> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = (0..now)
                        .map(|_| {
                            scope.spawn(|| {
                                let started = Instant::now();
                                (llm_query(&self.config, &prompt), started.elapsed())
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap()).collect()
                });
            results.append(&mut batch_results);
            remaining -= now;
        }

        let mut dist = OptionDistribution { entries: Vec::new(), wait_mass: 0.0 };
        for (result, latency) in &results {
            match result {
                Ok(text) => {
                    if let Some((pairs, unparsed)) = parse_prob_line(text) {
                        // a self-reported distribution replaces one vote
                        let total: f64 =
                            pairs.iter().map(|(_, w)| w).sum::<f64>() + unparsed;
                        if total > 0.0 {
                            for (option, w) in &pairs {
                                let p = share * w / total;
                                if is_executable(*option, state, memory) {
                                    dist.accumulate(*option, p);
                                } else {
                                    dist.wait_mass += p;
                                }
                            }
                            dist.wait_mass += share * unparsed / total;
                        } else {
                            dist.wait_mass += share;
                        }
                        self.log(description, &prompt, Some(text), None, None, latency);
                        continue;
                    }
                    let parsed = parse_response(text)
                        .filter(|o| is_executable(*o, state, memory));
                    match parsed {
                        Some(option) => dist.accumulate(option, share),
                        None => dist.wait_mass += share,
                    }
                    self.log(description, &prompt, Some(text), None, parsed, latency);
                }
                Err(e) => {
                    log::warn!("teacher query failed: {e:#}; counting as wait");
                    dist.wait_mass += share;
                    self.log(description, &prompt, None, Some(format!("{e:#}")), None, latency);
                }
            }
        }
        dist
    }

    fn log(
        &self,
        description: &str,
        prompt: &str,
        raw: Option<&str>,
        error: Option<String>,
        parsed: Option<OptionId>,
        latency: &Duration,
    ) {
        let Some(transcript) = &self.transcript else {
            return;
        };
        let record = TranscriptRecord {
            description,
            prompt_sha256: format!("{:x}", Sha256::digest(prompt.as_bytes())),
            raw_response: raw,
            error,
            parsed,
            latency_ms: latency.as_millis(),
        };
        let mut file = transcript.lock().unwrap();
        if let Ok(json) = serde_json::to_string(&record) {
            let _ = writeln!(file, "{json}");
            let _ = file.flush();
        }
    }
}
