//! Augmenter clients.
//!
//! A client pairs a behavior with a transport. The mock transport is a pure
//! function of the request; the external transport only shapes requests and
//! is disabled unless explicitly enabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Recipe,
    Dictionary,
    Summarizer,
}

impl Behavior {
    pub fn name(self) -> &'static str {
        match self {
            Behavior::Recipe => "recipe",
            Behavior::Dictionary => "dictionary",
            Behavior::Summarizer => "summarizer",
        }
    }

    pub fn system_prompt(self) -> &'static str {
        match self {
            Behavior::Recipe => {
                "List the main steps of the named procedure as a numbered list, one short imperative line per step."
            }
            Behavior::Dictionary => {
                "Explain the given step name in one sentence, keeping the original name at the start."
            }
            Behavior::Summarizer => "Compress the given description into one short sentence.",
        }
    }

    pub fn examples(self) -> Vec<Example> {
        let ex = |input: &str, output: &str| Example {
            input: input.into(),
            output: output.into(),
        };
        match self {
            Behavior::Recipe => vec![ex(
                "bread baking",
                "1. mix the flour\n2. knead the dough\n3. bake the loaf",
            )],
            Behavior::Dictionary => vec![ex(
                "kneading",
                "kneading: working the dough by hand until it is smooth",
            )],
            Behavior::Summarizer => vec![ex(
                "The baker mixes flour, kneads the dough for ten minutes and bakes it.",
                "a loaf is mixed, kneaded and baked",
            )],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentRequest {
    pub behavior: Behavior,
    pub system_prompt: String,
    pub examples: Vec<Example>,
    pub input: String,
}

impl AugmentRequest {
    pub fn new(behavior: Behavior, input: &str) -> Self {
        Self {
            behavior,
            system_prompt: behavior.system_prompt().into(),
            examples: behavior.examples(),
            input: input.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentResponse {
    pub text: String,
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &AugmentRequest) -> Result<AugmentResponse>;
}

/// Deterministic template responses built from the input's tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTransport;

const RECIPE_VERBS: [&str; 5] = ["prepare", "expose", "separate", "secure", "inspect"];

impl Transport for MockTransport {
    fn send(&self, request: &AugmentRequest) -> Result<AugmentResponse> {
        let tokens = super::steps::tokenize(&request.input);
        let subject = if tokens.is_empty() {
            "procedure".to_string()
        } else {
            tokens.join(" ")
        };
        let text = match request.behavior {
            Behavior::Recipe => {
                let nouns: Vec<&str> = if tokens.is_empty() {
                    vec!["procedure"]
                } else {
                    tokens.iter().map(String::as_str).collect()
                };
                RECIPE_VERBS
                    .iter()
                    .enumerate()
                    .map(|(i, verb)| format!("{}. {verb} the {}", i + 1, nouns[i % nouns.len()]))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            Behavior::Dictionary => {
                format!("{}: the stage in which the {subject} is carried out", request.input.trim())
            }
            Behavior::Summarizer => {
                let first = request
                    .input
                    .split(['.', '!', '?'])
                    .map(str::trim)
                    .find(|s| !s.is_empty())
                    .unwrap_or("");
                let words: Vec<&str> = first.split_whitespace().take(12).collect();
                format!("in short: {}", words.join(" ").to_lowercase())
            }
        };
        Ok(AugmentResponse { text })
    }
}

/// Request-shaping skeleton for a remote completion service.
#[derive(Debug, Clone, Default)]
pub struct ExternalTransport {
    pub endpoint: String,
    pub enabled: bool,
}

impl ExternalTransport {
    /// JSON body that would be posted to `endpoint`.
    pub fn request_body(&self, request: &AugmentRequest) -> Result<String> {
        Ok(serde_json::to_string(request)?)
    }
}

impl Transport for ExternalTransport {
    fn send(&self, request: &AugmentRequest) -> Result<AugmentResponse> {
        let context = format!("{} request", request.behavior.name());
        if !self.enabled {
            return Err(Error::ClientFailure {
                context,
                message: "external transport is disabled".into(),
            });
        }
        self.request_body(request)?;
        Err(Error::ClientFailure {
            context,
            message: format!("no HTTP backend is built in; cannot reach {}", self.endpoint),
        })
    }
}

pub struct AugmenterClient {
    behavior: Behavior,
    transport: Box<dyn Transport>,
}

impl AugmenterClient {
    pub fn new(behavior: Behavior, transport: Box<dyn Transport>) -> Self {
        Self {
            behavior,
            transport,
        }
    }

    pub fn mock(behavior: Behavior) -> Self {
        Self::new(behavior, Box::new(MockTransport))
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn complete(&self, input: &str) -> Result<String> {
        let request = AugmentRequest::new(self.behavior, input);
        Ok(self.transport.send(&request)?.text)
    }

    pub(crate) fn require(&self, behavior: Behavior) -> Result<()> {
        if self.behavior != behavior {
            return Err(Error::InvalidConfig(format!(
                "expected a {} client, got {}",
                behavior.name(),
                self.behavior.name()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Debug for AugmenterClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AugmenterClient")
            .field("behavior", &self.behavior)
            .finish_non_exhaustive()
    }
}
