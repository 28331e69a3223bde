//! Strategy-independent retrieval types: context packages, token budgets and
//! prompt assembly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Question;
use crate::text::count_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Wide,
    Rag,
    Clear,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Wide, Strategy::Rag, Strategy::Clear];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Wide => "Wide",
            Strategy::Rag => "RAG",
            Strategy::Clear => "CLEAR",
        }
    }

    /// Final tie-break preference: CLEAR > RAG > Wide.
    pub fn preference(self) -> u8 {
        match self {
            Strategy::Clear => 2,
            Strategy::Rag => 1,
            Strategy::Wide => 0,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wide" => Ok(Strategy::Wide),
            "rag" => Ok(Strategy::Rag),
            "clear" => Ok(Strategy::Clear),
            other => Err(format!("unknown strategy `{other}` (expected wide, rag or clear)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub start_word: usize,
    pub end_word: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPackage {
    pub strategy: Strategy,
    pub segments: Vec<Segment>,
    pub context_tokens: usize,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl ContextPackage {
    /// Build a package, computing `context_tokens` from the segments.
    pub fn new(strategy: Strategy, segments: Vec<Segment>, provenance: Vec<String>) -> Self {
        let context_tokens = segments.iter().map(|s| count_tokens(&s.text)).sum();
        Self {
            strategy,
            segments,
            context_tokens,
            provenance,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segment texts joined by a `---` separator line.
    pub fn context_block(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n---\n")
    }

    /// Check token accounting and segment ordering. Returns a description of
    /// the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let recount: usize = self.segments.iter().map(|s| count_tokens(&s.text)).sum();
        if recount != self.context_tokens {
            return Err(format!(
                "context_tokens {} != recount {recount}",
                self.context_tokens
            ));
        }
        for s in &self.segments {
            if s.start_word >= s.end_word {
                return Err(format!("empty segment span [{}, {})", s.start_word, s.end_word));
            }
        }
        for pair in self.segments.windows(2) {
            if pair[0].end_word > pair[1].start_word {
                return Err(format!(
                    "segments [{}, {}) and [{}, {}) overlap or are out of order",
                    pair[0].start_word, pair[0].end_word, pair[1].start_word, pair[1].end_word
                ));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_BUDGET_TOKENS: usize = 8_500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub max_context_tokens: usize,
}

impl TokenBudget {
    pub fn new(max_context_tokens: usize) -> Option<Self> {
        (max_context_tokens > 0).then_some(Self { max_context_tokens })
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            max_context_tokens: DEFAULT_BUDGET_TOKENS,
        }
    }
}

pub const CONTEXT_PLACEHOLDER: &str = "{context}";
pub const QUESTION_PLACEHOLDER: &str = "{question}";

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("templates are missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
}

/// A system/user template pair shared by every strategy in a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub system: String,
    pub user: String,
}

impl PromptTemplates {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Result<Self, PromptError> {
        let t = Self {
            system: system.into(),
            user: user.into(),
        };
        t.validate()?;
        Ok(t)
    }

    /// Both placeholders must appear in at least one of the two templates.
    pub fn validate(&self) -> Result<(), PromptError> {
        for p in [CONTEXT_PLACEHOLDER, QUESTION_PLACEHOLDER] {
            if !self.system.contains(p) && !self.user.contains(p) {
                return Err(PromptError::MissingPlaceholder(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn text(&self) -> String {
        if self.system.is_empty() {
            self.user.clone()
        } else {
            format!("{}\n\n{}", self.system, self.user)
        }
    }

    pub fn token_count(&self) -> usize {
        count_tokens(&self.system) + count_tokens(&self.user)
    }
}

/// Single-pass placeholder substitution: text inserted for one placeholder is
/// never rescanned for another.
fn substitute(template: &str, context: &str, question: &str) -> String {
    let mut out = String::with_capacity(template.len() + context.len() + question.len());
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix(CONTEXT_PLACEHOLDER) {
            out.push_str(context);
            rest = after;
        } else if let Some(after) = tail.strip_prefix(QUESTION_PLACEHOLDER) {
            out.push_str(question);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

pub fn assemble_prompt(
    pkg: &ContextPackage,
    question: &Question,
    templates: &PromptTemplates,
) -> Result<Prompt, PromptError> {
    templates.validate()?;
    let context = pkg.context_block();
    Ok(Prompt {
        system: substitute(&templates.system, &context, &question.text),
        user: substitute(&templates.user, &context, &question.text),
    })
}

/// The prompt with the question filled in but `{context}` left in place.
/// Identical across strategies for the same cell.
pub fn prompt_skeleton(question: &Question, templates: &PromptTemplates) -> Prompt {
    Prompt {
        system: substitute(&templates.system, CONTEXT_PLACEHOLDER, &question.text),
        user: substitute(&templates.user, CONTEXT_PLACEHOLDER, &question.text),
    }
}
