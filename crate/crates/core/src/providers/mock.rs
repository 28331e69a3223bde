use std::collections::HashSet;

use super::embed::content_words;
use super::{AnswerProvider, AnswerRequest, AnswerResponse, ProviderError, ProviderKind};
use crate::retrieval::{assemble_prompt, CONTEXT_PLACEHOLDER, QUESTION_PLACEHOLDER};
use crate::text::{collapse_whitespace, count_tokens};

pub const INSUFFICIENT_CONTEXT: &str = "insufficient context";
pub const MAX_ANSWER_WORDS: usize = 120;

// Relative weight of instruction words taken from the templates.
const TEMPLATE_CUE_WEIGHT: f64 = 0.5;

/// Extractive stand-in for a language model.
///
/// Context sentences are ranked by overlap with the question's content words
/// (weight 1) and with the templates' instruction words (weight 0.5); the top
/// sentences are concatenated up to [`MAX_ANSWER_WORDS`]. Answer quality
/// therefore tracks retrieval quality.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

/// Split text into sentences on `.`, `!`, `?` followed by whitespace and on
/// line breaks. Whitespace inside a sentence is collapsed.
pub(crate) fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.split('\n') {
        let mut start = 0;
        let bytes = line.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            let boundary = matches!(b, b'.' | b'!' | b'?')
                && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace());
            if boundary {
                push_sentence(&mut out, &line[start..=i]);
                start = i + 1;
            }
        }
        push_sentence(&mut out, &line[start..]);
    }
    out
}

fn push_sentence(out: &mut Vec<String>, s: &str) {
    let s = collapse_whitespace(s);
    if !s.is_empty() {
        out.push(s);
    }
}

impl MockProvider {
    pub fn answer_text(&self, req: &AnswerRequest) -> String {
        let question_terms: HashSet<String> = content_words(&req.question.text).collect();
        let instructions = format!("{}\n{}", req.templates.system, req.templates.user)
            .replace(CONTEXT_PLACEHOLDER, " ")
            .replace(QUESTION_PLACEHOLDER, " ");
        let cue_terms: HashSet<String> = content_words(&instructions)
            .filter(|w| !question_terms.contains(w))
            .collect();

        let mut seen = HashSet::new();
        let mut ranked: Vec<(f64, usize, String)> = Vec::new();
        for seg in &req.context.segments {
            for sentence in split_sentences(&seg.text) {
                if !seen.insert(sentence.clone()) {
                    continue;
                }
                let words: HashSet<String> = content_words(&sentence).collect();
                let score: f64 = words
                    .iter()
                    .map(|w| {
                        if question_terms.contains(w) {
                            1.0
                        } else if cue_terms.contains(w) {
                            TEMPLATE_CUE_WEIGHT
                        } else {
                            0.0
                        }
                    })
                    .sum();
                let pos = ranked.len();
                ranked.push((score, pos, sentence));
            }
        }
        if ranked.is_empty() {
            return INSUFFICIENT_CONTEXT.to_string();
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut picked: Vec<&str> = Vec::new();
        let mut used = 0;
        for (_, _, sentence) in &ranked {
            let n = sentence.split_whitespace().count();
            if used + n > MAX_ANSWER_WORDS {
                break;
            }
            used += n;
            picked.push(sentence);
        }
        if picked.is_empty() {
            // The best sentence alone is too long; truncate it.
            return ranked[0]
                .2
                .split_whitespace()
                .take(MAX_ANSWER_WORDS)
                .collect::<Vec<_>>()
                .join(" ");
        }
        picked.join(" ")
    }
}

impl AnswerProvider for MockProvider {
    fn generate(&self, req: &AnswerRequest) -> Result<AnswerResponse, ProviderError> {
        let prompt = assemble_prompt(&req.context, &req.question, &req.templates)?;
        let text = self.answer_text(req);
        Ok(AnswerResponse {
            prompt_tokens: prompt.token_count(),
            completion_tokens: count_tokens(&text),
            text,
            model_id: req.model_id.clone(),
            latency_ms: 0,
        })
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Mock
    }
}
