//! Wide-context passthrough and chunk-embedding RAG baselines.

use serde::{Deserialize, Serialize};

use crate::corpus::{ClinicalNote, Question};
use crate::metrics::cosine;
use crate::providers::{Embedder, EmbeddingVector};
use crate::retrieval::{ContextPackage, Segment, Strategy};
use crate::text::WordIndex;

/// The whole note as a single segment.
pub fn build_wide_context(note: &ClinicalNote) -> ContextPackage {
    let words = WordIndex::new(&note.text);
    if words.is_empty() {
        return ContextPackage::new(Strategy::Wide, Vec::new(), Vec::new());
    }
    let segment = Segment {
        text: note.text.clone(),
        start_word: 0,
        end_word: words.len(),
        score: 1.0,
    };
    ContextPackage::new(Strategy::Wide, vec![segment], Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagConfig {
    pub chunk_size_words: usize,
    pub overlap_words: usize,
    pub k: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            chunk_size_words: 200,
            overlap_words: 40,
            k: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("chunk size must be positive")]
    ZeroChunkSize,
    #[error("overlap ({overlap}) must be smaller than chunk size ({size})")]
    OverlapTooLarge { overlap: usize, size: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

impl RagConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        check_chunking(self.chunk_size_words, self.overlap_words)?;
        if self.k == 0 {
            return Err(ChunkError::ZeroK);
        }
        Ok(())
    }
}

fn check_chunking(size: usize, overlap: usize) -> Result<(), ChunkError> {
    if size == 0 {
        return Err(ChunkError::ZeroChunkSize);
    }
    if overlap >= size {
        return Err(ChunkError::OverlapTooLarge { overlap, size });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub start_word: usize,
    pub end_word: usize,
    pub text: String,
    pub embedding: EmbeddingVector,
}

/// Word spans of the sliding windows: a chunk starts every
/// `size - overlap` words while the start lies inside the note.
pub fn chunk_spans(
    word_count: usize,
    size: usize,
    overlap: usize,
) -> Result<Vec<(usize, usize)>, ChunkError> {
    check_chunking(size, overlap)?;
    let stride = size - overlap;
    Ok((0..word_count)
        .step_by(stride)
        .map(|s| (s, (s + size).min(word_count)))
        .collect())
}

pub fn chunk_note(
    note: &ClinicalNote,
    chunk_size_words: usize,
    overlap_words: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<Chunk>, ChunkError> {
    let words = WordIndex::new(&note.text);
    Ok(chunk_spans(words.len(), chunk_size_words, overlap_words)?
        .into_iter()
        .map(|(s, e)| {
            let text = words.slice(s, e).to_string();
            Chunk {
                start_word: s,
                end_word: e,
                embedding: embedder.embed(&text),
                text,
            }
        })
        .collect())
}

/// Indices of the top `k` chunks by cosine to `query`, best first; ties go to
/// the earlier chunk.
pub fn rank_chunks(query: &EmbeddingVector, chunks: &[Chunk], k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| (i, cosine(query, &c.embedding).unwrap_or(0.0)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn retrieve_rag(
    note: &ClinicalNote,
    question: &Question,
    config: &RagConfig,
    embedder: &dyn Embedder,
) -> Result<ContextPackage, ChunkError> {
    config.validate()?;
    let chunks = chunk_note(note, config.chunk_size_words, config.overlap_words, embedder)?;
    let query = embedder.embed(&question.text);
    let mut picked = rank_chunks(&query, &chunks, config.k);
    picked.sort_by_key(|&(i, _)| chunks[i].start_word);

    let provenance = picked
        .iter()
        .map(|&(i, s)| {
            let c = &chunks[i];
            format!("chunk {i} [{}, {}) cosine {s:.4}", c.start_word, c.end_word)
        })
        .collect();

    // Overlapping chunks become one segment.
    let mut spans: Vec<(usize, usize, f64)> = Vec::new();
    for &(i, s) in &picked {
        let c = &chunks[i];
        match spans.last_mut() {
            Some(last) if c.start_word < last.1 => {
                last.1 = last.1.max(c.end_word);
                last.2 = last.2.max(s);
            }
            _ => spans.push((c.start_word, c.end_word, s)),
        }
    }
    let words = WordIndex::new(&note.text);
    let segments = spans
        .into_iter()
        .map(|(s, e, score)| Segment {
            text: words.slice(s, e).to_string(),
            start_word: s,
            end_word: e,
            score,
        })
        .collect();
    Ok(ContextPackage::new(Strategy::Rag, segments, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::HashingEmbedder;
    use crate::text::count_tokens;

    fn note(text: &str) -> ClinicalNote {
        ClinicalNote::new("n", text)
    }

    fn q(text: &str) -> Question {
        Question {
            id: "q".into(),
            text: text.into(),
            gold_answer: "g".into(),
        }
    }

    #[test]
    fn wide_is_passthrough() {
        let n = note("HPI:\nFatigue for months.\nASSESSMENT:\nAnemia.");
        let pkg = build_wide_context(&n);
        assert_eq!(pkg.segments.len(), 1);
        assert_eq!(pkg.segments[0].text, n.text);
        assert_eq!(pkg.context_tokens, n.token_size);
        let empty = build_wide_context(&note(""));
        assert!(empty.is_empty());
        assert_eq!(empty.context_tokens, 0);
    }

    #[test]
    fn stride_offsets() {
        let spans = chunk_spans(10, 4, 1).unwrap();
        assert_eq!(spans, vec![(0, 4), (3, 7), (6, 10), (9, 10)]);
        assert_eq!(chunk_spans(5, 50, 10).unwrap(), vec![(0, 5)]);
        assert_eq!(chunk_spans(0, 4, 1).unwrap(), vec![]);
        assert_eq!(
            chunk_spans(10, 4, 4),
            Err(ChunkError::OverlapTooLarge { overlap: 4, size: 4 })
        );
        assert_eq!(chunk_spans(10, 0, 0), Err(ChunkError::ZeroChunkSize));
    }

    #[test]
    fn verbatim_question_chunk_ranks_first() {
        let filler: Vec<String> = (0..400).map(|i| format!("filler{i}")).collect();
        let question = "Could the anemia have been detected earlier from ferritin trends?";
        let mut words = filler.clone();
        words.splice(250..250, question.split_whitespace().map(String::from));
        let n = note(&words.join(" "));
        let e = HashingEmbedder::default();
        let chunks = chunk_note(&n, 50, 10, &e).unwrap();
        let top = rank_chunks(&e.embed(question), &chunks, 1);
        let c = &chunks[top[0].0];
        assert!(c.text.contains(question), "{}", c.text);
    }

    #[test]
    fn single_chunk_note_is_returned_whole() {
        let n = note("Hemoglobin 9.1 g/dL with fatigue.");
        let pkg = retrieve_rag(
            &n,
            &q("anemia?"),
            &RagConfig {
                k: 1,
                ..RagConfig::default()
            },
            &HashingEmbedder::default(),
        )
        .unwrap();
        assert_eq!(pkg.segments.len(), 1);
        assert_eq!(pkg.segments[0].text, n.text);
    }

    #[test]
    fn overlapping_picks_are_merged() {
        let text: String = (0..30).map(|i| format!("anemia{} ", i % 3)).collect();
        let n = note(&text);
        let cfg = RagConfig {
            chunk_size_words: 10,
            overlap_words: 5,
            k: 3,
        };
        let pkg = retrieve_rag(&n, &q("anemia0 anemia1"), &cfg, &HashingEmbedder::default()).unwrap();
        pkg.check_invariants().unwrap();
        let recount: usize = pkg.segments.iter().map(|s| count_tokens(&s.text)).sum();
        assert_eq!(recount, pkg.context_tokens);
        assert_eq!(pkg.provenance.len(), 3);
    }

    #[test]
    fn invalid_k() {
        let cfg = RagConfig {
            k: 0,
            ..RagConfig::default()
        };
        assert_eq!(
            retrieve_rag(&note("a b"), &q("a"), &cfg, &HashingEmbedder::default()),
            Err(ChunkError::ZeroK)
        );
    }
}
