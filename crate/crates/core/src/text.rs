//! Tokenization and word indexing shared by every retrieval strategy.
//!
//! Two unit systems coexist:
//! - *tokens*: maximal runs of alphanumeric characters plus standalone
//!   punctuation marks. Used for all budget and cost accounting.
//! - *words*: whitespace-delimited pieces of the text. Used for spans, since
//!   entity windows are measured in words.
//!
//! A token never crosses whitespace, so the token count of any word range
//! equals the sum of its words' token counts.

/// Iterate over the tokens of `text`.
pub fn tokens(text: &str) -> Tokens<'_> {
    Tokens { text, pos: 0 }
}

/// Number of tokens in `text`. Whitespace is never counted.
pub fn count_tokens(text: &str) -> usize {
    tokens(text).count()
}

pub struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for Tokens<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        let mut chars = rest.char_indices();
        let (start, first) = loop {
            let (i, c) = chars.next()?;
            if !c.is_whitespace() {
                break (i, c);
            }
        };
        let end = if first.is_alphanumeric() {
            chars
                .find(|&(_, c)| !c.is_alphanumeric())
                .map_or(rest.len(), |(i, _)| i)
        } else {
            start + first.len_utf8()
        };
        self.pos += end;
        Some(&rest[start..end])
    }
}

/// Lowercased alphanumeric runs; punctuation dropped.
pub fn alnum_words(text: &str) -> impl Iterator<Item = String> + '_ {
    tokens(text)
        .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
        .map(str::to_lowercase)
}

/// Collapse runs of whitespace to a single space and trim the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte offsets and token counts for every whitespace-delimited word.
#[derive(Debug, Clone)]
pub struct WordIndex<'a> {
    text: &'a str,
    spans: Vec<(usize, usize)>,
    // token_prefix[i] = tokens in words [0, i)
    token_prefix: Vec<usize>,
}

impl<'a> WordIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push((s, i));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push((s, text.len()));
        }
        let mut token_prefix = Vec::with_capacity(spans.len() + 1);
        token_prefix.push(0);
        let mut acc = 0;
        for &(s, e) in &spans {
            acc += count_tokens(&text[s..e]);
            token_prefix.push(acc);
        }
        Self {
            text,
            spans,
            token_prefix,
        }
    }

    pub fn text(&self) -> &'a str {
        self.text
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn word(&self, i: usize) -> &'a str {
        let (s, e) = self.spans[i];
        &self.text[s..e]
    }

    /// Byte range of word `i`.
    pub fn byte_span(&self, i: usize) -> (usize, usize) {
        self.spans[i]
    }

    /// Original text from the first byte of word `start` to the last byte of
    /// word `end - 1`. Empty for an empty range.
    pub fn slice(&self, start: usize, end: usize) -> &'a str {
        if start >= end {
            return "";
        }
        &self.text[self.spans[start].0..self.spans[end - 1].1]
    }

    /// Tokens in words `[start, end)`.
    pub fn tokens_in(&self, start: usize, end: usize) -> usize {
        if start >= end {
            return 0;
        }
        self.token_prefix[end] - self.token_prefix[start]
    }

    pub fn total_tokens(&self) -> usize {
        *self.token_prefix.last().unwrap_or(&0)
    }

    /// Index of the first word whose byte span ends after `byte`.
    pub fn word_at_or_after(&self, byte: usize) -> usize {
        self.spans.partition_point(|&(_, e)| e <= byte)
    }

    /// Word range `[start, end)` overlapping the byte range `[from, to)`.
    pub fn words_covering(&self, from: usize, to: usize) -> (usize, usize) {
        let start = self.word_at_or_after(from);
        let end = self.spans.partition_point(|&(s, _)| s < to);
        (start, end.max(start))
    }

    /// Byte offset where each line begins, paired with the index of the first
    /// word at or after that offset.
    pub fn lines(&self) -> impl Iterator<Item = (&'a str, usize)> + '_ {
        let mut offset = 0;
        self.text.split('\n').map(move |line| {
            let first_word = self.word_at_or_after(offset);
            offset += line.len() + 1;
            (line, first_word)
        })
    }
}
