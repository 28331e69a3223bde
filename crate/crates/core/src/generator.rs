//! Deterministic synthetic clinical notes.
//!
//! A note is a preamble followed by a series of dated encounters, each made of
//! standard clinical sections filled from sentence templates. One encounter
//! carries planted fact sentences that answer the two evaluation questions;
//! its position in the note is controlled by [`Placement`]. The planted facts
//! for each question sit in different sections, far enough apart that no
//! single retrieval chunk holds two of them. A short addendum at the end
//! brings the note to the requested token count.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{ClinicalNote, Corpus, CorpusError, Question};
use crate::entities::{EntityCategory, Lexicon};
use crate::text::{alnum_words, count_tokens, WordIndex};

pub const MIN_TARGET_TOKENS: usize = 1_000;

pub const ANEMIA_QUESTION_ID: &str = "q1";
pub const HEART_FAILURE_QUESTION_ID: &str = "q2";
pub const ANEMIA_QUESTION: &str =
    "Could the patient's anemia have been detected earlier based on their medical history? Answer in one paragraph.";
pub const HEART_FAILURE_QUESTION: &str =
    "Could the patient's heart failure have been detected earlier based on symptoms? Answer in one paragraph.";

/// Target sizes of the default twelve-note corpus.
pub const DEFAULT_TARGETS: [usize; 12] = [
    10_025, 10_142, 10_233, 10_098, 42_011, 42_181, 42_072, 42_230, 65_186, 65_233, 65_141, 65_310,
];

// Fact sentences, in document order within the planted encounter.
const ANEMIA_FACTS: [(&str, &str); 4] = [
    (
        "HISTORY OF PRESENT ILLNESS",
        "Review of the medical history shows the patient reported progressive fatigue and exertional dizziness for over a year, so the anemia could have been detected earlier.",
    ),
    (
        "PAST MEDICAL HISTORY",
        "The medical history includes chronic ibuprofen use and heavy menstrual bleeding, known anemia risk factors that should have prompted earlier screening with a complete blood count.",
    ),
    (
        "LABORATORY",
        "Prior laboratory history shows hemoglobin falling from 13.1 to 9.8 g/dL with ferritin 9 ng/mL, an anemia trend in the patient's record that could have been detected earlier.",
    ),
    (
        "ASSESSMENT",
        "Iron deficiency anemia was likely present for months; based on the medical history and serial labs, the patient's anemia could have been detected earlier.",
    ),
];

const HEART_FAILURE_FACTS: [(&str, &str); 4] = [
    (
        "HISTORY OF PRESENT ILLNESS",
        "The patient described orthopnea, paroxysmal nocturnal dyspnea and ankle edema for several months, symptoms suggesting heart failure could have been detected earlier.",
    ),
    (
        "PHYSICAL EXAM",
        "Exam found jugular venous distension, crackles at the lung bases and pedal edema, signs of heart failure matching the symptoms the patient reported earlier.",
    ),
    (
        "LABORATORY",
        "BNP 1240 pg/mL and an echocardiogram with ejection fraction 35% confirmed heart failure that the earlier symptoms could have detected sooner.",
    ),
    (
        "ASSESSMENT",
        "Heart failure with reduced ejection fraction; based on the symptoms of dyspnea, orthopnea and edema, the patient's heart failure could have been detected earlier.",
    ),
];

// Filler text never uses these words, so only planted facts align strongly
// with the questions.
const RESERVED_WORDS: &[&str] = &[
    "anemia", "heart", "failure", "detected", "earlier", "medical", "history", "patient",
    "symptoms", "based", "answer", "paragraph", "sooner",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Beginning,
    #[default]
    Middle,
    End,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Beginning => "beginning",
            Placement::Middle => "middle",
            Placement::End => "end",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beginning" => Ok(Placement::Beginning),
            "middle" => Ok(Placement::Middle),
            "end" => Ok(Placement::End),
            other => Err(format!("unknown placement `{other}` (expected beginning, middle or end)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFact {
    pub question_id: String,
    pub section: String,
    pub start_word: usize,
    pub end_word: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteMeta {
    pub seed: u64,
    pub target_tokens: usize,
    pub placement: Placement,
    pub encounters: usize,
    pub planted_encounter: usize,
    /// Distinct section headings in order of first appearance.
    pub headings: Vec<String>,
    pub facts: Vec<PlantedFact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedNote {
    pub note: ClinicalNote,
    pub meta: NoteMeta,
}

/// Reference answer for a question: its planted facts as one paragraph.
pub fn gold_answer(question_id: &str) -> Option<String> {
    let facts = match question_id {
        ANEMIA_QUESTION_ID => &ANEMIA_FACTS,
        HEART_FAILURE_QUESTION_ID => &HEART_FAILURE_FACTS,
        _ => return None,
    };
    Some(facts.iter().map(|(_, s)| *s).collect::<Vec<_>>().join(" "))
}

pub fn default_questions() -> Vec<Question> {
    [
        (ANEMIA_QUESTION_ID, ANEMIA_QUESTION),
        (HEART_FAILURE_QUESTION_ID, HEART_FAILURE_QUESTION),
    ]
    .into_iter()
    .map(|(id, text)| Question {
        id: id.to_string(),
        text: text.to_string(),
        gold_answer: gold_answer(id).expect("known question"),
    })
    .collect()
}

struct Vocabulary {
    terms: BTreeMap<EntityCategory, Vec<String>>,
}

impl Vocabulary {
    fn new() -> Self {
        let reserved: HashSet<&str> = RESERVED_WORDS.iter().copied().collect();
        let lexicon = Lexicon::builtin();
        let terms = EntityCategory::ALL
            .into_iter()
            .map(|c| {
                let list = lexicon
                    .terms(c)
                    .iter()
                    .filter(|t| alnum_words(t).all(|w| !reserved.contains(w.as_str())))
                    .cloned()
                    .collect();
                (c, list)
            })
            .collect();
        Self { terms }
    }

    fn pick<'a>(&'a self, rng: &mut ChaCha8Rng, c: EntityCategory) -> &'a str {
        self.terms[&c].choose(rng).map(String::as_str).unwrap_or("none")
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty choices")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Chief,
    Hpi,
    Pmh,
    Meds,
    Social,
    Family,
    Exam,
    Labs,
    Assessment,
    Plan,
    Addendum,
}

impl Kind {
    fn heading(self) -> &'static str {
        match self {
            Kind::Chief => "CHIEF COMPLAINT",
            Kind::Hpi => "HISTORY OF PRESENT ILLNESS",
            Kind::Pmh => "PAST MEDICAL HISTORY",
            Kind::Meds => "MEDICATIONS",
            Kind::Social => "SOCIAL HISTORY",
            Kind::Family => "FAMILY HISTORY",
            Kind::Exam => "PHYSICAL EXAM",
            Kind::Labs => "LABORATORY",
            Kind::Assessment => "ASSESSMENT",
            Kind::Plan => "PLAN",
            Kind::Addendum => "ADDENDUM",
        }
    }
}

const ENCOUNTER_HEADING: &str = "PROGRESS NOTE";

struct Writer<'v> {
    rng: ChaCha8Rng,
    vocab: &'v Vocabulary,
    pronoun: &'static str,
}

impl Writer<'_> {
    fn num(&mut self, lo: u32, hi: u32) -> u32 {
        self.rng.gen_range(lo..=hi)
    }

    fn term(&mut self, c: EntityCategory) -> String {
        self.vocab.pick(&mut self.rng, c).to_string()
    }

    fn sentence(&mut self, kind: Kind) -> String {
        use EntityCategory::*;
        let p = self.pronoun;
        let cap = capitalize(p);
        match kind {
            Kind::Chief => match self.num(0, 4) {
                0 => format!("Follow-up visit for {}.", self.term(Disease)),
                1 => format!("Presents with {} for {} days.", self.term(Symptom), self.num(2, 30)),
                2 => format!("Routine review of {} and {}.", self.term(Disease), self.term(Disease)),
                3 => format!("Requests refill of {}.", self.term(Medication)),
                _ => format!("Concern about {} involving the {}.", self.term(Symptom), self.term(Anatomy)),
            },
            Kind::Hpi => match self.num(0, 9) {
                0 => format!(
                    "{cap} reports {} that began about {} weeks ago and is worse in the evening.",
                    self.term(Symptom),
                    self.num(1, 12)
                ),
                1 => format!(
                    "{cap} denies {} or {} since the last visit.",
                    self.term(Symptom),
                    self.term(Symptom)
                ),
                2 => format!(
                    "Since starting {}, {p} notes less {} and better sleep.",
                    self.term(Medication),
                    self.term(Symptom)
                ),
                3 => format!(
                    "{cap} was seen in urgent care for {} and was given {}.",
                    self.term(Symptom),
                    self.term(Medication)
                ),
                4 => format!(
                    "A recent {} of the {} was unremarkable per outside records.",
                    self.term(Procedure),
                    self.term(Anatomy)
                ),
                5 => format!(
                    "{cap} walks {} blocks daily and climbs {} flights of stairs without stopping.",
                    self.num(2, 20),
                    self.num(1, 4)
                ),
                6 => format!(
                    "Adherence to {} has been good, with {} missed doses this month.",
                    self.term(Medication),
                    self.num(0, 3)
                ),
                7 => format!(
                    "{cap} describes intermittent {} lasting {} minutes, relieved by rest.",
                    self.term(Symptom),
                    self.num(5, 45)
                ),
                8 => format!(
                    "Home readings show BP {}/{} mmHg and pulse {} on most mornings.",
                    self.num(110, 150),
                    self.num(65, 95),
                    self.num(58, 96)
                ),
                _ => format!(
                    "{cap} asks whether {} could explain the recent {}.",
                    self.term(Medication),
                    self.term(Symptom)
                ),
            },
            Kind::Pmh => match self.num(0, 4) {
                0 => format!("{} diagnosed {} years ago.", capitalize(&self.term(Disease)), self.num(1, 25)),
                1 => format!("Remote {} of the {} without complication.", self.term(Procedure), self.term(Anatomy)),
                2 => format!("Longstanding {}, stable on current therapy.", self.term(Disease)),
                3 => format!("Hospitalized in {} for {}.", 2000 + self.num(5, 20), self.term(Disease)),
                _ => format!("No prior {} or {}.", self.term(Disease), self.term(Disease)),
            },
            Kind::Meds => match self.num(0, 3) {
                0 => format!("{} {} mg daily.", capitalize(&self.term(Medication)), 5 * self.num(1, 20)),
                1 => format!("{} {} mg twice daily.", capitalize(&self.term(Medication)), 5 * self.num(1, 40)),
                2 => format!("{} as needed, rarely used.", capitalize(&self.term(Medication))),
                _ => format!("{} was stopped after {}.", capitalize(&self.term(Medication)), self.term(Symptom)),
            },
            Kind::Social => match self.num(0, 3) {
                0 => format!("Former smoker, quit {} years ago.", self.num(2, 30)),
                1 => "Drinks alcohol socially, no drug use.".to_string(),
                2 => format!("Works as a {} and lives with family.", pick(&mut self.rng, &["teacher", "driver", "nurse", "clerk", "farmer", "chef"])),
                _ => format!("Exercises {} times a week.", self.num(0, 5)),
            },
            Kind::Family => match self.num(0, 2) {
                0 => format!("Mother with {}.", self.term(Disease)),
                1 => format!("Father had {} in his sixties.", self.term(Disease)),
                _ => format!("Sibling with {}.", self.term(Disease)),
            },
            Kind::Exam => match self.num(0, 6) {
                0 => format!(
                    "BP {}/{} mmHg, HR {} bpm, SpO2 {}% on room air.",
                    self.num(105, 160),
                    self.num(60, 98),
                    self.num(55, 105),
                    self.num(92, 100)
                ),
                1 => format!("The {} is normal to inspection and palpation.", self.term(Anatomy)),
                2 => format!("Mild tenderness over the {} without guarding.", self.term(Anatomy)),
                3 => format!("No {} appreciated today.", self.term(Symptom)),
                4 => format!("Weight {} kg, unchanged from prior.", self.num(55, 110)),
                5 => format!("Exam of the {} and {} is unremarkable.", self.term(Anatomy), self.term(Anatomy)),
                _ => "Alert and oriented, in no acute distress.".to_string(),
            },
            Kind::Labs => match self.num(0, 6) {
                0 => format!("Creatinine {}.{} mg/dL, stable.", self.num(0, 1), self.num(6, 9)),
                1 => format!("Sodium {} and potassium {}.{} within range.", self.num(135, 144), self.num(3, 4), self.num(1, 9)),
                2 => format!("{} reviewed and within normal limits.", capitalize(&self.term(Procedure))),
                3 => format!("Glucose {} mg/dL fasting.", self.num(80, 140)),
                4 => format!("TSH {}.{} with normal free T4.", self.num(0, 3), self.num(1, 9)),
                5 => format!("Platelet count {} and WBC {}.{}.", self.num(150, 400), self.num(4, 10), self.num(0, 9)),
                _ => format!("{} pending at the time of this note.", capitalize(&self.term(LabValue))),
            },
            Kind::Assessment => match self.num(0, 4) {
                0 => format!("{}, well controlled.", capitalize(&self.term(Disease))),
                1 => format!("{} likely related to {}.", capitalize(&self.term(Symptom)), self.term(Disease)),
                2 => format!("{}, improving on {}.", capitalize(&self.term(Disease)), self.term(Medication)),
                3 => format!("Stable {} without new concerns.", self.term(Disease)),
                _ => format!("{} noted, monitor.", capitalize(&self.term(Symptom))),
            },
            Kind::Plan => match self.num(0, 4) {
                0 => format!("Continue {}.", self.term(Medication)),
                1 => format!("Order {} before the next visit.", self.term(Procedure)),
                2 => format!("Increase {} to {} mg daily.", self.term(Medication), 5 * self.num(2, 20)),
                3 => format!("Return in {} weeks, or before then if {} worsens.", self.num(2, 12), self.term(Symptom)),
                _ => format!("Recheck {} in {} months.", self.term(LabValue), self.num(1, 6)),
            },
            Kind::Addendum => match self.num(0, 2) {
                0 => format!("Outside records for {} were received and filed.", self.term(Procedure)),
                1 => format!("Message sent regarding {} refill.", self.term(Medication)),
                _ => "Chart reviewed for completeness.".to_string(),
            },
        }
    }

    /// Sentences of `kind`, one per line, totalling at least `min_words`.
    fn filler_words(&mut self, kind: Kind, min_words: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut words = 0;
        while words < min_words {
            let s = self.sentence(kind);
            words += s.split_whitespace().count();
            out.push(s);
        }
        out
    }

    fn filler_count(&mut self, kind: Kind, lo: u32, hi: u32) -> Vec<String> {
        let n = self.num(lo, hi);
        (0..n).map(|_| self.sentence(kind)).collect()
    }

    fn date_line(&self, index: usize, start: (u32, u32)) -> String {
        let months = start.1 - 1 + index as u32;
        format!(
            "Date of service: {}-{:02}-{:02}. Visit type: follow-up.",
            start.0 + months / 12,
            months % 12 + 1,
            1 + (index * 7) % 27
        )
    }

    fn encounter(&mut self, index: usize, start: (u32, u32)) -> String {
        let mut parts = vec![ENCOUNTER_HEADING.to_string(), self.date_line(index, start)];
        let plan: [(Kind, u32, u32, bool); 10] = [
            (Kind::Chief, 1, 2, false),
            (Kind::Hpi, 4, 10, false),
            (Kind::Pmh, 2, 5, true),
            (Kind::Meds, 3, 8, false),
            (Kind::Social, 1, 3, true),
            (Kind::Family, 1, 3, true),
            (Kind::Exam, 3, 7, false),
            (Kind::Labs, 3, 7, false),
            (Kind::Assessment, 2, 5, false),
            (Kind::Plan, 2, 6, false),
        ];
        for (kind, lo, hi, optional) in plan {
            if optional && self.rng.gen_bool(0.3) {
                continue;
            }
            parts.push(format!("{}:", kind.heading()));
            parts.extend(self.filler_count(kind, lo, hi));
        }
        parts.join("\n")
    }

    /// The encounter carrying the planted facts. `gap` filler words separate
    /// consecutive fact blocks.
    fn planted_encounter(&mut self, index: usize, start: (u32, u32), gap: usize) -> String {
        let mut parts = vec![ENCOUNTER_HEADING.to_string(), self.date_line(index, start)];
        let facts_in = |section: &str| -> Vec<String> {
            ANEMIA_FACTS
                .iter()
                .chain(HEART_FAILURE_FACTS.iter())
                .filter(|(s, _)| *s == section)
                .map(|(_, f)| f.to_string())
                .collect()
        };
        let layout: [(Kind, usize, usize); 10] = [
            (Kind::Chief, 0, 0),
            (Kind::Hpi, gap / 4, gap),
            (Kind::Pmh, 0, gap),
            (Kind::Meds, 0, gap / 3),
            (Kind::Social, 0, gap / 6),
            (Kind::Family, 0, gap / 6),
            (Kind::Exam, 0, gap),
            (Kind::Labs, 0, gap),
            (Kind::Assessment, 0, gap / 4),
            (Kind::Plan, 0, gap / 3),
        ];
        for (kind, before, after) in layout {
            parts.push(format!("{}:", kind.heading()));
            if kind == Kind::Chief {
                parts.push(self.sentence(kind));
                continue;
            }
            parts.extend(self.filler_words(kind, before));
            parts.extend(facts_in(kind.heading()));
            parts.extend(self.filler_words(kind, after));
        }
        parts.join("\n")
    }

    fn preamble(&mut self) -> String {
        format!(
            "Synthetic record {}. {}-year-old {} followed in primary care.\nProblem list reviewed at each visit.",
            self.num(10_000, 99_999),
            self.num(45, 85),
            if self.pronoun == "she" { "woman" } else { "man" }
        )
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

// Short closers used to land exactly on the target.
const PADDING: [&str; 3] = ["Reviewed.", "Will follow.", "No change noted."];

/// Generate one note with facts planted mid-document.
pub fn generate_note(seed: u64, target_tokens: usize) -> Result<GeneratedNote, CorpusError> {
    generate_note_with(seed, target_tokens, Placement::Middle)
}

pub fn generate_note_with(
    seed: u64,
    target_tokens: usize,
    placement: Placement,
) -> Result<GeneratedNote, CorpusError> {
    if target_tokens < MIN_TARGET_TOKENS {
        return Err(CorpusError::TargetTooSmall(target_tokens));
    }
    let vocab = Vocabulary::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pronoun = if rng.gen_bool(0.5) { "she" } else { "he" };
    let start = (2014 + rng.gen_range(0..6), rng.gen_range(1..=12));
    let mut w = Writer {
        rng,
        vocab: &vocab,
        pronoun,
    };

    let preamble = w.preamble();
    let gap = (target_tokens / 20).clamp(20, 240);
    // Index fixed up after the encounter count is known.
    let planted_probe = w.planted_encounter(0, start, gap);
    let mut used = count_tokens(&preamble) + count_tokens(&planted_probe);

    let mut fillers = Vec::new();
    loop {
        let e = w.encounter(fillers.len() + 1, start);
        let t = count_tokens(&e);
        if used + t > target_tokens {
            break;
        }
        used += t;
        fillers.push(e);
    }

    let planted_at = match placement {
        Placement::Beginning => 0,
        Placement::Middle => fillers.len().div_ceil(2),
        Placement::End => fillers.len(),
    };
    let total_encounters = fillers.len() + 1;
    // Re-date encounters in order; dates are the only index-dependent text.
    let mut encounters: Vec<String> = Vec::with_capacity(total_encounters);
    let mut filler_iter = fillers.into_iter();
    for i in 0..total_encounters {
        let text = if i == planted_at {
            planted_probe.clone()
        } else {
            filler_iter.next().expect("filler count")
        };
        let mut lines: Vec<&str> = text.splitn(3, '\n').collect();
        let date = w.date_line(i, start);
        lines[1] = &date;
        encounters.push(lines.join("\n"));
    }

    let mut body = vec![preamble];
    body.extend(encounters);
    let mut text = body.join("\n");
    let mut total = count_tokens(&text);

    let mut addendum: Vec<String> = Vec::new();
    let heading = format!("{}:", Kind::Addendum.heading());
    if total + count_tokens(&heading) + 2 <= target_tokens {
        total += count_tokens(&heading);
        loop {
            let s = w.sentence(Kind::Addendum);
            let t = count_tokens(&s);
            if total + t > target_tokens {
                break;
            }
            total += t;
            addendum.push(s);
        }
        loop {
            let remaining = target_tokens - total;
            let Some(p) = PADDING.iter().rev().find(|p| count_tokens(p) <= remaining) else {
                break;
            };
            total += count_tokens(p);
            addendum.push(p.to_string());
        }
        text.push('\n');
        text.push_str(&heading);
        for line in &addendum {
            text.push('\n');
            text.push_str(line);
        }
    }

    let note = ClinicalNote::new(format!("note_{seed}"), text);
    let meta = describe(&note, seed, target_tokens, placement, total_encounters, planted_at);
    Ok(GeneratedNote { note, meta })
}

fn describe(
    note: &ClinicalNote,
    seed: u64,
    target_tokens: usize,
    placement: Placement,
    encounters: usize,
    planted_encounter: usize,
) -> NoteMeta {
    let mut headings: Vec<String> = Vec::new();
    if !note.text.starts_with(ENCOUNTER_HEADING) {
        headings.push(crate::sectionizer::PREAMBLE.to_string());
    }
    for line in note.text.lines() {
        let name = line.trim_end_matches(':');
        let is_heading = name == ENCOUNTER_HEADING
            || [
                Kind::Chief,
                Kind::Hpi,
                Kind::Pmh,
                Kind::Meds,
                Kind::Social,
                Kind::Family,
                Kind::Exam,
                Kind::Labs,
                Kind::Assessment,
                Kind::Plan,
                Kind::Addendum,
            ]
            .iter()
            .any(|k| k.heading() == name);
        if is_heading && !headings.iter().any(|h| h == name) {
            headings.push(name.to_string());
        }
    }

    let words = WordIndex::new(&note.text);
    let mut facts = Vec::new();
    for (qid, list) in [
        (ANEMIA_QUESTION_ID, &ANEMIA_FACTS),
        (HEART_FAILURE_QUESTION_ID, &HEART_FAILURE_FACTS),
    ] {
        for (section, sentence) in list.iter() {
            let at = note.text.find(sentence).expect("planted sentence present");
            let (start_word, end_word) = words.words_covering(at, at + sentence.len());
            facts.push(PlantedFact {
                question_id: qid.to_string(),
                section: section.to_string(),
                start_word,
                end_word,
            });
        }
    }
    facts.sort_by_key(|f| f.start_word);

    NoteMeta {
        seed,
        target_tokens,
        placement,
        encounters,
        planted_encounter,
        headings,
        facts,
    }
}

fn note_seed(corpus_seed: u64, index: usize) -> u64 {
    // SplitMix64 step so neighbouring corpus seeds give unrelated notes.
    let mut z = corpus_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Twelve notes (four each near 10K, 42K and 65K tokens) with facts planted
/// mid-document, plus the two evaluation questions.
pub fn build_default_corpus(seed: u64) -> Corpus {
    build_corpus(seed, Placement::Middle, &DEFAULT_TARGETS).expect("default targets are valid")
}

pub fn build_corpus(seed: u64, placement: Placement, targets: &[usize]) -> Result<Corpus, CorpusError> {
    use rayon::prelude::*;
    let generated: Vec<GeneratedNote> = targets
        .par_iter()
        .enumerate()
        .map(|(i, &target)| {
            generate_note_with(note_seed(seed, i), target, placement).map(|mut g| {
                g.note.id = format!("clinical_note{}", i + 1);
                g
            })
        })
        .collect::<Result<_, _>>()?;

    let mut note_meta = serde_json::Map::new();
    for g in &generated {
        note_meta.insert(g.note.id.clone(), serde_json::to_value(&g.meta).expect("serializable"));
    }
    let mut metadata: BTreeMap<String, Value> = BTreeMap::new();
    metadata.insert("generator".into(), json!("clearbench-synthetic"));
    metadata.insert("generator_version".into(), json!(1));
    metadata.insert("seed".into(), json!(seed));
    metadata.insert("placement".into(), json!(placement.as_str()));
    metadata.insert("notes".into(), Value::Object(note_meta));

    let corpus = Corpus {
        metadata,
        notes: generated.into_iter().map(|g| g.note).collect(),
        questions: default_questions(),
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Planted-fact metadata for `note_id`, if the corpus came from this
/// generator.
pub fn note_meta(corpus: &Corpus, note_id: &str) -> Option<NoteMeta> {
    let v = corpus.metadata.get("notes")?.get(note_id)?;
    serde_json::from_value(v.clone()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SizeClass;
    use crate::sectionizer::{parse_sections, SectionWeightTable, ASSESSMENT, HPI, PLAN};

    #[test]
    fn small_note_has_required_headings() {
        let g = generate_note(1, 10_000).unwrap();
        let names: HashSet<String> = parse_sections(&g.note.text, &SectionWeightTable::default())
            .into_iter()
            .map(|s| s.name)
            .collect();
        for h in [HPI, ASSESSMENT, PLAN, "MEDICATIONS", "LABORATORY"] {
            assert!(names.contains(h), "missing {h}");
        }
    }

    #[test]
    fn deterministic_bytes() {
        assert_eq!(generate_note(1, 10_000).unwrap().note.text, generate_note(1, 10_000).unwrap().note.text);
        assert_ne!(generate_note(1, 10_000).unwrap().note.text, generate_note(2, 10_000).unwrap().note.text);
    }

    #[test]
    fn sizes_within_two_percent() {
        for (seed, target) in [(1, 10_000), (2, 65_000), (3, 1_000), (4, 42_000)] {
            let n = generate_note(seed, target).unwrap().note;
            let lo = target as f64 * 0.98;
            let hi = target as f64 * 1.02;
            let t = count_tokens(&n.text) as f64;
            assert!(t >= lo && t <= hi, "seed {seed}: {t} vs {target}");
        }
        let n = generate_note(2, 65_000).unwrap().note;
        assert!((63_700..=66_300).contains(&n.token_size));
    }

    #[test]
    fn target_below_minimum_is_rejected() {
        assert!(matches!(generate_note(1, 999), Err(CorpusError::TargetTooSmall(999))));
    }

    #[test]
    fn facts_are_spread_out() {
        let g = generate_note(7, 10_000).unwrap();
        assert_eq!(g.meta.facts.len(), 8);
        for qid in [ANEMIA_QUESTION_ID, HEART_FAILURE_QUESTION_ID] {
            let spans: Vec<&PlantedFact> = g.meta.facts.iter().filter(|f| f.question_id == qid).collect();
            for pair in spans.windows(2) {
                assert!(pair[1].start_word - pair[0].end_word > 200, "{pair:?}");
            }
        }
        let words = WordIndex::new(&g.note.text);
        for f in &g.meta.facts {
            let s = words.slice(f.start_word, f.end_word);
            assert!(ANEMIA_FACTS.iter().chain(HEART_FAILURE_FACTS.iter()).any(|(_, x)| *x == s));
        }
    }

    #[test]
    fn placement_moves_the_facts() {
        let at = |p| {
            let g = generate_note_with(5, 20_000, p).unwrap();
            g.meta.facts[0].start_word as f64 / WordIndex::new(&g.note.text).len() as f64
        };
        let (b, m, e) = (at(Placement::Beginning), at(Placement::Middle), at(Placement::End));
        assert!(b < 0.15 && (0.35..0.65).contains(&m) && e > 0.8, "{b} {m} {e}");
    }

    #[test]
    fn filler_avoids_reserved_words() {
        let g = generate_note(9, 5_000).unwrap();
        let mut text = g.note.text.clone();
        for (_, f) in ANEMIA_FACTS.iter().chain(HEART_FAILURE_FACTS.iter()) {
            text = text.replace(f, "");
        }
        let reserved: HashSet<&str> = RESERVED_WORDS.iter().copied().collect();
        let lowered = text.to_lowercase();
        let headings_stripped: String = lowered
            .lines()
            .filter(|l| !l.contains("past medical history") && !l.contains("social history") && !l.contains("family history") && !l.contains("history of present illness"))
            .collect::<Vec<_>>()
            .join("\n");
        let hits: Vec<String> = alnum_words(&headings_stripped).filter(|w| reserved.contains(w.as_str())).collect();
        assert!(hits.is_empty(), "{hits:?}");
    }

    #[test]
    fn default_corpus_shape() {
        let c = build_default_corpus(42);
        assert_eq!(c.notes.len(), 12);
        let mut hist = BTreeMap::new();
        for n in &c.notes {
            *hist.entry(n.size_class).or_insert(0) += 1;
        }
        assert_eq!(hist[&SizeClass::Small], 4);
        assert_eq!(hist[&SizeClass::Medium], 4);
        assert_eq!(hist[&SizeClass::Large], 4);
        assert!(c.questions[0].text.starts_with("Could the patient's anemia have been detected earlier"));
        c.validate().unwrap();
        let meta = note_meta(&c, "clinical_note1").unwrap();
        let names: Vec<String> = {
            let mut seen = Vec::new();
            for s in parse_sections(&c.notes[0].text, &SectionWeightTable::default()) {
                if !seen.contains(&s.name) {
                    seen.push(s.name);
                }
            }
            seen
        };
        assert_eq!(names, meta.headings);
    }
}
