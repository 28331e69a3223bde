//! Named prompt templates for the workbench and the runner.

use serde::{Deserialize, Serialize};

use crate::retrieval::PromptTemplates;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPreset {
    pub id: String,
    pub name: String,
    pub description: String,
    pub templates: PromptTemplates,
}

const USER: &str = "Clinical note excerpts:\n{context}\n\nQuestion: {question}";

fn preset(id: &str, name: &str, description: &str, system: &str) -> PromptPreset {
    PromptPreset {
        id: id.to_string(),
        name: name.to_string(),
        description: description.to_string(),
        templates: PromptTemplates::new(system, USER).expect("preset templates carry both placeholders"),
    }
}

pub fn builtin_presets() -> Vec<PromptPreset> {
    vec![
        preset(
            "base_question",
            "Base Question",
            "Ask the question directly over the retrieved context.",
            "You are a clinical assistant. Answer using only the provided note excerpts.",
        ),
        preset(
            "timeline_symptom_trigger",
            "Timeline + Symptom Trigger",
            "Order findings in time and flag the first symptom that should have triggered a work-up.",
            "You are a clinical assistant. Build a timeline of the documented visits, note when each \
             symptom or sign first appeared, and identify the first trigger that warranted evaluation. \
             Answer using only the provided note excerpts.",
        ),
        preset(
            "keyword_guided_reasoning",
            "Keyword-Guided Clinical Reasoning",
            "Anchor the reasoning on diagnosis keywords, medications and exam signs.",
            "You are a clinical assistant. Identify the key diagnosis keywords, medications, exam signs \
             and risk factors in the excerpts, then reason from them step by step. Answer using only \
             the provided note excerpts.",
        ),
        preset(
            "risk_factor_lab_search",
            "Risk Factor + Laboratory Search",
            "Search for risk factors and laboratory trends before answering.",
            "You are a clinical assistant. Search the excerpts for documented risk factors and \
             laboratory values such as hemoglobin, ferritin, BNP and ejection fraction, describe their \
             trend, and then answer using only the provided note excerpts.",
        ),
    ]
}

pub fn find_preset(id: &str) -> Option<PromptPreset> {
    builtin_presets().into_iter().find(|p| p.id == id)
}

pub fn default_templates() -> PromptTemplates {
    find_preset("base_question").expect("builtin").templates
}
