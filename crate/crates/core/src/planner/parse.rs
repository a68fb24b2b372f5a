//! Parsing of planner answers and the self-consistency vote.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const UNKNOWN_ACTION: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtAction {
    pub thought: String,
    pub action: String,
}

/// Text after the last `Answer:`, trimmed; otherwise the last sentence.
pub fn parse_cot_answer(completion: &str) -> String {
    if let Some(idx) = completion.rfind("Answer:") {
        return completion[idx + "Answer:".len()..].trim().to_string();
    }
    last_sentence(completion)
}

/// The final non-empty sentence, including its terminator if it has one.
/// Sentences end at '.', '!' or '?'.
pub fn last_sentence(text: &str) -> String {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            sentences.push(std::mem::take(&mut current));
        }
    }
    sentences.push(current);
    sentences
        .into_iter()
        .rev()
        .map(|s| s.trim().to_string())
        .find(|s| !s.is_empty() && !s.chars().all(|c| matches!(c, '.' | '!' | '?')))
        .unwrap_or_default()
}

static ACTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Action(?:\s*\d+)?:[ \t]*([^\n]*)").unwrap());
static THOUGHT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Thought(?:\s*\d+)?:").unwrap());

/// Extracts the thought and the first action line. The prompt ends with
/// `Thought:`, so leading text before any marker is the thought.
pub fn parse_react(completion: &str) -> ThoughtAction {
    let action_match = ACTION_RE.captures(completion);
    let head_end = action_match
        .as_ref()
        .map_or(completion.len(), |c| c.get(0).unwrap().start());
    let head = &completion[..head_end];
    let thought = match THOUGHT_RE.find(head) {
        Some(m) if head[..m.start()].trim().is_empty() => &head[m.end()..],
        _ => head,
    };
    let action = action_match
        .map(|c| c.get(1).unwrap().as_str().trim().to_string())
        .filter(|a| !a.is_empty())
        .unwrap_or_else(|| UNKNOWN_ACTION.to_string());
    ThoughtAction {
        thought: thought.trim().to_string(),
        action,
    }
}

/// Stop detection for planners without latent state: any "done", any case.
pub fn detect_done_minus(action: &str) -> bool {
    action.to_lowercase().contains("done")
}

/// Vote key: lowercase, whitespace collapsed, trailing periods removed.
pub fn normalize_vote(action: &str) -> String {
    let collapsed = action
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed.trim_end_matches('.').trim_end().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    /// Sample index of the winner's first occurrence.
    pub winner_index: usize,
    pub winner: String,
    pub key: String,
    pub votes: usize,
}

/// Majority vote over parsed answers; ties go to the candidate whose first
/// occurrence has the lowest index. Empty answers do not vote.
pub fn majority_vote(answers: &[String]) -> Option<VoteOutcome> {
    let mut tallies: Vec<(String, usize, usize)> = Vec::new();
    for (i, answer) in answers.iter().enumerate() {
        let key = normalize_vote(answer);
        if key.is_empty() {
            continue;
        }
        match tallies.iter_mut().find(|(k, _, _)| *k == key) {
            Some(entry) => entry.2 += 1,
            None => tallies.push((key, i, 1)),
        }
    }
    // tallies are in first-occurrence order, so a strict > keeps the earliest on ties
    let mut best: Option<&(String, usize, usize)> = None;
    for entry in &tallies {
        if best.is_none_or(|b| entry.2 > b.2) {
            best = Some(entry);
        }
    }
    best.map(|(key, first, votes)| VoteOutcome {
        winner_index: *first,
        winner: answers[*first].trim().to_string(),
        key: key.clone(),
        votes: *votes,
    })
}
