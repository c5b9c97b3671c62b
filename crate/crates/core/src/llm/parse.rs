//! Parser for ReAct-formatted model output.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::toolkit::ArgInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    ThoughtAction,
    FinalAnswer,
    Malformed,
}

/// Tool name plus argument text, before validation against a spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDraft {
    pub tool: String,
    pub input: ArgInput,
    pub raw_input: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub kind: TurnKind,
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionDraft>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub raw: String,
}

fn find_marker(text: &str, marker: &str) -> Option<usize> {
    text.find(marker)
}

/// Parse one model turn. A `Final Answer:` marker wins; otherwise
/// `Thought:`, `Action:` and `Action Input:` are all required.
pub fn parse_turn(text: &str) -> ParsedTurn {
    let raw = text.to_string();
    let thought_at = find_marker(text, "Thought:");
    if let Some(f) = find_marker(text, "Final Answer:") {
        let thought = match thought_at {
            Some(t) if t < f => text[t + "Thought:".len()..f].trim().to_string(),
            _ => String::new(),
        };
        let answer = text[f + "Final Answer:".len()..].trim().to_string();
        return ParsedTurn {
            kind: TurnKind::FinalAnswer,
            thought,
            action: None,
            final_answer: Some(answer),
            diagnostic: None,
            raw,
        };
    }
    let malformed = |missing: &str| ParsedTurn {
        kind: TurnKind::Malformed,
        thought: String::new(),
        action: None,
        final_answer: None,
        diagnostic: Some(format!(
            "missing {missing}; reply with Thought:, Action: and Action Input: lines, or with Final Answer:"
        )),
        raw: raw.clone(),
    };
    let Some(t) = thought_at else {
        return malformed("Thought:");
    };
    let after_thought = t + "Thought:".len();
    let Some(a_rel) = find_marker(&text[after_thought..], "Action:") else {
        return malformed("Action:");
    };
    let a = after_thought + a_rel;
    let after_action = a + "Action:".len();
    let Some(ai_rel) = find_marker(&text[after_action..], "Action Input:") else {
        return malformed("Action Input:");
    };
    let ai = after_action + ai_rel;
    let thought = text[after_thought..a].trim().to_string();
    let tool = text[after_action..ai].trim().trim_end_matches(',').trim().to_string();
    if tool.is_empty() {
        return malformed("tool name after Action:");
    }
    let mut input_text = &text[ai + "Action Input:".len()..];
    if let Some(o) = input_text.find("\nObservation:") {
        input_text = &input_text[..o];
    }
    let raw_input = input_text.trim().to_string();
    ParsedTurn {
        kind: TurnKind::ThoughtAction,
        thought,
        action: Some(ActionDraft {
            tool,
            input: parse_action_input(&raw_input),
            raw_input,
        }),
        final_answer: None,
        diagnostic: None,
        raw,
    }
}

/// JSON object first, then a Python-style dict, then a comma list.
pub fn parse_action_input(text: &str) -> ArgInput {
    let trimmed = text.trim();
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(trimmed) {
        return ArgInput::Named(map);
    }
    if trimmed.starts_with('{') && trimmed.contains(':') && trimmed.contains('\'') {
        let swapped = trimmed
            .replace('\'', "\"")
            .replace("True", "true")
            .replace("False", "false")
            .replace("None", "null");
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&swapped) {
            return ArgInput::Named(map);
        }
    }
    let inner = trimmed
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .or_else(|| trimmed.strip_prefix('(').and_then(|s| s.strip_suffix(')')))
        .unwrap_or(trimmed);
    if inner.trim().is_empty() {
        return ArgInput::Named(Map::new());
    }
    ArgInput::Positional(
        inner
            .split(',')
            .map(|p| p.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
            .filter(|p| !p.is_empty())
            .collect(),
    )
}

/// Canonical text for a well-formed turn.
pub fn serialize_turn(turn: &ParsedTurn) -> String {
    match turn.kind {
        TurnKind::FinalAnswer => {
            let answer = turn.final_answer.as_deref().unwrap_or("");
            if turn.thought.is_empty() {
                format!("Final Answer: {answer}")
            } else {
                format!("Thought: {}\nFinal Answer: {answer}", turn.thought)
            }
        }
        TurnKind::ThoughtAction => {
            let action = turn.action.as_ref().expect("thought+action has an action");
            format!(
                "Thought: {}\nAction: {}\nAction Input: {}",
                turn.thought, action.tool, action.raw_input
            )
        }
        TurnKind::Malformed => turn.raw.clone(),
    }
}
