//! Reasoner and critic prompt templates and their rendering.

use super::ChatMessage;
use crate::toolkit::ToolSpec;

/// Reasoner template; `{tool_descs}`, `{tool_names}` and `{query}` are the
/// substitution slots.
pub const REASONER_TEMPLATE: &str = "You are tasked with answering the following question. You have access to a set of tools:

{tool_descs}

These tools allow you to access and analyze the time series. When producing the Final Answer, you must follow the required format and respond in plain English text (no Markdown). The final output must be written exactly as: \"Final Answer: the final answer to the original input question\".

Follow this reasoning format:

Question: the input question to solve

Thought: you should always think about what to do

Action: the tool to use, chosen from [{tool_names}]

Action Input: the arguments to the tool

Observation: the tool\u{2019}s returned result

Feedback: the critic\u{2019}s feedback

......(The Thought/Action/Action Input/Observation/Feedback block may be repeated until you get final answer.)

Thought: I now know the final answer

Final Answer: the final answer to the original input question

Begin!

Question: {query}";

pub const CRITIC_TEMPLATE: &str = "You are the critic reviewing the reasoning process. You are given the current observation and the accumulated evidence log. Your task is to assess:

(i) Tool suitability: does the chosen operator match the sub-goal and the question intent?

(ii) Output plausibility: are the observed values consistent with prior evidence and expectations?

(iii) Evidence sufficiency: does the log contain enough information to fully satisfy the question intent?

Provide concise feedback indicating whether the reasoning is appropriate, highlight potential issues, and suggest corrections if necessary.";

/// Marker the scripted fixtures use to recognize reasoner calls.
pub const REASONER_MARKER: &str = "You are tasked with answering the following question.";
/// Marker the scripted fixtures use to recognize critic calls.
pub const CRITIC_MARKER: &str = "You are the critic reviewing the reasoning process.";

/// One prior step as it is replayed to the reasoner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepBlock {
    pub thought: String,
    pub action: Option<String>,
    pub action_input: Option<String>,
    pub observation: Option<String>,
    pub final_answer: Option<String>,
    /// Verbatim model text of a turn that could not be parsed.
    pub malformed: Option<String>,
    pub feedback: Option<String>,
}

impl StepBlock {
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        if let Some(raw) = &self.malformed {
            lines.push(raw.trim().to_string());
        } else {
            lines.push(format!("Thought: {}", self.thought));
            if let Some(a) = &self.action {
                lines.push(format!("Action: {a}"));
                lines.push(format!("Action Input: {}", self.action_input.as_deref().unwrap_or("")));
            }
            if let Some(o) = &self.observation {
                lines.push(format!("Observation: {o}"));
            }
            if let Some(f) = &self.final_answer {
                lines.push(format!("Final Answer: {f}"));
            }
        }
        if let Some(f) = &self.feedback {
            lines.push(format!("Feedback: {f}"));
        }
        lines.join("\n")
    }
}

/// One catalog entry per line, as compact JSON.
pub fn tool_descs<'a>(tools: impl IntoIterator<Item = &'a ToolSpec>) -> String {
    tools
        .into_iter()
        .map(|s| serde_json::to_string(s).expect("spec serializes"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn fill_reasoner_template(tool_descs: &str, tool_names: &str, query: &str) -> String {
    REASONER_TEMPLATE
        .replacen("{tool_descs}", tool_descs, 1)
        .replacen("{tool_names}", tool_names, 1)
        .replacen("{query}", query, 1)
}

/// The reasoner prompt: filled template followed by every prior step block.
pub fn render_reasoner_prompt(tools: &[ToolSpec], question: &str, steps: &[StepBlock]) -> Vec<ChatMessage> {
    let names = tools.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ");
    let mut text = fill_reasoner_template(&tool_descs(tools), &names, question);
    for step in steps {
        text.push_str("\n\n");
        text.push_str(&step.render());
    }
    vec![ChatMessage::user(text)]
}

/// Everything the critic sees besides the fixed template.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CriticContext {
    pub question: String,
    pub task: String,
    pub schema: String,
    pub gaps: Vec<String>,
    pub step: String,
    pub log: Vec<String>,
}

pub fn render_critic_prompt(ctx: &CriticContext) -> Vec<ChatMessage> {
    let gaps = if ctx.gaps.is_empty() {
        "none".to_string()
    } else {
        ctx.gaps.join(", ")
    };
    let log = if ctx.log.is_empty() {
        "(empty)".to_string()
    } else {
        ctx.log.join("\n")
    };
    let text = format!(
        "{CRITIC_TEMPLATE}\n\nQuestion: {}\nQuestion intent: {} (answer schema: {})\nOutstanding predicates: {gaps}\n\nCurrent step:\n{}\n\nEvidence log:\n{log}",
        ctx.question, ctx.task, ctx.schema, ctx.step
    );
    vec![ChatMessage::user(text)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolkit::Toolkit;

    fn specs() -> Vec<ToolSpec> {
        Toolkit::new().specs().cloned().collect()
    }

    #[test]
    fn empty_trace_ends_with_question() {
        let msgs = render_reasoner_prompt(&specs(), "Is it rising?", &[]);
        assert_eq!(msgs.len(), 1);
        assert!(msgs[0].content.ends_with("Question: Is it rising?"));
    }

    #[test]
    fn one_step_appends_one_block() {
        let step = StepBlock {
            thought: "check".into(),
            action: Some("trend_classifier".into()),
            action_input: Some("{\"name\": \"a\"}".into()),
            observation: Some("up".into()),
            feedback: Some("fine".into()),
            ..Default::default()
        };
        let text = &render_reasoner_prompt(&specs(), "q", &[step])[0].content;
        assert!(text.ends_with(
            "Question: q\n\nThought: check\nAction: trend_classifier\nAction Input: {\"name\": \"a\"}\nObservation: up\nFeedback: fine"
        ));
        assert_eq!(text.matches("\nObservation: up").count(), 1);
    }

    #[test]
    fn tool_names_follow_registry_order() {
        let s = specs();
        let text = &render_reasoner_prompt(&s, "q", &[])[0].content;
        let names = s.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join(", ");
        assert!(text.contains(&format!("chosen from [{names}]")));
    }

    #[test]
    fn critic_prompt_sections() {
        let ctx = CriticContext {
            gaps: vec!["has_anomaly".into(), "anomaly_segment".into()],
            ..Default::default()
        };
        let text = &render_critic_prompt(&ctx)[0].content;
        assert!(text.contains("Evidence log:\n(empty)"));
        assert!(text.contains("Outstanding predicates: has_anomaly, anomaly_segment"));
        for marker in [
            "(i) Tool suitability",
            "(ii) Output plausibility",
            "(iii) Evidence sufficiency",
        ] {
            assert!(text.contains(marker));
        }
    }
}
