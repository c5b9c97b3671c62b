//! Answer schemas: validation and normalization of proposed answers.

use regex::Regex;
use serde::{Deserialize, Serialize};

/// A categorical label and the phrasings that mean it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub label: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

/// One `(select ... from a, b, c)` slot of a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub choices: Vec<String>,
    pub multiple: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSchema {
    pub template: String,
    /// Literal text around the slots; always one longer than `slots`.
    pub literals: Vec<String>,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerSchema {
    Mcq {
        options: Vec<String>,
    },
    Categorical {
        labels: Vec<LabelSpec>,
    },
    Numeric {
        tolerance: f64,
        /// Tolerance scales with the magnitude of the truth.
        #[serde(default)]
        relative: bool,
    },
    Template(TemplateSchema),
    FreeText,
}

/// Lower-case, collapse whitespace, drop wrapping quotes, pipes and a
/// trailing period.
pub fn normalize_text(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '|' || c == '`' || c.is_whitespace())
        .trim_end_matches('.')
        .trim()
        .to_string()
}

fn word_regex(phrase: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b{}\b", regex::escape(phrase))).expect("escaped phrase is a valid regex")
}

/// Phrases found in `text` as whole words, dropping matches nested inside a
/// longer match. Returns the owning key of each surviving match.
fn phrase_hits<'a>(text: &str, phrases: &[(&'a str, &str)]) -> Vec<&'a str> {
    let mut spans: Vec<(usize, usize, &str)> = Vec::new();
    for (key, phrase) in phrases {
        for m in word_regex(phrase).find_iter(text) {
            spans.push((m.start(), m.end(), key));
        }
    }
    let mut keys: Vec<&str> = spans
        .iter()
        .filter(|(s, e, _)| {
            !spans
                .iter()
                .any(|(s2, e2, _)| s2 <= s && e <= e2 && (e2 - s2) > (e - s))
        })
        .map(|(_, _, k)| *k)
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

impl AnswerSchema {
    /// Canonical form of an in-schema answer, or why it violates the schema.
    pub fn normalize(&self, answer: &str) -> Result<String, String> {
        let text = normalize_text(answer);
        if text.is_empty() {
            return Err("the answer is empty".into());
        }
        match self {
            AnswerSchema::Mcq { options } => normalize_mcq(&text, options),
            AnswerSchema::Categorical { labels } => normalize_label(&text, labels),
            AnswerSchema::Numeric { .. } => parse_number(&text).map(|v| v.to_string()),
            AnswerSchema::Template(t) => t.normalize(answer),
            AnswerSchema::FreeText => Ok(text),
        }
    }

    /// Exact match after normalization; numeric answers within tolerance.
    pub fn equivalent(&self, answer: &str, truth: &str) -> bool {
        match (self.normalize(answer), self.normalize(truth)) {
            (Ok(a), Ok(b)) => match self {
                AnswerSchema::Numeric { tolerance, relative } => {
                    let (a, b): (f64, f64) = (a.parse().unwrap_or(f64::NAN), b.parse().unwrap_or(f64::NAN));
                    let unit = if *relative { b.abs().max(1.0) } else { 1.0 };
                    (a - b).abs() <= tolerance * unit
                }
                _ => a == b,
            },
            _ => false,
        }
    }

    /// Short human description, used in prompts and gate feedback.
    pub fn describe(&self) -> String {
        match self {
            AnswerSchema::Mcq { options } => format!("one of: {}", options.join(", ")),
            AnswerSchema::Categorical { labels } => format!(
                "one of: {}",
                labels.iter().map(|l| l.label.as_str()).collect::<Vec<_>>().join(", ")
            ),
            AnswerSchema::Numeric { .. } => "a number".into(),
            AnswerSchema::Template(t) => format!("the template |{}|", t.template),
            AnswerSchema::FreeText => "free text".into(),
        }
    }
}

fn normalize_mcq(text: &str, options: &[String]) -> Result<String, String> {
    let lowered: Vec<String> = options.iter().map(|o| normalize_text(o)).collect();
    if let Some(i) = lowered.iter().position(|o| o == text) {
        return Ok(lowered[i].clone());
    }
    let letter = Regex::new(r"^\(?([a-z])\)?[.):]?(?:\s+(.*))?$").expect("valid regex");
    if let Some(c) = letter.captures(text) {
        let i = (c[1].as_bytes()[0] - b'a') as usize;
        if i < options.len() {
            match c.get(2) {
                None => return Ok(lowered[i].clone()),
                Some(rest) if normalize_text(rest.as_str()) == lowered[i] => return Ok(lowered[i].clone()),
                _ => {}
            }
        }
    }
    let phrases: Vec<(&str, &str)> = lowered.iter().map(|o| (o.as_str(), o.as_str())).collect();
    match phrase_hits(text, &phrases).as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(format!("answer names none of the options ({})", options.join(", "))),
        many => Err(format!("answer names several options ({})", many.join(", "))),
    }
}

fn normalize_label(text: &str, labels: &[LabelSpec]) -> Result<String, String> {
    let mut phrases: Vec<(&str, &str)> = Vec::new();
    for l in labels {
        phrases.push((l.label.as_str(), l.label.as_str()));
        for s in &l.synonyms {
            phrases.push((l.label.as_str(), s.as_str()));
        }
    }
    if let Some((key, _)) = phrases.iter().find(|(_, p)| normalize_text(p) == text) {
        return Ok(key.to_string());
    }
    let names = || labels.iter().map(|l| l.label.as_str()).collect::<Vec<_>>().join(", ");
    match phrase_hits(text, &phrases).as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(format!("answer is not one of the labels ({})", names())),
        _ => Err(format!("answer mixes several labels ({})", names())),
    }
}

fn parse_number(text: &str) -> Result<f64, String> {
    if let Ok(v) = text.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
    }
    let re = Regex::new(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?").expect("valid regex");
    let found: Vec<f64> = re.find_iter(text).filter_map(|m| m.as_str().parse().ok()).collect();
    match found.as_slice() {
        [v] => Ok(*v),
        [] => Err("answer contains no number".into()),
        _ => Err("answer contains several numbers".into()),
    }
}

/// `Options: a, b, c` (or `Choices:`) listed in a question.
pub fn parse_options(question: &str) -> Vec<String> {
    let re = Regex::new(r"(?i)\b(?:options|choices)\s*:\s*([^\n?]+)").expect("valid regex");
    let Some(c) = re.captures(question) else {
        return Vec::new();
    };
    c[1].split([',', ';'])
        .flat_map(|p| p.split(" or "))
        .map(|p| p.trim().trim_end_matches('.').trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

impl TemplateSchema {
    /// The `|...|` block of a question, if any.
    pub fn extract(question: &str) -> Option<String> {
        let a = question.find('|')?;
        let b = question.rfind('|')?;
        (b > a + 1).then(|| question[a + 1..b].trim().to_string())
    }

    pub fn parse(template: &str) -> Option<Self> {
        let slot_re =
            Regex::new(r"(?i)\(\s*(select|choose)\s+(all that apply|one)\s+from\s+([^)]*)\)").expect("valid regex");
        let mut literals = Vec::new();
        let mut slots = Vec::new();
        let mut last = 0;
        for c in slot_re.captures_iter(template) {
            let m = c.get(0).expect("whole match");
            literals.push(template[last..m.start()].to_string());
            let choices: Vec<String> = c[3]
                .split(',')
                .flat_map(|p| p.split(" or "))
                .map(|p| p.trim().to_lowercase())
                .filter(|p| !p.is_empty())
                .collect();
            if choices.is_empty() {
                return None;
            }
            slots.push(Slot {
                choices,
                multiple: c[2].eq_ignore_ascii_case("all that apply"),
            });
            last = m.end();
        }
        literals.push(template[last..].to_string());
        if slots.is_empty() {
            return None;
        }
        Some(Self {
            template: template.to_string(),
            literals,
            slots,
        })
    }

    fn literal_regex(text: &str) -> String {
        let mut out = String::new();
        if text.starts_with(char::is_whitespace) {
            out.push_str(r"\s+");
        }
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| {
                let core_len = w.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
                let (core, punct) = w.split_at(core_len);
                let plural = if core.ends_with(char::is_alphabetic) { "s?" } else { "" };
                format!("{}{plural}{}", regex::escape(core), regex::escape(punct))
            })
            .collect();
        out.push_str(&words.join(r"\s+"));
        if text.ends_with(char::is_whitespace) && !text.trim().is_empty() {
            out.push_str(r"\s+");
        }
        out
    }

    fn regex(&self) -> Regex {
        let mut pattern = String::from(r"(?is)^\|?\s*");
        for (i, slot) in self.slots.iter().enumerate() {
            pattern.push_str(&Self::literal_regex(&self.literals[i]));
            let choice = format!(
                "(?:{})",
                slot.choices
                    .iter()
                    .map(|c| regex::escape(c))
                    .collect::<Vec<_>>()
                    .join("|")
            );
            if slot.multiple {
                pattern.push_str(&format!(r"({choice}(?:(?:\s*,\s*(?:and\s+)?|\s+and\s+){choice})*)"));
            } else {
                pattern.push_str(&format!("({choice})"));
            }
        }
        pattern.push_str(&Self::literal_regex(&self.literals[self.slots.len()]));
        pattern.push_str(r"\.?\s*\|?$");
        Regex::new(&pattern).expect("template regex is valid")
    }

    /// Canonical slot selections, `a,b|c`, in choice order per slot.
    pub fn normalize(&self, answer: &str) -> Result<String, String> {
        let collapsed = answer.split_whitespace().collect::<Vec<_>>().join(" ");
        let caps = self
            .regex()
            .captures(collapsed.trim())
            .ok_or_else(|| format!("answer does not follow the template |{}|", self.template))?;
        let mut parts = Vec::new();
        for (i, slot) in self.slots.iter().enumerate() {
            let text = caps[i + 1].to_lowercase();
            let picked: Vec<&str> = slot
                .choices
                .iter()
                .filter(|c| word_regex(c).is_match(&text))
                .map(String::as_str)
                .collect();
            parts.push(picked.join(","));
        }
        Ok(parts.join("|"))
    }

    /// Render an answer choosing the given choices per slot.
    pub fn fill(&self, picks: &[Vec<String>]) -> String {
        let mut out = String::new();
        for (i, literal) in self.literals.iter().enumerate() {
            out.push_str(literal);
            if let Some(p) = picks.get(i) {
                out.push_str(&join_english(p));
            }
        }
        out
    }
}

fn join_english(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}
