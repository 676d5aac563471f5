//! Turning raw model text into labels, explanations, and lists.

use crate::context::EvalContext;
use crate::error::ProviderError;
use crate::prompts::TemplateId;
use crate::text::{strip_decoration, word_tokens};
use crate::types::{Answer, DatasetKind, Dosage, Label, PredictedAnswer};

/// Only the first few tokens are searched for the yes/no decision so that a
/// "no" quoted deep inside an explanation is not mistaken for the answer.
pub const LABEL_WINDOW: usize = 10;

fn bare_word(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Splits a target-model answer into label, optional dosage, and explanation.
pub fn parse_prediction(raw: &str, kind: DatasetKind) -> PredictedAnswer {
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    let hit = tokens.iter().take(LABEL_WINDOW).enumerate().find_map(|(i, t)| {
        match bare_word(t).to_ascii_lowercase().as_str() {
            "yes" => Some((i, Answer::Yes)),
            "no" => Some((i, Answer::No)),
            _ => None,
        }
    });
    let dosage = match kind {
        DatasetKind::Qpain => tokens.iter().find_map(|t| Dosage::from_word(bare_word(t))),
        _ => None,
    };
    let Some((idx, answer)) = hit else {
        return PredictedAnswer {
            label: Label {
                answer: Answer::Random,
                dosage,
            },
            explanation: raw.trim().to_string(),
            raw_response: raw.to_string(),
        };
    };
    let explanation = remove_token(raw, idx);
    PredictedAnswer {
        label: Label { answer, dosage },
        explanation,
        raw_response: raw.to_string(),
    }
}

/// Drops the `idx`-th whitespace token of `raw`, keeping the rest of the
/// text (including line breaks) intact.
fn remove_token(raw: &str, idx: usize) -> String {
    let mut seen = 0;
    let mut start = None;
    let mut in_token = false;
    for (pos, c) in raw.char_indices() {
        if c.is_whitespace() {
            if in_token {
                if let Some(s) = start {
                    let before = raw[..s].trim_end();
                    let after = raw[pos..].trim_start();
                    return join_halves(before, after);
                }
                seen += 1;
            }
            in_token = false;
        } else if !in_token {
            in_token = true;
            if seen == idx {
                start = Some(pos);
            }
        }
    }
    match start {
        Some(s) => raw[..s].trim().to_string(),
        None => raw.trim().to_string(),
    }
}

fn join_halves(before: &str, after: &str) -> String {
    match (before.is_empty(), after.is_empty()) {
        (true, _) => after.trim_end().to_string(),
        (_, true) => before.trim_start().to_string(),
        _ => format!("{} {}", before.trim_start(), after.trim_end()),
    }
}

/// Lexical label for replies that are a single label word.
pub fn fast_label(answer_text: &str) -> Option<Answer> {
    let word = strip_decoration(answer_text);
    if word.is_empty() || word.contains(char::is_whitespace) {
        return None;
    }
    Answer::from_word(word)
}

/// Maps a judge's reply onto the label space: an exact label word first,
/// then a reply mentioning exactly one distinct label word. Anything else
/// is Random.
pub fn map_judge_reply(reply: &str) -> Answer {
    if let Some(a) = Answer::from_word(strip_decoration(reply)) {
        return a;
    }
    let mut found: Vec<Answer> = word_tokens(reply)
        .iter()
        .filter_map(|t| Answer::from_word(t))
        .collect();
    found.sort();
    found.dedup();
    match found.as_slice() {
        [one] => *one,
        _ => Answer::Random,
    }
}

/// Labels a free-text answer as Yes, No, Unknown, or Random, asking the
/// judge unless the answer is a bare label word.
pub fn classify_label(
    ctx: &EvalContext<'_>,
    question: &str,
    answer_text: &str,
) -> Result<Answer, ProviderError> {
    if let Some(a) = fast_label(answer_text) {
        return Ok(a);
    }
    let prompt = ctx
        .prompts
        .render(
            TemplateId::LabelAnalysis,
            &[("Question", question), ("Predicted_Answer", answer_text.trim())],
        )
        .expect("label prompt slots are fixed");
    let reply = ctx.judge(&prompt, 0)?;
    Ok(map_judge_reply(&reply))
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let line = line.trim_start_matches(['-', '*', '•', '#']).trim_start();
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r.trim_start();
        }
    }
    for prefix in ["Q", "Question"] {
        if let Some(rest) = line.strip_prefix(prefix) {
            let d = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            if let Some(r) = rest[d..].strip_prefix([':', '.', ')']) {
                return r.trim_start();
            }
        }
    }
    line
}

/// One question per non-blank line, list markers removed.
pub fn parse_probe_questions(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(strip_list_marker)
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Comma- or newline-separated keywords, cleaned, de-duplicated without
/// regard to case, and truncated to `limit`.
pub fn parse_keywords(reply: &str, limit: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    reply
        .split([',', '\n', ';'])
        .map(strip_list_marker)
        .map(strip_decoration)
        .map(|k| k.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|k| !k.is_empty())
        .filter(|k| seen.insert(k.to_lowercase()))
        .take(limit)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_yes_with_comma() {
        let p = parse_prediction(
            "Yes, The short stay ward increased hospital efficiency by reducing length of stay.",
            DatasetKind::Pubmedqa,
        );
        assert_eq!(p.label, Label::new(Answer::Yes));
        assert_eq!(
            p.explanation,
            "The short stay ward increased hospital efficiency by reducing length of stay."
        );
    }

    #[test]
    fn empty_response_is_random() {
        let p = parse_prediction("", DatasetKind::Qpain);
        assert_eq!(p.label.answer, Answer::Random);
        assert_eq!(p.explanation, "");
        assert_eq!(p.label.dosage, None);
    }

    #[test]
    fn label_inside_sentence_keeps_bullets() {
        let p = parse_prediction(
            "My answer is yes. **Stable vital signs**: The patient is stable.",
            DatasetKind::Pubmedqa,
        );
        assert_eq!(p.label.answer, Answer::Yes);
        assert_eq!(p.explanation, "My answer is **Stable vital signs**: The patient is stable.");
    }

    #[test]
    fn qpain_dosage_and_newlines() {
        let p = parse_prediction("No.\nDosage: Low\nThe patient is stable.", DatasetKind::Qpain);
        assert_eq!(p.label.answer, Answer::No);
        assert_eq!(p.label.dosage, Some(Dosage::Low));
        assert_eq!(p.explanation, "Dosage: Low\nThe patient is stable.");
        let p = parse_prediction("Yes. High dose.", DatasetKind::Pubmedqa);
        assert_eq!(p.label.dosage, None);
    }

    #[test]
    fn label_beyond_window_is_ignored() {
        let raw = "one two three four five six seven eight nine ten yes";
        let p = parse_prediction(raw, DatasetKind::Pubmedqa);
        assert_eq!(p.label.answer, Answer::Random);
        assert_eq!(p.explanation, raw);
    }

    #[test]
    fn trailing_label_token() {
        let p = parse_prediction("Answer: no", DatasetKind::Pubmedqa);
        assert_eq!(p.label.answer, Answer::No);
        assert_eq!(p.explanation, "Answer:");
    }

    #[test]
    fn judge_reply_mapping() {
        assert_eq!(map_judge_reply("Unknown"), Answer::Unknown);
        assert_eq!(map_judge_reply("\"No.\""), Answer::No);
        assert_eq!(map_judge_reply("The label is: Unknown."), Answer::Unknown);
        assert_eq!(map_judge_reply("Yes or No"), Answer::Random);
        assert_eq!(map_judge_reply("cannot tell"), Answer::Random);
    }

    #[test]
    fn fast_path_only_for_single_words() {
        assert_eq!(fast_label("Yes"), Some(Answer::Yes));
        assert_eq!(fast_label(" NO. \n"), Some(Answer::No));
        assert_eq!(fast_label("Yes, because"), None);
        assert_eq!(fast_label("Maybe"), None);
    }

    #[test]
    fn probe_questions_parse() {
        let reply = "1. What is A?\n\n2) What is B?\n- What is C?\n   \nQ4: What is D?\nWhat is E?\n";
        assert_eq!(
            parse_probe_questions(reply),
            vec!["What is A?", "What is B?", "What is C?", "What is D?", "What is E?"]
        );
    }

    #[test]
    fn keywords_truncate_and_dedupe() {
        assert_eq!(
            parse_keywords("unfractionated, heparin, therapy, anticoagulation, complications", 5),
            vec!["unfractionated", "heparin", "therapy", "anticoagulation", "complications"]
        );
        assert_eq!(parse_keywords("a, b, A, c, d, e, f, g", 5), vec!["a", "b", "c", "d", "e"]);
        assert_eq!(parse_keywords("\"pain  control\".", 5), vec!["pain control"]);
        assert!(parse_keywords(" , \n", 5).is_empty());
    }
}
