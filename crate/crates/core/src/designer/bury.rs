// SPDX-License-Identifier: MIT OR Apache-2.0

//! Burying target texts behind (or after) a constant filler passage.

use serde::{Deserialize, Serialize};

use super::{CharSpan, DesignError, Manifest};

pub const DEFAULT_CONNECTOR: &str = "are here";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuryPosition {
    /// `{original} {connector}. {filler}`; probe the last filler word.
    #[serde(rename = "buried_suffix")]
    Suffix,
    /// `{filler}. {original}`; target spans kept (shifted).
    #[serde(rename = "buried_prefix")]
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuryOptions {
    pub position: BuryPosition,
    /// Words joining the original text to a suffix filler ("are here", "is here").
    pub connector: String,
}

impl BuryOptions {
    pub fn suffix(connector: impl Into<String>) -> Self {
        Self {
            position: BuryPosition::Suffix,
            connector: connector.into(),
        }
    }

    pub fn prefix() -> Self {
        Self {
            position: BuryPosition::Prefix,
            connector: String::new(),
        }
    }
}

fn ends_sentence(s: &str) -> bool {
    s.ends_with(['.', '!', '?'])
}

/// Span of the final word of `text`, excluding trailing punctuation.
fn last_word(text: &str) -> Option<CharSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut end = chars.len();
    while end > 0 && (chars[end - 1].is_whitespace() || chars[end - 1].is_ascii_punctuation()) {
        end -= 1;
    }
    let mut start = end;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    (start < end).then(|| CharSpan::new(start, end))
}

/// Returns a copy of `manifest` with every text buried by the same filler.
///
/// Suffix mode moves the target to the filler's last word and keeps the
/// original target under `extra_spans["original_target"]`.
pub fn bury(manifest: &Manifest, filler: &str, opts: &BuryOptions) -> Result<Manifest, DesignError> {
    let filler = filler.trim();
    if filler.is_empty() {
        return Err(DesignError::EmptyFiller);
    }
    let mut out = manifest.clone();
    match opts.position {
        BuryPosition::Suffix => {
            out.experiment_id.push_str("_buried");
            out.template_id.push_str("_buried");
            let connector = opts.connector.trim();
            for e in &mut out.examples {
                let mut text = e.text.trim_end().to_string();
                if !connector.is_empty() {
                    text.push(' ');
                    text.push_str(connector);
                }
                if !ends_sentence(&text) {
                    text.push('.');
                }
                text.push(' ');
                let offset = text.chars().count();
                text.push_str(filler);
                let last = last_word(filler).ok_or(DesignError::EmptyFiller)?;
                let original = std::mem::replace(&mut e.target_span, vec![last.shifted(offset)]);
                e.extra_spans.insert("original_target".into(), original);
                e.text = text;
                e.burial = Some(BuryPosition::Suffix);
            }
        }
        BuryPosition::Prefix => {
            out.experiment_id.push_str("_prefixed");
            out.template_id.push_str("_prefixed");
            let mut head = filler.to_string();
            if !ends_sentence(&head) {
                head.push('.');
            }
            head.push(' ');
            let offset = head.chars().count();
            for e in &mut out.examples {
                e.text = format!("{head}{}", e.text);
                for s in e.target_span.iter_mut().chain(e.extra_spans.values_mut().flatten()) {
                    *s = s.shifted(offset);
                }
                e.burial = Some(BuryPosition::Prefix);
            }
        }
    }
    out.check()?;
    Ok(out)
}
