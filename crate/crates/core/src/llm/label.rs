use std::fmt;

use serde::{Deserialize, Serialize};

/// Three-way answer code used by the classification prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Metastasis = 1,
    NoMetastasis = 2,
    Unknown = 3,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Metastasis, Label::NoMetastasis, Label::Unknown];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// The parenthesized form the prompts ask for, e.g. `(2)`.
    pub fn answer(self) -> String {
        format!("({})", self.code())
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        match code {
            1 => Ok(Self::Metastasis),
            2 => Ok(Self::NoMetastasis),
            3 => Ok(Self::Unknown),
            other => Err(format!("label must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.code()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

fn from_digit(c: char) -> Option<Label> {
    match c {
        '1' => Some(Label::Metastasis),
        '2' => Some(Label::NoMetastasis),
        '3' => Some(Label::Unknown),
        _ => None,
    }
}

/// Reads a model response into a label.
///
/// Tried in order: the leftmost `(1)`, `(2)` or `(3)`; the first standalone
/// `1`, `2` or `3` token; a leading `yes`, `no` or `unknown`. Anything else
/// is `(Unknown, false)`.
pub fn parse_label(raw: &str) -> (Label, bool) {
    let parenthesized = raw
        .char_indices()
        .filter_map(|(i, c)| {
            let label = from_digit(c)?;
            let opens = raw[..i].ends_with('(');
            let closes = raw[i + c.len_utf8()..].starts_with(')');
            (opens && closes).then_some(label)
        })
        .next();
    if let Some(label) = parenthesized {
        return (label, true);
    }

    let mut tokens = raw.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty());
    let standalone = tokens.clone().find_map(|t| {
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => from_digit(c),
            _ => None,
        }
    });
    if let Some(label) = standalone {
        return (label, true);
    }

    let leading = tokens.next().map(str::to_lowercase);
    match leading.as_deref() {
        Some("yes") => (Label::Metastasis, true),
        Some("no") => (Label::NoMetastasis, true),
        Some("unknown") => (Label::Unknown, true),
        _ => (Label::Unknown, false),
    }
}
