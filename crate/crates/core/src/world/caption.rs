//! Template captions over a closed vocabulary.

use serde::{Deserialize, Serialize};

use super::background::Family;
use super::render::{PrimitiveObject, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    Orange,
    Cyan,
    White,
}

impl Color {
    pub const ALL: [Color; 8] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Purple,
        Color::Orange,
        Color::Cyan,
        Color::White,
    ];

    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.85, 0.15, 0.15],
            Color::Green => [0.2, 0.75, 0.25],
            Color::Blue => [0.2, 0.3, 0.9],
            Color::Yellow => [0.9, 0.85, 0.2],
            Color::Purple => [0.6, 0.25, 0.75],
            Color::Orange => [0.95, 0.55, 0.1],
            Color::Cyan => [0.2, 0.8, 0.85],
            Color::White => [0.92, 0.92, 0.92],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
            Color::Orange => "orange",
            Color::Cyan => "cyan",
            Color::White => "white",
        }
    }

    /// Nearest named color in RGB distance.
    pub fn nearest(rgb: [f32; 3]) -> Color {
        let d = |c: Color| {
            let q = c.rgb();
            (0..3).map(|i| (q[i] - rgb[i]).powi(2)).sum::<f32>()
        };
        Color::ALL
            .into_iter()
            .min_by(|&a, &b| d(a).total_cmp(&d(b)))
            .expect("non-empty palette")
    }
}

const FIXED: [&str; 3] = ["a", "on", "background"];

/// The closed vocabulary: template words, colors, shapes, families.
pub fn vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&'static str> = FIXED.to_vec();
    v.extend(Color::ALL.iter().map(|c| c.name()));
    v.extend(Shape::ALL.iter().map(|s| s.name()));
    v.extend(Family::ALL.iter().map(|f| f.name()));
    v
}

pub fn vocab_size() -> usize {
    FIXED.len() + Color::ALL.len() + Shape::ALL.len() + Family::ALL.len()
}

/// Maps whitespace-separated words to vocabulary indices.
pub fn tokenize(text: &str) -> Result<Vec<usize>> {
    let vocab = vocabulary();
    text.split_whitespace()
        .map(|w| {
            vocab
                .iter()
                .position(|v| *v == w)
                .ok_or_else(|| Error::invalid("caption", format!("unknown word {w:?}")))
        })
        .collect()
}

pub fn detokenize(tokens: &[usize]) -> Result<String> {
    let vocab = vocabulary();
    let words = tokens
        .iter()
        .map(|&t| {
            vocab
                .get(t)
                .copied()
                .ok_or_else(|| Error::invalid("caption", format!("token {t} out of vocabulary")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(words.join(" "))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Caption {
    tokens: Vec<usize>,
    text: String,
}

impl Caption {
    pub fn from_text(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        Ok(Self {
            text: detokenize(&tokens)?,
            tokens,
        })
    }

    pub fn from_tokens(tokens: Vec<usize>) -> Result<Self> {
        Ok(Self {
            text: detokenize(&tokens)?,
            tokens,
        })
    }

    /// The empty caption, used as the null prompt.
    pub fn empty() -> Self {
        Self {
            tokens: Vec::new(),
            text: String::new(),
        }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Background family named in the caption, if any.
    pub fn family(&self) -> Option<Family> {
        self.text
            .split_whitespace()
            .find_map(|w| Family::ALL.into_iter().find(|f| f.name() == w))
    }
}

impl TryFrom<String> for Caption {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::from_text(&s)
    }
}

impl From<Caption> for String {
    fn from(c: Caption) -> Self {
        c.text
    }
}

pub fn caption_text(color: Color, shape: Shape, family: Family) -> String {
    format!(
        "a {} {} on a {} background",
        color.name(),
        shape.name(),
        family.name()
    )
}

pub fn caption_of(obj: &PrimitiveObject, family: Family) -> Caption {
    Caption::from_text(&caption_text(Color::nearest(obj.albedo), obj.shape, family))
        .expect("template words are in the vocabulary")
}
