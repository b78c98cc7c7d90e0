// SPDX-License-Identifier: Apache-2.0

//! Cue lexicons in the `lex/1` format:
//!
//! ```text
//! lex/1
//! [causal]
//! because
//! due to
//! [modal]
//! must
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEX_FORMAT: &str = "lex/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub causal: Vec<String>,
    pub modal: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("missing `{LEX_FORMAT}` header")]
    MissingHeader,
    #[error("line {0}: cue outside a [causal] or [modal] section")]
    NoSection(usize),
    #[error("line {0}: unknown section `{1}`")]
    UnknownSection(usize, String),
}

impl Default for Lexicon {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Lexicon {
            causal: words(&["because", "due to", "so that", "workaround"]),
            modal: words(&["must", "never", "cannot", "required", "requires", "shall"]),
        }
    }
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l.trim()) != Some(LEX_FORMAT) {
            return Err(LexiconError::MissingHeader);
        }
        let mut lex = Lexicon {
            causal: Vec::new(),
            modal: Vec::new(),
        };
        let mut section: Option<&mut Vec<String>> = None;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[causal]" => section = Some(&mut lex.causal),
                "[modal]" => section = Some(&mut lex.modal),
                s if s.starts_with('[') => {
                    return Err(LexiconError::UnknownSection(i + 1, s.to_string()))
                }
                cue => match section.as_deref_mut() {
                    Some(list) => list.push(cue.to_lowercase()),
                    None => return Err(LexiconError::NoSection(i + 1)),
                },
            }
        }
        Ok(lex)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{LEX_FORMAT}\n[causal]\n");
        for c in &self.causal {
            out.push_str(c);
            out.push('\n');
        }
        out.push_str("[modal]\n");
        for c in &self.modal {
            out.push_str(c);
            out.push('\n');
        }
        out
    }

    /// First causal cue found in `sentence` with its character range.
    pub fn causal_cue(&self, sentence: &str) -> Option<(usize, usize)> {
        first_cue(&self.causal, sentence)
    }

    pub fn modal_cue(&self, sentence: &str) -> Option<(usize, usize)> {
        first_cue(&self.modal, sentence)
    }

    /// True for words that are cues themselves.
    pub fn is_cue_word(&self, word: &str) -> bool {
        self.causal
            .iter()
            .chain(&self.modal)
            .any(|c| c.split(' ').any(|w| w == word))
    }
}

fn first_cue(cues: &[String], sentence: &str) -> Option<(usize, usize)> {
    cues.iter()
        .filter_map(|c| crate::text::find_cue(sentence, c))
        .min()
}
