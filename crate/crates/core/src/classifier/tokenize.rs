use serde::{Deserialize, Serialize};

/// A word of the input. `text` is the lowercased feature form; `start` and
/// `end` are byte offsets into the original string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub original: String,
    pub tokens: Vec<Token>,
}

impl TokenizedText {
    pub fn word_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn surface(&self, index: usize) -> &str {
        let t = &self.tokens[index];
        &self.original[t.start..t.end]
    }

    /// Rebuilds the original text with the tokens whose `keep` flag is false
    /// deleted. Punctuation and whitespace are left in place.
    pub fn render_masked(&self, keep: &[bool]) -> String {
        debug_assert_eq!(keep.len(), self.tokens.len());
        let mut out = String::with_capacity(self.original.len());
        let mut cursor = 0;
        for (token, &kept) in self.tokens.iter().zip(keep) {
            if !kept {
                out.push_str(&self.original[cursor..token.start]);
                cursor = token.end;
            }
        }
        out.push_str(&self.original[cursor..]);
        out
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits text into maximal runs of alphanumeric characters. An apostrophe
/// joins a run only when it sits between two alphanumeric characters, so
/// "don't" is one token and "'quoted'" is not.
pub fn tokenize(text: &str) -> TokenizedText {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if is_apostrophe(c) && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
        tokens.push(Token {
            text: text[start..end].to_lowercase(),
            start,
            end,
        });
        i = j;
    }
    TokenizedText {
        original: text.to_owned(),
        tokens,
    }
}
