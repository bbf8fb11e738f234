//! The one tokenizer shared by keyword highlighting and classifier features.
//!
//! A token is a maximal run of alphanumeric characters. Offsets are counted in
//! Unicode scalar values (code points), never bytes, so they agree with span
//! offsets submitted by the frontend.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased token text.
    pub text: String,
    /// Code-point offset of the first character.
    pub start: usize,
    /// Code-point offset one past the last character.
    pub end: usize,
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(&mut current),
                start,
                end: pos,
            });
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(Token {
            text: current,
            start,
            end: pos,
        });
    }
    tokens
}

/// Length of `text` in code points.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by code-point range. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let begin = indices.clone().nth(start).unwrap_or(text.len());
    let finish = indices.nth(end).unwrap_or(text.len());
    &text[begin..finish.max(begin)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_on_non_alphanumeric() {
        assert_eq!(words("The cat, sat!"), ["the", "cat", "sat"]);
        assert_eq!(words("don't"), ["don", "t"]);
        assert!(words("!!! ...").is_empty());
    }

    #[test]
    fn offsets_are_code_points() {
        let text = "héllo wörld";
        let toks = tokenize(text);
        assert_eq!((toks[1].start, toks[1].end), (6, 11));
        assert_eq!(char_slice(text, toks[1].start, toks[1].end), "wörld");
    }

    #[test]
    fn char_slice_clamps() {
        assert_eq!(char_slice("abc", 1, 10), "bc");
        assert_eq!(char_slice("abc", 5, 10), "");
    }
}
