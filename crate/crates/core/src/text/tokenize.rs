use crate::error::{Error, Result};

/// Lowercased token sequence of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedExample {
    pub tokens: Vec<String>,
}

impl TokenizedExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    c == '\'' || c == '-'
}

/// Rule-based tokenizer.
///
/// Maximal runs of letters and digits are tokens, keeping apostrophes and
/// hyphens that sit between two word characters (`don't`, `usb-c`). Every
/// other non-whitespace character is a token on its own.
pub fn tokenize(sentence: &str) -> Result<TokenizedExample> {
    let chars: Vec<char> = sentence.chars().flat_map(char::to_lowercase).collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            i += 1;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if is_joiner(chars[i]) && i + 1 < chars.len() && is_word_char(chars[i + 1]) {
                    i += 2;
                } else {
                    break;
                }
            }
            tokens.push(chars[start..i].iter().collect());
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    if tokens.is_empty() {
        return Err(Error::EmptySentence);
    }
    Ok(TokenizedExample { tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).unwrap().tokens
    }

    #[test]
    fn joiners_and_punctuation() {
        assert_eq!(toks("Please add USB-C!"), ["please", "add", "usb-c", "!"]);
        assert_eq!(toks("OK"), ["ok"]);
        assert_eq!(toks("don't stop..."), ["don't", "stop", ".", ".", "."]);
    }

    #[test]
    fn dangling_joiners_split_off() {
        assert_eq!(toks("dogs' -well"), ["dogs", "'", "-", "well"]);
        assert_eq!(toks("a--b"), ["a", "-", "-", "b"]);
    }

    #[test]
    fn whitespace_only_is_an_error() {
        assert!(matches!(tokenize(" \t\n"), Err(Error::EmptySentence)));
        assert!(matches!(tokenize(""), Err(Error::EmptySentence)));
    }

    proptest! {
        #[test]
        fn retokenizing_joined_tokens_is_stable(s in "[A-Za-z0-9 ,.!?'\\-]{1,40}") {
            if let Ok(first) = tokenize(&s) {
                prop_assert!(first.tokens.iter().all(|t| !t.is_empty() && t.to_lowercase() == *t));
                let again = tokenize(&first.tokens.join(" ")).unwrap();
                prop_assert_eq!(first, again);
            }
        }
    }
}
