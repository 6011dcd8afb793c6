//! A small C-family lexer that maps source text into hashed vocabulary ids.

use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::seed::fnv1a;

pub const PAD: u32 = 0;
pub const NUM: u32 = 1;
pub const STR: u32 = 2;
pub const UNKNOWN: u32 = 3;
/// Ids below this value are reserved for the special tokens above.
pub const NUM_RESERVED: u32 = 4;

pub const DEFAULT_MAX_SEQUENCE_LENGTH: usize = 512;

const OPERATORS_3: [&str; 4] = ["<<=", ">>=", "...", "->*"];
const OPERATORS_2: [&str; 21] = [
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "::", "##",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexemeKind {
    Identifier,
    Number,
    Literal,
    Operator,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexeme<'a> {
    pub kind: LexemeKind,
    pub text: &'a str,
}

/// Token ids of one function, plus whether the source was cut short.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub truncated: bool,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    vocab_size: u32,
    max_len: usize,
}

impl Tokenizer {
    pub fn new(vocab_size: u32, max_len: usize) -> Result<Self, EncoderError> {
        if vocab_size <= NUM_RESERVED {
            return Err(EncoderError::InvalidConfig(format!(
                "vocabulary_size must exceed {NUM_RESERVED}, got {vocab_size}"
            )));
        }
        if max_len == 0 {
            return Err(EncoderError::InvalidConfig("max_sequence_length must be positive".into()));
        }
        Ok(Self { vocab_size, max_len })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Hashes a lexeme into `[NUM_RESERVED, vocab_size)`. Collisions are
    /// possible and accepted.
    pub fn hash_index(&self, text: &str) -> u32 {
        let span = u64::from(self.vocab_size - NUM_RESERVED);
        NUM_RESERVED + (fnv1a(text.as_bytes()) % span) as u32
    }

    /// Converts source text to vocabulary ids. A function made only of
    /// comments or whitespace yields a single `PAD` token so that mean
    /// pooling is always defined.
    pub fn tokenize(&self, code: &str) -> Result<TokenSequence, EncoderError> {
        if code.trim().is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut tokens = Vec::new();
        let mut truncated = false;
        for lexeme in lex(code) {
            if tokens.len() == self.max_len {
                truncated = true;
                break;
            }
            tokens.push(match lexeme.kind {
                LexemeKind::Identifier | LexemeKind::Operator => self.hash_index(lexeme.text),
                LexemeKind::Number => NUM,
                LexemeKind::Literal => STR,
                LexemeKind::Unknown => UNKNOWN,
            });
        }
        if tokens.is_empty() {
            tokens.push(PAD);
        }
        Ok(TokenSequence { tokens, truncated })
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_continue(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// Splits C-family source into lexemes. Comments and whitespace are
/// dropped; string and character literals are kept whole.
pub fn lex(code: &str) -> Vec<Lexeme<'_>> {
    let bytes = code.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if code[i..].starts_with("//") {
            i = code[i..].find('\n').map_or(bytes.len(), |p| i + p);
            continue;
        }
        if code[i..].starts_with("/*") {
            i = code[i + 2..].find("*/").map_or(bytes.len(), |p| i + 2 + p + 2);
            continue;
        }
        let kind = if is_ident_start(c) {
            while i < bytes.len() && is_ident_continue(bytes[i]) {
                i += 1;
            }
            LexemeKind::Identifier
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() {
                let b = bytes[i];
                let prev = bytes[i - 1];
                let hex = code[start..i].starts_with("0x") || code[start..i].starts_with("0X");
                let exponent_sign = (b == b'+' || b == b'-')
                    && (matches!(prev, b'p' | b'P') || (!hex && matches!(prev, b'e' | b'E')));
                if is_ident_continue(b) || b == b'.' || exponent_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            LexemeKind::Number
        } else if c == b'"' || c == b'\'' {
            i += 1;
            while i < bytes.len() && bytes[i] != c && bytes[i] != b'\n' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            LexemeKind::Literal
        } else if c.is_ascii_punctuation() {
            let rest = &code[i..];
            let len = if OPERATORS_3.iter().any(|op| rest.starts_with(op)) {
                3
            } else if OPERATORS_2.iter().any(|op| rest.starts_with(op)) {
                2
            } else {
                1
            };
            i += len;
            LexemeKind::Operator
        } else {
            // non-ASCII or control character: consume one whole char
            i += code[i..].chars().next().map_or(1, char::len_utf8);
            LexemeKind::Unknown
        };
        // string scanning may stop inside a multi-byte char after an escape
        while !code.is_char_boundary(i) {
            i += 1;
        }
        out.push(Lexeme {
            kind,
            text: &code[start..i],
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tk() -> Tokenizer {
        Tokenizer::new(1024, 512).unwrap()
    }

    #[test]
    fn simple_assignment() {
        let seq = tk().tokenize("x = x + 1;").unwrap();
        assert_eq!(seq.len(), 6);
        assert_eq!(seq.tokens[0], seq.tokens[2]);
        assert_eq!(seq.tokens[4], NUM);
        assert!(!seq.truncated);
        assert!(seq.tokens.iter().enumerate().all(|(i, &t)| i == 4 || t >= NUM_RESERVED));
    }

    #[test]
    fn deterministic() {
        let code = "int f(char *s) { return strlen(s) > 3 ? s[0] : 'a'; }";
        assert_eq!(tk().tokenize(code).unwrap(), tk().tokenize(code).unwrap());
    }

    #[test]
    fn truncation() {
        let code = "a ".repeat(10_000);
        let seq = tk().tokenize(&code).unwrap();
        assert_eq!(seq.len(), 512);
        assert!(seq.truncated);
        let exact = "a ".repeat(512);
        assert!(!tk().tokenize(&exact).unwrap().truncated);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(tk().tokenize(""), Err(EncoderError::EmptyInput)));
        assert!(matches!(tk().tokenize(" \n\t"), Err(EncoderError::EmptyInput)));
    }

    #[test]
    fn comment_only_function_is_pad() {
        let seq = tk().tokenize("/* nothing */ // here").unwrap();
        assert_eq!(seq.tokens, vec![PAD]);
    }

    #[test]
    fn lexeme_kinds() {
        let lx = lex(r#"p->len <<= 0x1Fu + 1.5e-3; s = "a \" b"; c = '\n'; é"#);
        let kinds: Vec<_> = lx.iter().map(|l| (l.kind, l.text)).collect();
        use LexemeKind::*;
        assert_eq!(
            kinds,
            vec![
                (Identifier, "p"),
                (Operator, "->"),
                (Identifier, "len"),
                (Operator, "<<="),
                (Number, "0x1Fu"),
                (Operator, "+"),
                (Number, "1.5e-3"),
                (Operator, ";"),
                (Identifier, "s"),
                (Operator, "="),
                (Literal, r#""a \" b""#),
                (Operator, ";"),
                (Identifier, "c"),
                (Operator, "="),
                (Literal, r"'\n'"),
                (Operator, ";"),
                (Unknown, "é"),
            ]
        );
    }

    #[test]
    fn string_literals_collapse() {
        let t = tk();
        let a = t.tokenize(r#"puts("hello");"#).unwrap();
        let b = t.tokenize(r#"puts("other text");"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tokens[2], STR);
    }

    #[test]
    fn unterminated_literal_stops_at_end() {
        let lx = lex("\"abc\\");
        assert_eq!(lx.len(), 1);
        assert_eq!(lx[0].text, "\"abc\\");
    }

    #[test]
    fn rejects_tiny_vocab() {
        assert!(Tokenizer::new(4, 10).is_err());
        assert!(Tokenizer::new(5, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ids_in_range_and_bounded(code in "\\PC{1,200}", vocab in 5u32..64, max_len in 1usize..40) {
                let t = Tokenizer::new(vocab, max_len).unwrap();
                if let Ok(seq) = t.tokenize(&code) {
                    prop_assert!(seq.len() <= max_len && !seq.is_empty());
                    prop_assert!(seq.tokens.iter().all(|&id| id < vocab));
                }
            }
        }
    }
}
