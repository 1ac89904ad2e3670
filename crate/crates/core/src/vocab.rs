//! Shared token alphabet for all puzzle tasks.
//!
//! Token 0 is end-of-sequence. Every other token renders as a single ASCII
//! character, so an answer is just the concatenation of its tokens.

pub type Token = u8;

pub const EOS: Token = 0;

const CHARS: &[u8] = b"UDLR0123456789+-*/()";

/// Number of tokens, including EOS.
pub const VOCAB_SIZE: usize = CHARS.len() + 1;

pub fn token_char(t: Token) -> Option<char> {
    match t {
        EOS => None,
        t => CHARS.get(t as usize - 1).map(|&b| b as char),
    }
}

pub fn char_token(c: char) -> Option<Token> {
    CHARS
        .iter()
        .position(|&b| b as char == c)
        .map(|i| (i + 1) as Token)
}

/// Renders tokens as answer text. EOS and out-of-alphabet ids are skipped.
pub fn decode(tokens: &[Token]) -> String {
    tokens.iter().filter_map(|&t| token_char(t)).collect()
}

/// Tokenizes answer text (no trailing EOS). Unknown characters are rejected.
pub fn encode(text: &str) -> Option<Vec<Token>> {
    text.chars().map(char_token).collect()
}

/// Bit mask over the alphabet with EOS and every character of `chars` set.
pub fn mask_of(chars: &str) -> u64 {
    chars
        .chars()
        .filter_map(char_token)
        .fold(1u64 << EOS, |m, t| m | 1u64 << t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode() {
        let toks = encode("8/(1/3)").unwrap();
        assert_eq!(decode(&toks), "8/(1/3)");
        assert!(encode("x").is_none());
        assert_eq!(VOCAB_SIZE, 21);
    }

    #[test]
    fn mask_has_eos() {
        let m = mask_of("UDLR");
        assert_eq!(m.count_ones(), 5);
        assert_eq!(m & 1, 1);
    }
}
