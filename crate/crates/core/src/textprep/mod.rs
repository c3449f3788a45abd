//! Tweet preprocessing: tokenization, normalization to reserved tags,
//! hashtag segmentation and spell correction.

mod lexicon;
mod segment;
mod spell;
mod tokenizer;

pub use lexicon::Lexicon;
pub use segment::{segment_hashtag, word_log_prob, OOV_PENALTY_PER_CHAR};
pub use spell::{bounded_distance, spell_correct};
pub use tokenizer::{tokenize, Token, TokenKind, TARGET_PLACEHOLDER};

/// Reserved surfaces emitted by [`normalize`].
pub mod tags {
    pub const URL: &str = "<url>";
    pub const USER: &str = "<user>";
    pub const EMAIL: &str = "<email>";
    pub const PHONE: &str = "<phone>";
    pub const DATE: &str = "<date>";
    pub const TIME: &str = "<time>";
    pub const MONEY: &str = "<money>";
    pub const TARGETWORD: &str = "<targetword>";

    pub const ALL: [&str; 8] = [URL, USER, EMAIL, PHONE, DATE, TIME, MONEY, TARGETWORD];
}

/// Spell correction only touches alphabetic out-of-lexicon words at least
/// this long.
pub const MIN_SPELL_CORRECT_LEN: usize = 4;

fn reserved_tag(kind: TokenKind) -> Option<&'static str> {
    Some(match kind {
        TokenKind::Url => tags::URL,
        TokenKind::User => tags::USER,
        TokenKind::Email => tags::EMAIL,
        TokenKind::Phone => tags::PHONE,
        TokenKind::Date => tags::DATE,
        TokenKind::Time => tags::TIME,
        TokenKind::Money => tags::MONEY,
        TokenKind::TargetWord => tags::TARGETWORD,
        _ => return None,
    })
}

/// Lowercases every token and replaces markup (URLs, users, e-mails, phones,
/// dates, times, money, the target placeholder) with reserved tags.
/// Hashtags stay as lowercased `HASHTAG` tokens for [`preprocess`] to segment.
pub fn normalize(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| match reserved_tag(t.kind) {
            Some(tag) => Token::new(tag, t.kind),
            None => Token::new(t.surface.to_lowercase(), t.kind),
        })
        .collect()
}

fn correctable(word: &str) -> bool {
    word.chars().count() >= MIN_SPELL_CORRECT_LEN && word.chars().all(char::is_alphabetic)
}

/// Full pipeline: tokenize, normalize, segment hashtags, then spell-correct
/// out-of-lexicon words. Returns the normalized surfaces.
pub fn preprocess(raw: &str, lex: &Lexicon) -> Vec<String> {
    let mut out = Vec::new();
    for token in normalize(&tokenize(raw)) {
        match token.kind {
            TokenKind::Hashtag => {
                for piece in segment_hashtag(&token.surface, lex) {
                    out.push(correct_if_oov(piece, lex));
                }
            }
            TokenKind::Word => out.push(correct_if_oov(token.surface, lex)),
            _ => out.push(token.surface),
        }
    }
    out
}

fn correct_if_oov(word: String, lex: &Lexicon) -> String {
    if correctable(&word) && !lex.contains(&word) {
        spell_correct(&word, lex)
    } else {
        word
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_lexicon() -> Lexicon {
        Lexicon::from_counts([
            ("make", 50u64),
            ("it", 200),
            ("rain", 20),
            ("happy", 30),
            ("when", 80),
            ("feel", 40),
        ])
        .unwrap()
    }

    #[test]
    fn normalize_tags_markup() {
        let toks = normalize(&tokenize("@user1 HELLO http://a.io/x [#TARGETWORD#]"));
        let surfaces: Vec<_> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, ["<user>", "hello", "<url>", "<targetword>"]);
    }

    #[test]
    fn preprocess_composes_steps() {
        let lex = fixture_lexicon();
        assert_eq!(preprocess("@user1 #makeitrain", &lex), ["<user>", "make", "it", "rain"]);
        assert_eq!(preprocess("It's [#TARGETWORD#]", &lex), ["it's", "<targetword>"]);
        assert!(preprocess("", &lex).is_empty());
    }

    #[test]
    fn preprocess_corrects_long_oov_words_only() {
        let lex = fixture_lexicon();
        assert_eq!(preprocess("I fele hapy whne", &lex), ["i", "feel", "happy", "when"]);
        // short slang is left alone
        assert_eq!(preprocess("teh", &lex), ["teh"]);
    }

    #[test]
    fn normalized_output_has_no_uppercase() {
        let toks = normalize(&tokenize("WOW :D Check OUT #TBT U.S.A S**T *VERY*"));
        for t in toks {
            assert!(!t.surface.chars().any(char::is_uppercase), "{t:?}");
        }
    }
}
