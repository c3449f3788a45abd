//! Tweet tokenizer.
//!
//! A left-to-right scanner: at each non-whitespace position the recognizers
//! below are tried in priority order and the first one that matches produces
//! the next token. Every non-whitespace character ends up in exactly one token.

use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub const TARGET_PLACEHOLDER: &str = "[#TARGETWORD#]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenKind {
    Word,
    Url,
    User,
    Email,
    Phone,
    Date,
    Time,
    Money,
    Hashtag,
    Emoticon,
    Acronym,
    Censored,
    Emphasis,
    Number,
    Punct,
    TargetWord,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TokenKind::Word => "WORD",
            TokenKind::Url => "URL",
            TokenKind::User => "USER",
            TokenKind::Email => "EMAIL",
            TokenKind::Phone => "PHONE",
            TokenKind::Date => "DATE",
            TokenKind::Time => "TIME",
            TokenKind::Money => "MONEY",
            TokenKind::Hashtag => "HASHTAG",
            TokenKind::Emoticon => "EMOTICON",
            TokenKind::Acronym => "ACRONYM",
            TokenKind::Censored => "CENSORED",
            TokenKind::Emphasis => "EMPHASIS",
            TokenKind::Number => "NUMBER",
            TokenKind::Punct => "PUNCT",
            TokenKind::TargetWord => "TARGETWORD",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn new(surface: impl Into<String>, kind: TokenKind) -> Self {
        Token {
            surface: surface.into(),
            kind,
        }
    }
}

static EMOTICONS: Lazy<Vec<&'static str>> = Lazy::new(|| {
    let mut list: Vec<&str> = include_str!("../../data/emoticons.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    // longest first so ":((" wins over ":("
    list.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    list.dedup();
    list
});

/// Recognizers in priority order. Each pattern is anchored at the scan position.
static RECOGNIZERS: Lazy<Vec<(TokenKind, Regex)>> = Lazy::new(|| {
    let table: &[(TokenKind, &str)] = &[
        (
            TokenKind::Url,
            r#"(?i:https?://|www\.)\S*[^\s.,!?;:)\]}'"]"#,
        ),
        (TokenKind::Email, r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+"),
        (TokenKind::User, r"@\w+"),
        (TokenKind::Hashtag, r"#[\p{L}\p{M}\p{N}_]+"),
        (
            TokenKind::Money,
            r"[$€£¥]\d+(?:[.,]\d+)*[kKmMbB]?|\d+(?:[.,]\d+)*[$€£¥]",
        ),
        (
            TokenKind::Phone,
            r"(?:\+\d{1,3}[-.]?)?(?:\(\d{3}\)|\d{3})[-.]?\d{3}[-.]\d{4}",
        ),
        (
            TokenKind::Date,
            r"\d{4}[/-]\d{1,2}[/-]\d{1,2}|\d{1,2}[/-]\d{1,2}[/-]\d{2,4}",
        ),
        (
            TokenKind::Time,
            r"\d{1,2}:\d{2}(?::\d{2})?(?:[aApP]\.?[mM]\.?)?|\d{1,2}[aApP]\.?[mM]\.?",
        ),
        (TokenKind::Emphasis, r"\*[\p{L}\p{M}]+\*"),
        (TokenKind::Censored, r"[\p{L}\p{M}]+\*[\p{L}\p{M}*]*[\p{L}\p{M}]"),
        (TokenKind::Acronym, r"(?:\p{L}\.){2,}\p{L}?"),
        (TokenKind::Number, r"\d+(?:[.,]\d+)*"),
        (
            TokenKind::Word,
            r"[\p{L}\p{M}][\p{L}\p{M}\p{N}_]*(?:['’][\p{L}\p{M}]+)*",
        ),
        (
            TokenKind::Emoticon,
            r"\p{Extended_Pictographic}(?:\x{FE0F}|\x{200D}\p{Extended_Pictographic}|\p{Emoji_Modifier})*",
        ),
        (TokenKind::Punct, r"[!?.]{2,}|\S"),
    ];
    table
        .iter()
        .map(|&(kind, pat)| {
            let re = Regex::new(&format!("^(?:{pat})")).expect("static recognizer pattern");
            (kind, re)
        })
        .collect()
});

fn emoticon_at(rest: &str, preceded_by_space: bool) -> Option<&'static str> {
    if !preceded_by_space {
        return None;
    }
    EMOTICONS.iter().copied().find(|emo| {
        rest.starts_with(emo)
            && rest[emo.len()..]
                .chars()
                .next()
                .is_none_or(|c| c.is_whitespace() || matches!(c, '.' | ',' | '!' | '?'))
    })
}

/// Splits raw tweet text into typed tokens. Total: any input yields a
/// (possibly empty) token list, and the target-word placeholder is never split.
pub fn tokenize(raw: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut preceded_by_space = true;

    while pos < raw.len() {
        let rest = &raw[pos..];
        let c = rest.chars().next().expect("pos is on a char boundary");
        if c.is_whitespace() {
            pos += c.len_utf8();
            preceded_by_space = true;
            continue;
        }

        let (kind, len) = if rest.starts_with(TARGET_PLACEHOLDER) {
            (TokenKind::TargetWord, TARGET_PLACEHOLDER.len())
        } else if let Some(emo) = emoticon_at(rest, preceded_by_space) {
            (TokenKind::Emoticon, emo.len())
        } else {
            RECOGNIZERS
                .iter()
                .find_map(|(kind, re)| re.find(rest).map(|m| (*kind, m.end())))
                .filter(|&(_, len)| len > 0)
                .unwrap_or((TokenKind::Punct, c.len_utf8()))
        };

        tokens.push(Token::new(&rest[..len], kind));
        pos += len;
        preceded_by_space = false;
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(raw: &str) -> Vec<(String, TokenKind)> {
        tokenize(raw)
            .into_iter()
            .map(|t| (t.surface, t.kind))
            .collect()
    }

    fn tok(s: &str, k: TokenKind) -> (String, TokenKind) {
        (s.to_string(), k)
    }

    #[test]
    fn placeholder_is_one_token() {
        use TokenKind::*;
        assert_eq!(
            kinds("It's [#TARGETWORD#] when"),
            vec![
                tok("It's", Word),
                tok("[#TARGETWORD#]", TargetWord),
                tok("when", Word)
            ]
        );
        // glued to punctuation
        assert_eq!(
            kinds("so[#TARGETWORD#]!"),
            vec![tok("so", Word), tok("[#TARGETWORD#]", TargetWord), tok("!", Punct)]
        );
    }

    #[test]
    fn censored_and_emphasis() {
        use TokenKind::*;
        assert_eq!(
            kinds("that s**t happened"),
            vec![tok("that", Word), tok("s**t", Censored), tok("happened", Word)]
        );
        assert_eq!(kinds("*very* nice"), vec![tok("*very*", Emphasis), tok("nice", Word)]);
        // trailing asterisk is not interior
        assert_eq!(kinds("f**")[0], tok("f", Word));
    }

    #[test]
    fn empty_and_whitespace_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n ").is_empty());
    }

    #[test]
    fn twitter_markup() {
        use TokenKind::*;
        assert_eq!(
            kinds("@user1 see http://a.io/x, mail me@x.org #MakeItRain"),
            vec![
                tok("@user1", User),
                tok("see", Word),
                tok("http://a.io/x", Url),
                tok(",", Punct),
                tok("mail", Word),
                tok("me@x.org", Email),
                tok("#MakeItRain", Hashtag),
            ]
        );
    }

    #[test]
    fn dates_times_money_phones() {
        use TokenKind::*;
        assert_eq!(
            kinds("on 12/05/2018 at 10:30pm pay $5.99 call 555-123-4567 or 7pm"),
            vec![
                tok("on", Word),
                tok("12/05/2018", Date),
                tok("at", Word),
                tok("10:30pm", Time),
                tok("pay", Word),
                tok("$5.99", Money),
                tok("call", Word),
                tok("555-123-4567", Phone),
                tok("or", Word),
                tok("7pm", Time),
            ]
        );
    }

    #[test]
    fn emoticons_need_space_boundaries() {
        use TokenKind::*;
        assert_eq!(kinds("great :)"), vec![tok("great", Word), tok(":)", Emoticon)]);
        assert_eq!(
            kinds("great :((!"),
            vec![tok("great", Word), tok(":((", Emoticon), tok("!", Punct)]
        );
        // not an emoticon when glued to a word
        assert_eq!(
            kinds("word:)"),
            vec![tok("word", Word), tok(":", Punct), tok(")", Punct)]
        );
        assert_eq!(kinds("😂👍🏽")[1], tok("👍🏽", Emoticon));
    }

    #[test]
    fn acronyms_numbers_and_punct_runs() {
        use TokenKind::*;
        assert_eq!(
            kinds("the U.S. has 3,000 cats!!!"),
            vec![
                tok("the", Word),
                tok("U.S.", Acronym),
                tok("has", Word),
                tok("3,000", Number),
                tok("cats", Word),
                tok("!!!", Punct),
            ]
        );
    }

    #[test]
    fn no_non_whitespace_character_is_lost() {
        let raw = "Omg!! @bob's #TBT pic: https://t.co/abc …  s**t *so* good :D 😂 U.S.A ¯\\_(ツ)_/¯";
        let joined: String = tokenize(raw).into_iter().map(|t| t.surface).collect();
        let stripped: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(joined, stripped);
    }
}
