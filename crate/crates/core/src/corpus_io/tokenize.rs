use regex::Regex;
use serde::{Deserialize, Serialize};

/// How raw text is split into tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Optional regular expression; when set, tokens are its matches instead
    /// of whitespace-separated chunks.
    pub pattern: Option<String>,
    /// Strip leading and trailing punctuation from whitespace chunks.
    pub strip_punctuation: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            pattern: None,
            strip_punctuation: true,
        }
    }
}

/// Compiled tokenizer. Cheap to clone; the regex is shared.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    config: TokenizerConfig,
    regex: Option<Regex>,
}

impl Tokenizer {
    pub fn new(config: TokenizerConfig) -> crate::Result<Self> {
        let regex = match &config.pattern {
            Some(p) => Some(Regex::new(p).map_err(|e| {
                crate::Error::Config(format!("invalid token pattern {p:?}: {e}"))
            })?),
            None => None,
        };
        Ok(Self { config, regex })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match &self.regex {
            Some(re) => re
                .find_iter(text)
                .filter_map(|m| self.normalize(m.as_str()))
                .collect(),
            None => text
                .split_whitespace()
                .filter_map(|chunk| self.normalize(chunk))
                .collect(),
        }
    }

    /// Normalizes a single token the same way `tokenize` does. Returns `None`
    /// when nothing is left. Dictionary entries go through this too.
    pub fn normalize(&self, raw: &str) -> Option<String> {
        let trimmed = if self.config.strip_punctuation {
            raw.trim_matches(is_punctuation)
        } else {
            raw
        };
        if trimmed.is_empty() {
            return None;
        }
        Some(if self.config.lowercase {
            trimmed.to_lowercase()
        } else {
            trimmed.to_string()
        })
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new(TokenizerConfig::default()).expect("default config has no pattern")
    }
}

/// Tokenize with a one-off tokenizer built from `config`.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> crate::Result<Vec<String>> {
    Ok(Tokenizer::new(config.clone())?.tokenize(text))
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '¡' | '¿'
                | '«'
                | '»'
                | '‘'
                | '’'
                | '‚'
                | '“'
                | '”'
                | '„'
                | '…'
                | '\u{2013}'
                | '\u{2014}'
                | '·'
                | '‹'
                | '›'
                | '、'
                | '。'
                | '，'
                | '！'
                | '？'
                | '：'
                | '；'
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_strips_punctuation_and_lowercases() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("Wonderful movie!"), ["wonderful", "movie"]);
    }

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(Tokenizer::default().tokenize("").is_empty());
        assert!(Tokenizer::default().tokenize("  !! ... ").is_empty());
    }

    #[test]
    fn case_normalization() {
        assert_eq!(Tokenizer::default().tokenize("A a A"), ["a", "a", "a"]);
    }

    #[test]
    fn inner_punctuation_survives() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("«l'été» don't"), ["l'été", "don't"]);
    }

    #[test]
    fn emoji_is_a_token() {
        assert_eq!(Tokenizer::default().tokenize("great 😀!"), ["great", "😀"]);
    }

    #[test]
    fn regex_pattern_and_case_preserving() {
        let cfg = TokenizerConfig {
            lowercase: false,
            pattern: Some(r"\w+".into()),
            strip_punctuation: false,
        };
        assert_eq!(tokenize("Hello, World", &cfg).unwrap(), ["Hello", "World"]);
    }

    #[test]
    fn bad_pattern_is_a_config_error() {
        let cfg = TokenizerConfig {
            pattern: Some("(".into()),
            ..Default::default()
        };
        assert!(Tokenizer::new(cfg).is_err());
    }
}
