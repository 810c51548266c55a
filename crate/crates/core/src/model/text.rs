use std::collections::HashMap;

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token vocabulary; id 0 is the unknown token.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

pub const UNKNOWN_ID: u32 = 0;

impl Vocab {
    /// Builds a vocabulary from training texts. Ids follow first occurrence.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocab {
            tokens: vec!["<unk>".to_string()],
            index: HashMap::new(),
        };
        for text in texts {
            for tok in tokenize(text) {
                if !v.index.contains_key(&tok) {
                    v.index.insert(tok.clone(), v.tokens.len() as u32);
                    v.tokens.push(tok);
                }
            }
        }
        v
    }

    /// Rebuilds from a token list whose first entry is the unknown token.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn ids(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Ids for pre-split tokens (each is re-normalized by [`tokenize`]).
    pub fn ids_for_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .flat_map(|t| tokenize(t.as_ref()))
            .map(|t| self.id(&t))
            .collect()
    }
}
