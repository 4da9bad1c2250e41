//! Deterministic offline encoders built on a shared tokenizer.

use std::collections::BTreeSet;

use super::{
    normalize, DescribeMode, Describer, Embedder, EncoderError, Reranker, NO_DESCRIPTION,
    NO_MEMBERS,
};

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "of", "to", "in", "on",
    "for", "with", "by", "at", "from", "and", "or", "not", "this", "that", "these", "those", "it",
    "its", "as", "into", "where", "which", "what", "how", "who", "when", "why", "does", "do",
    "did", "doe", "can", "there", "their", "any", "all", "some", "code", "then", "than", "has",
    "have", "had", "we", "you", "our", "your", "me", "my", "if", "else", "elif", "def", "class",
    "return", "self", "cls", "import", "none", "true", "false", "pass", "lambda", "yield", "try",
    "except", "finally", "while", "raise", "global", "nonlocal", "assert", "del", "async", "await",
];

// Longest suffix first; the stem keeps at least three characters.
const SUFFIXES: &[(&str, &str)] = &[
    ("itions", ""),
    ("ations", ""),
    ("ition", ""),
    ("ation", ""),
    ("ings", ""),
    ("ing", ""),
    ("ies", "y"),
    ("es", ""),
    ("s", ""),
];

fn stem(word: &str) -> String {
    for (suffix, replacement) in SUFFIXES {
        if *suffix == "s" && word.ends_with("ss") {
            continue;
        }
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return format!("{base}{replacement}");
            }
        }
    }
    word.to_string()
}

/// Split an identifier-ish word at camelCase boundaries.
fn split_camel(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut parts = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let boundary = i > 0 && c.is_uppercase() && {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower)
        };
        if boundary && !cur.is_empty() {
            parts.push(std::mem::take(&mut cur));
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    parts
}

/// Normalised content tokens of `text`, in order of appearance (with repeats).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        for part in split_camel(word) {
            let lower = part.to_lowercase();
            if STOPWORDS.contains(&lower.as_str()) {
                continue;
            }
            let s = stem(&lower);
            if s.chars().count() < 2 || STOPWORDS.contains(&s.as_str()) {
                continue;
            }
            out.push(s);
        }
    }
    out
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

fn dedup_in_order(tokens: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tokens.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Hashed bag-of-tokens embedder with binary bucket weights.
#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dim: usize,
}

pub const DEFAULT_DIM: usize = 256;
const EMPTY_TOKEN: &str = "<empty>";

impl Default for LocalEmbedder {
    fn default() -> Self {
        LocalEmbedder { dim: DEFAULT_DIM }
    }
}

impl LocalEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        LocalEmbedder { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut tokens = token_set(text);
        if tokens.is_empty() {
            tokens.insert(EMPTY_TOKEN.to_string());
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            v[self.bucket(t)] = 1.0;
        }
        normalize(v).expect("at least one bucket is set")
    }
}

impl Embedder for LocalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EncoderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Token-set Jaccard similarity.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalReranker;

impl LocalReranker {
    pub fn score(&self, query: &str, document: &str) -> f64 {
        let q = token_set(query);
        let d = token_set(document);
        let union = q.union(&d).count();
        if union == 0 {
            return 0.0;
        }
        q.intersection(&d).count() as f64 / union as f64
    }
}

impl Reranker for LocalReranker {
    fn rerank(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, EncoderError> {
        Ok(documents.iter().map(|d| self.score(query, d)).collect())
    }
}

/// Template-based describer. Optional character limit to exercise the
/// composed annotation path.
#[derive(Debug, Clone)]
pub struct LocalDescriber {
    pub max_input_chars: usize,
}

impl Default for LocalDescriber {
    fn default() -> Self {
        LocalDescriber {
            max_input_chars: usize::MAX,
        }
    }
}

fn ident_at(s: &str) -> Option<&str> {
    let end = s
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(s.len());
    let ident = &s[..end];
    (!ident.is_empty() && !ident.starts_with(|c: char| c.is_ascii_digit())).then_some(ident)
}

/// Name defined by a source line: `def x`, `class x`, `x = ...`, `self.x = ...`.
fn defined_name(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let t = t.strip_prefix("async ").unwrap_or(t);
    for kw in ["def ", "class "] {
        if let Some(rest) = t.strip_prefix(kw) {
            return ident_at(rest.trim_start());
        }
    }
    let t = t.strip_prefix("self.").unwrap_or(t);
    let name = ident_at(t)?;
    let rest = t[name.len()..].trim_start();
    let is_assign = (rest.starts_with('=') && !rest.starts_with("=="))
        || (rest.starts_with(':') && rest.contains('='));
    is_assign.then_some(name)
}

impl LocalDescriber {
    pub fn with_limit(max_input_chars: usize) -> Self {
        LocalDescriber { max_input_chars }
    }

    fn summarize_code(code: &str) -> String {
        let name = code
            .lines()
            .find_map(defined_name)
            .or_else(|| code.split(|c: char| !(c.is_alphanumeric() || c == '_')).find(|w| !w.is_empty()));
        let tokens = dedup_in_order(tokenize(code));
        match name {
            Some(name) => format!("{name}: {}", tokens.join(" ")),
            None => "Empty code.".to_string(),
        }
    }

    fn list_members(code: &str) -> String {
        let mut lines = code.lines();
        // The first definition line names the entity itself.
        let first = lines.next().and_then(defined_name);
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for line in lines {
            let Some(name) = defined_name(line) else { continue };
            if Some(name) == first || !seen.insert(name.to_string()) {
                continue;
            }
            let detail = dedup_in_order(tokenize(line)).join(" ");
            out.push(format!("{name} - {detail}"));
        }
        if out.is_empty() {
            NO_MEMBERS.to_string()
        } else {
            out.join("\n")
        }
    }

    fn summarize_from_members(members: &str) -> String {
        if members.trim().is_empty() {
            return NO_DESCRIPTION.to_string();
        }
        format!("Summary: {}", dedup_in_order(tokenize(members)).join(" "))
    }
}

impl Describer for LocalDescriber {
    fn describe(&self, input: &str, mode: DescribeMode) -> Result<String, EncoderError> {
        let len = input.chars().count();
        if len > self.max_input_chars {
            return Err(EncoderError::ContextOverflow {
                len,
                limit: self.max_input_chars,
            });
        }
        Ok(match mode {
            DescribeMode::SummarizeCode => Self::summarize_code(input),
            DescribeMode::ListMembers => Self::list_members(input),
            DescribeMode::SummarizeFromMembers => Self::summarize_from_members(input),
        })
    }
}
