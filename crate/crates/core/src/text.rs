//! Text normalization shared by every metric: tokenization, stopword
//! filtering, character n-grams, term-frequency vectors and script detection.
//!
//! All input text is NFC-normalized before it is looked at.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_script::{Script, UnicodeScript};

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// NFC-normalize `text`.
pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Tokenization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Lowercase, strip Unicode punctuation, split on whitespace.
    Simple,
    /// One token per character, whitespace dropped.
    Char,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Simple => f.write_str("simple"),
            Scheme::Char => f.write_str("char"),
        }
    }
}

/// Ordered tokens plus the scheme that produced them.
///
/// No token is empty and no token contains whitespace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    scheme: Scheme,
}

impl TokenSequence {
    /// Builds a sequence from pre-split tokens, dropping empty ones.
    ///
    /// Tokens that contain whitespace are split further so the type
    /// invariant holds whatever the caller passes.
    pub fn from_tokens<I, S>(tokens: I, scheme: Scheme) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens = tokens
            .into_iter()
            .flat_map(|t| {
                t.as_ref()
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { tokens, scheme }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}").expect("valid punctuation class"))
}

/// Tokenizes `text` with the given scheme. Deterministic; empty text gives
/// an empty sequence.
pub fn tokenize(text: &str, scheme: Scheme) -> TokenSequence {
    let text = nfc(text);
    let tokens = match scheme {
        Scheme::Simple => {
            // Lowercasing can leave the text un-normalized, so re-compose.
            let lowered = nfc(&text.to_lowercase());
            let stripped = punctuation().replace_all(&lowered, "");
            stripped.split_whitespace().map(str::to_owned).collect()
        }
        Scheme::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    };
    TokenSequence { tokens, scheme }
}

/// A stopword list. Matching is exact on already-tokenized forms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The built-in English list.
    pub fn english() -> &'static Stopwords {
        static LIST: OnceLock<Stopwords> = OnceLock::new();
        LIST.get_or_init(|| Stopwords::from_text(ENGLISH_STOPWORDS))
    }

    /// Parses a one-token-per-line list. Blank lines and lines starting
    /// with `#` are ignored; entries are lowercased and NFC-normalized.
    pub fn from_text(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| nfc(&l.to_lowercase()))
            .collect();
        Self { words }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Drops stopwords, keeping the order of surviving tokens.
    pub fn remove(&self, ts: &TokenSequence) -> TokenSequence {
        TokenSequence {
            tokens: ts
                .tokens
                .iter()
                .filter(|t| !self.contains(t))
                .cloned()
                .collect(),
            scheme: ts.scheme,
        }
    }
}

/// [`Stopwords::remove`] with the built-in English list.
pub fn remove_stopwords(ts: &TokenSequence) -> TokenSequence {
    Stopwords::english().remove(ts)
}

/// Raw term-frequency vectors of two sentences over their joint vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TermVector {
    pub vocabulary: Vec<String>,
    pub counts_a: Vec<u64>,
    pub counts_b: Vec<u64>,
}

impl TermVector {
    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }
}

/// Joint vocabulary ordered by first appearance in `a`, then `b`.
pub fn term_vectors(a: &TokenSequence, b: &TokenSequence) -> TermVector {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut vocabulary = Vec::new();
    for t in a.tokens.iter().chain(&b.tokens) {
        index.entry(t.as_str()).or_insert_with(|| {
            vocabulary.push(t.clone());
            vocabulary.len() - 1
        });
    }
    let mut counts_a = vec![0; vocabulary.len()];
    let mut counts_b = vec![0; vocabulary.len()];
    for t in &a.tokens {
        counts_a[index[t.as_str()]] += 1;
    }
    for t in &b.tokens {
        counts_b[index[t.as_str()]] += 1;
    }
    TermVector {
        vocabulary,
        counts_a,
        counts_b,
    }
}

/// Multiset of character n-grams.
pub type NgramCounts = HashMap<String, usize>;

/// All contiguous length-`n` character windows of `text` (whitespace
/// removed), with multiplicity. `n = 0` or short text gives an empty set.
pub fn char_ngrams(text: &str, n: usize) -> NgramCounts {
    let chars: Vec<char> = nfc(text).chars().filter(|c| !c.is_whitespace()).collect();
    ngrams_of_chars(&chars, n)
}

pub(crate) fn ngrams_of_chars(chars: &[char], n: usize) -> NgramCounts {
    let mut out = NgramCounts::new();
    if n == 0 {
        return out;
    }
    for w in chars.windows(n) {
        *out.entry(w.iter().collect()).or_insert(0) += 1;
    }
    out
}

/// Unicode scripts present in a piece of text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScriptProfile {
    /// Script names, excluding Common, Inherited and Unknown.
    pub scripts: BTreeSet<String>,
    /// Script with the most alphabetic characters; ties go to the name
    /// that sorts first.
    pub dominant: Option<String>,
    pub mixed: bool,
}

/// Classifies alphabetic characters by Unicode script.
pub fn detect_scripts(text: &str) -> ScriptProfile {
    let mut counts: HashMap<Script, usize> = HashMap::new();
    for c in nfc(text).chars().filter(|c| c.is_alphabetic()) {
        match c.script() {
            Script::Common | Script::Inherited | Script::Unknown => {}
            s => *counts.entry(s).or_insert(0) += 1,
        }
    }
    let scripts: BTreeSet<String> = counts.keys().map(|s| s.full_name().to_owned()).collect();
    let dominant = counts
        .iter()
        .map(|(s, n)| (*n, s.full_name()))
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, name)| name.to_owned());
    let mixed = scripts.len() >= 2;
    ScriptProfile {
        scripts,
        dominant,
        mixed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words, Scheme::Simple)
    }

    #[test]
    fn simple_scheme() {
        assert_eq!(
            tokenize("The boys love football", Scheme::Simple).tokens(),
            ["the", "boys", "love", "football"]
        );
        assert_eq!(tokenize("Hello, world!", Scheme::Simple).tokens(), ["hello", "world"]);
        assert!(tokenize("", Scheme::Simple).is_empty());
        assert!(tokenize(" ... ", Scheme::Simple).is_empty());
    }

    #[test]
    fn char_scheme() {
        assert_eq!(tokenize("ab c", Scheme::Char).tokens(), ["a", "b", "c"]);
    }

    #[test]
    fn nfc_is_applied() {
        // "e" + combining acute vs precomposed
        assert_eq!(
            tokenize("Cafe\u{301}", Scheme::Simple),
            tokenize("caf\u{e9}", Scheme::Simple)
        );
    }

    #[test]
    fn builtin_list_has_required_words() {
        let sw = Stopwords::english();
        for w in ["the", "this", "that", "is", "it", "to", "too", "a", "was", "of", "and"] {
            assert!(sw.contains(w), "{w}");
        }
        for w in ["phone", "broken", "iphone", "smashed", "love", "boys", "guys", "sport"] {
            assert!(!sw.contains(w), "{w}");
        }
    }

    #[test]
    fn stopword_removal() {
        assert_eq!(
            remove_stopwords(&simple(&["the", "phone", "is", "broken"])).tokens(),
            ["phone", "broken"]
        );
        assert_eq!(
            remove_stopwords(&simple(&["this", "iphone", "is", "smashed"])).tokens(),
            ["iphone", "smashed"]
        );
        assert!(remove_stopwords(&simple(&[])).is_empty());
    }

    #[test]
    fn custom_stopwords() {
        let sw = Stopwords::from_text("# comment\nFoo\n\nbar\n");
        assert_eq!(sw.len(), 2);
        assert_eq!(sw.remove(&simple(&["foo", "baz", "bar"])).tokens(), ["baz"]);
    }

    #[test]
    fn term_vector_examples() {
        let tv = term_vectors(&simple(&["phone", "broken"]), &simple(&["iphone", "smashed"]));
        assert_eq!(tv.vocabulary, ["phone", "broken", "iphone", "smashed"]);
        assert_eq!(tv.counts_a, [1, 1, 0, 0]);
        assert_eq!(tv.counts_b, [0, 0, 1, 1]);

        let tv = term_vectors(
            &simple(&["boys", "love", "football"]),
            &simple(&["guys", "love", "sport"]),
        );
        assert_eq!(tv.vocabulary, ["boys", "love", "football", "guys", "sport"]);
        assert_eq!(tv.counts_a, [1, 1, 1, 0, 0]);
        assert_eq!(tv.counts_b, [0, 1, 0, 1, 1]);

        let tv = term_vectors(&simple(&["a", "a"]), &simple(&["a"]));
        assert_eq!(tv.vocabulary, ["a"]);
        assert_eq!((tv.counts_a, tv.counts_b), (vec![2], vec![1]));

        assert!(term_vectors(&simple(&[]), &simple(&[])).is_empty());
    }

    #[test]
    fn ngram_examples() {
        let g = char_ngrams("abc", 2);
        assert_eq!(g.len(), 2);
        assert_eq!((g["ab"], g["bc"]), (1, 1));
        assert_eq!(char_ngrams("aaa", 2), NgramCounts::from([("aa".into(), 2)]));
        assert_eq!(char_ngrams("a b", 2), NgramCounts::from([("ab".into(), 1)]));
        assert!(char_ngrams("a", 2).is_empty());
    }

    #[test]
    fn script_examples() {
        let p = detect_scripts("Tigers and leopards roar 猿狖群嘯兮虎豹原");
        assert_eq!(p.scripts, BTreeSet::from(["Han".to_owned(), "Latin".to_owned()]));
        assert!(p.mixed);
        assert_eq!(p.dominant.as_deref(), Some("Latin"));

        let p = detect_scripts("plain english text");
        assert_eq!(p.scripts, BTreeSet::from(["Latin".to_owned()]));
        assert!(!p.mixed);

        let p = detect_scripts("1234 !!");
        assert!(p.scripts.is_empty());
        assert!(!p.mixed);
        assert_eq!(p.dominant, None);
    }

    proptest! {
        #[test]
        fn simple_tokenize_is_idempotent(s in "\\PC{0,40}") {
            let once = tokenize(&s, Scheme::Simple);
            let again = tokenize(&once.tokens().join(" "), Scheme::Simple);
            prop_assert_eq!(once, again);
        }

        #[test]
        fn tokens_are_clean(s in "\\PC{0,40}", char_scheme in any::<bool>()) {
            let scheme = if char_scheme { Scheme::Char } else { Scheme::Simple };
            for t in tokenize(&s, scheme).tokens() {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn stopword_removal_is_idempotent(s in "[a-z ]{0,60}") {
            let once = remove_stopwords(&tokenize(&s, Scheme::Simple));
            prop_assert_eq!(remove_stopwords(&once), once.clone());
        }

        #[test]
        fn term_vectors_are_exchangeable(a in "[a-e ]{0,20}", b in "[a-e ]{0,20}") {
            let (ta, tb) = (tokenize(&a, Scheme::Simple), tokenize(&b, Scheme::Simple));
            let ab = term_vectors(&ta, &tb);
            let ba = term_vectors(&tb, &ta);
            let lookup = |tv: &TermVector, w: &str| {
                let i = tv.vocabulary.iter().position(|v| v == w).unwrap();
                (tv.counts_a[i], tv.counts_b[i])
            };
            prop_assert_eq!(ab.len(), ba.len());
            for w in &ab.vocabulary {
                let (x, y) = lookup(&ab, w);
                prop_assert_eq!(lookup(&ba, w), (y, x));
            }
            prop_assert_eq!(ab.counts_a.iter().sum::<u64>(), ta.len() as u64);
            prop_assert_eq!(ab.counts_b.iter().sum::<u64>(), tb.len() as u64);
        }

        #[test]
        fn ngram_multiplicity_total(s in "\\PC{0,30}", n in 1usize..8) {
            let stripped = nfc(&s).chars().filter(|c| !c.is_whitespace()).count();
            let total: usize = char_ngrams(&s, n).values().sum();
            prop_assert_eq!(total, (stripped + 1).saturating_sub(n));
        }
    }
}
