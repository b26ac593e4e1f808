//! Critical-API mining: weighted TF-IDF keyword ranking over a vulnerability
//! corpus, keyword matching against API documentation, and filtering of
//! off-the-shelf tool lists.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Cve,
    ExploitdbVerified,
    ExploitdbUnverified,
    CodeSample,
}

impl SourceKind {
    pub fn default_weight(self) -> f64 {
        match self {
            SourceKind::ExploitdbVerified => 2.0,
            SourceKind::Cve | SourceKind::ExploitdbUnverified | SourceKind::CodeSample => 1.0,
        }
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cve" => Ok(SourceKind::Cve),
            "exploitdb_verified" => Ok(SourceKind::ExploitdbVerified),
            "exploitdb_unverified" => Ok(SourceKind::ExploitdbUnverified),
            "code_sample" => Ok(SourceKind::CodeSample),
            other => Err(Error::Format(format!("unknown source kind `{other}`"))),
        }
    }
}

/// Per-source weights; defaults favor verified exploit entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWeights {
    pub cve: f64,
    pub exploitdb_verified: f64,
    pub exploitdb_unverified: f64,
    pub code_sample: f64,
}

impl Default for SourceWeights {
    fn default() -> Self {
        SourceWeights {
            cve: SourceKind::Cve.default_weight(),
            exploitdb_verified: SourceKind::ExploitdbVerified.default_weight(),
            exploitdb_unverified: SourceKind::ExploitdbUnverified.default_weight(),
            code_sample: SourceKind::CodeSample.default_weight(),
        }
    }
}

impl SourceWeights {
    pub fn weight(&self, kind: SourceKind) -> f64 {
        match kind {
            SourceKind::Cve => self.cve,
            SourceKind::ExploitdbVerified => self.exploitdb_verified,
            SourceKind::ExploitdbUnverified => self.exploitdb_unverified,
            SourceKind::CodeSample => self.code_sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub text: String,
    pub source_kind: SourceKind,
    pub weight: f64,
}

impl CorpusDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>, source_kind: SourceKind) -> Self {
        CorpusDocument {
            doc_id: doc_id.into(),
            text: text.into(),
            source_kind,
            weight: source_kind.default_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScore {
    pub keyword: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiDoc {
    pub signature: String,
    pub description: String,
}

/// Deduplicated, lexicographically ordered set of critical API signatures.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalApiSet {
    pub apis: BTreeSet<String>,
}

impl CriticalApiSet {
    pub fn contains(&self, sig: &str) -> bool {
        self.apis.contains(sig)
    }

    pub fn len(&self) -> usize {
        self.apis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn insert(&mut self, sig: impl Into<String>) -> bool {
        self.apis.insert(sig.into())
    }

    /// One signature per line, sorted, trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for api in &self.apis {
            out.push_str(api);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Self {
        CriticalApiSet {
            apis: non_comment_lines(text).map(str::to_string).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The list shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../data/critical_apis.txt"))
    }
}

impl<S: Into<String>> FromIterator<S> for CriticalApiSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        CriticalApiSet {
            apis: iter.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for CriticalApiSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub(crate) fn non_comment_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Corpus tokenizer: lowercase, tokens are maximal runs of ASCII
/// alphanumerics and dots, with surrounding dots trimmed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '.'))
        .map(|t| t.trim_matches('.'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Splits identifiers on case changes, digits boundaries and any
/// non-alphanumeric character, producing lowercase words.
/// `sendTextMessage(Ljava/lang/String;)` → `send text message ljava lang string`.
pub fn identifier_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if !cur.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
            let boundary = (prev.is_ascii_lowercase() && c.is_ascii_uppercase())
                || (prev.is_ascii_uppercase() && c.is_ascii_uppercase() && next_lower)
                || (prev.is_ascii_digit() != c.is_ascii_digit());
            if boundary {
                words.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c.to_ascii_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Weighted TF-IDF ranking.
///
/// `score(t) = Σ_d weight(d) · count(t,d)/|d| · (ln((1+N)/(1+df(t))) + 1)`,
/// sorted by descending score with ties broken lexicographically.
/// `|d|` counts all tokens of the document, stopwords included.
pub fn rank_keywords(
    corpus: &[CorpusDocument],
    stopwords: &BTreeSet<String>,
) -> Result<Vec<KeywordScore>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = corpus.len() as f64;
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut weighted_tf: HashMap<String, f64> = HashMap::new();
    for doc in corpus {
        let tokens = tokenize(&doc.text);
        if tokens.is_empty() {
            continue;
        }
        let len = tokens.len() as f64;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        for (t, c) in counts {
            if stopwords.contains(t) {
                continue;
            }
            *df.entry(t.to_string()).or_default() += 1;
            *weighted_tf.entry(t.to_string()).or_default() += doc.weight * c as f64 / len;
        }
    }
    let mut ranked: Vec<KeywordScore> = weighted_tf
        .into_iter()
        .map(|(keyword, tf)| {
            let idf = ((1.0 + n) / (1.0 + df[&keyword] as f64)).ln() + 1.0;
            KeywordScore {
                keyword,
                score: tf * idf,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.keyword.cmp(&b.keyword))
    });
    Ok(ranked)
}

pub const DEFAULT_TOP_K: usize = 150;

/// First `k` keywords of an already ranked list.
pub fn select_top(ranked: &[KeywordScore], k: usize) -> BTreeSet<String> {
    assert!(k >= 1, "k must be at least 1");
    if k > ranked.len() {
        log::warn!(
            "requested top {k} keywords but only {} are ranked; keeping all",
            ranked.len()
        );
    }
    ranked.iter().take(k).map(|s| s.keyword.clone()).collect()
}

fn contains_words(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

/// Distinct keywords whose word sequence occurs in `text` as whole words.
pub fn matched_keywords<'k>(text: &str, keywords: &'k BTreeSet<String>) -> Vec<&'k str> {
    let words = identifier_words(text);
    keywords
        .iter()
        .filter(|k| contains_words(&words, &identifier_words(k)))
        .map(String::as_str)
        .collect()
}

pub const DEFAULT_MIN_MATCHES: usize = 2;

/// Keeps an API when at least `min_matches` distinct keywords occur in its
/// signature plus description.
pub fn match_critical_apis(
    api_docs: &[ApiDoc],
    keywords: &BTreeSet<String>,
    min_matches: usize,
) -> CriticalApiSet {
    api_docs
        .iter()
        .filter(|doc| {
            let text = format!("{} {}", doc.signature, doc.description);
            matched_keywords(&text, keywords).len() >= min_matches
        })
        .map(|doc| doc.signature.clone())
        .collect()
}

/// Adds tool-list APIs whose signature contains at least one keyword.
pub fn merge_tool_lists(
    tool_apis: &[String],
    keywords: &BTreeSet<String>,
    mined: &CriticalApiSet,
) -> CriticalApiSet {
    let mut out = mined.clone();
    for api in tool_apis {
        if !matched_keywords(api, keywords).is_empty() {
            out.insert(api.clone());
        }
    }
    out
}

/// Reads a corpus directory: `index.tsv` with lines
/// `doc_id<TAB>source_kind[<TAB>weight]`, and one `<doc_id>.txt` per entry.
pub fn load_corpus(dir: &Path, weights: &SourceWeights) -> Result<Vec<CorpusDocument>> {
    let index_path = dir.join("index.tsv");
    let index = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut docs = Vec::new();
    for line in non_comment_lines(&index) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::Format(format!("bad corpus index line `{line}`")));
        }
        let kind: SourceKind = fields[1].trim().parse()?;
        let weight = match fields.get(2) {
            Some(w) => w
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|w| *w > 0.0)
                .ok_or_else(|| Error::Format(format!("bad weight in `{line}`")))?,
            None => weights.weight(kind),
        };
        let doc_id = fields[0].trim().to_string();
        let path = dir.join(format!("{doc_id}.txt"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        docs.push(CorpusDocument {
            doc_id,
            text,
            source_kind: kind,
            weight,
        });
    }
    Ok(docs)
}

/// API documentation file: `signature<TAB>description` per line.
pub fn parse_api_docs(text: &str) -> Result<Vec<ApiDoc>> {
    non_comment_lines(text)
        .map(|line| {
            let (sig, desc) = line.split_once('\t').unwrap_or((line, ""));
            if sig.trim().is_empty() {
                return Err(Error::Format(format!("empty API signature in `{line}`")));
            }
            Ok(ApiDoc {
                signature: sig.trim().to_string(),
                description: desc.trim().to_string(),
            })
        })
        .collect()
}

pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    non_comment_lines(text).map(|l| l.to_lowercase()).collect()
}

/// Java keywords and built-in type names, always excluded from ranking.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_word_list(include_str!("../data/stopwords.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> CorpusDocument {
        CorpusDocument::new(id, text, SourceKind::Cve)
    }

    /// Independent scorer: recomputes each keyword's score by scanning the
    /// raw documents with no shared state.
    fn brute_force_score(corpus: &[(&str, f64)], term: &str) -> f64 {
        let n = corpus.len() as f64;
        let docs: Vec<(Vec<&str>, f64)> = corpus
            .iter()
            .map(|(t, w)| (t.split(' ').collect(), *w))
            .collect();
        let df = docs.iter().filter(|(d, _)| d.contains(&term)).count() as f64;
        let idf = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
        docs.iter()
            .map(|(d, w)| w * d.iter().filter(|x| **x == term).count() as f64 / d.len() as f64)
            .sum::<f64>()
            * idf
    }

    #[test]
    fn sms_ranked_first() {
        let oracle = brute_force_score(&[("send sms sms", 1.0), ("read file", 1.0)], "sms");
        assert!((oracle - 0.9368).abs() < 5e-4, "oracle {oracle}");
        let ranked =
            rank_keywords(&[doc("1", "send sms sms"), doc("2", "read file")], &BTreeSet::new())
                .unwrap();
        assert_eq!(ranked[0].keyword, "sms");
        assert!((ranked[0].score - oracle).abs() < 1e-12);
        for k in &ranked {
            let o = brute_force_score(&[("send sms sms", 1.0), ("read file", 1.0)], &k.keyword);
            assert!((k.score - o).abs() < 1e-12, "{}", k.keyword);
        }
    }

    #[test]
    fn idf_identity_for_single_doc() {
        let ranked = rank_keywords(&[doc("1", "alpha")], &BTreeSet::new()).unwrap();
        assert!((ranked[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn verified_weight_doubles() {
        let base =
            rank_keywords(&[doc("1", "send sms sms"), doc("2", "read file")], &BTreeSet::new())
                .unwrap();
        let weighted = rank_keywords(
            &[
                CorpusDocument::new("1", "send sms sms", SourceKind::ExploitdbVerified),
                doc("2", "read file"),
            ],
            &BTreeSet::new(),
        )
        .unwrap();
        assert_eq!(weighted[0].keyword, "sms");
        assert!((weighted[0].score - 2.0 * base[0].score).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            rank_keywords(&[], &BTreeSet::new()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn stopwords_excluded() {
        let stop: BTreeSet<String> = ["send".to_string()].into();
        let ranked = rank_keywords(&[doc("1", "send sms sms")], &stop).unwrap();
        assert!(ranked.iter().all(|k| k.keyword != "send"));
        assert!(default_stopwords().contains("public"));
        assert!(default_stopwords().contains("string"));
    }

    #[test]
    fn top_k_and_ties() {
        let ranked = vec![
            KeywordScore { keyword: "a".into(), score: 3.0 },
            KeywordScore { keyword: "b".into(), score: 2.0 },
            KeywordScore { keyword: "c".into(), score: 1.0 },
        ];
        assert_eq!(select_top(&ranked, 2), ["a".to_string(), "b".into()].into());
        assert_eq!(select_top(&ranked, 10).len(), 3);

        let tied = rank_keywords(&[doc("1", "zeta alpha omega omega")], &BTreeSet::new()).unwrap();
        assert_eq!(tied[0].keyword, "omega");
        assert_eq!(select_top(&tied, 2), ["omega".to_string(), "alpha".into()].into());
    }

    #[test]
    fn top_150_of_many() {
        let ranked: Vec<KeywordScore> = (0..10_782)
            .map(|i| KeywordScore {
                keyword: format!("k{i:05}"),
                score: 1.0 / (i + 1) as f64,
            })
            .collect();
        assert_eq!(select_top(&ranked, DEFAULT_TOP_K).len(), 150);
    }

    #[test]
    fn identifier_splitting() {
        assert_eq!(identifier_words("sendTextMessage"), vec!["send", "text", "message"]);
        assert_eq!(
            identifier_words("Landroid/telephony/SmsManager;->getDeviceId()"),
            vec!["landroid", "telephony", "sms", "manager", "get", "device", "id"]
        );
        assert_eq!(identifier_words("HTTPClient2x"), vec!["http", "client", "2", "x"]);
    }

    #[test]
    fn matching_counts_distinct_keywords() {
        let kw: BTreeSet<String> = ["sms".to_string(), "send".into()].into();
        let docs = vec![
            ApiDoc { signature: "La/SmsManager;->sendTextMessage()V".into(), description: "Send an SMS".into() },
            ApiDoc { signature: "La/X;->foo()V".into(), description: "sms only".into() },
            ApiDoc { signature: "La/Y;->bar()V".into(), description: "sms and again sms".into() },
        ];
        let set = match_critical_apis(&docs, &kw, DEFAULT_MIN_MATCHES);
        assert_eq!(set.len(), 1);
        assert!(set.contains("La/SmsManager;->sendTextMessage()V"));
    }

    #[test]
    fn tool_list_merge() {
        let kw: BTreeSet<String> = ["send".to_string()].into();
        let mined: CriticalApiSet = ["La/A;->sendTextMessage()V"].into_iter().collect();
        let tools = vec![
            "La/A;->sendTextMessage()V".to_string(),
            "La/B;->sendData()V".into(),
            "La/C;->read()V".into(),
        ];
        let merged = merge_tool_lists(&tools, &kw, &mined);
        assert_eq!(merged.len(), 2);
        assert!(merged.contains("La/B;->sendData()V"));
        assert!(!merged.contains("La/C;->read()V"));
        assert_eq!(merge_tool_lists(&tools, &kw, &merged), merged);
    }
}
