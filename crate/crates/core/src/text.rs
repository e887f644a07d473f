//! Comment tokenization, keyword ranking, control-word selection and
//! 90-dimensional binary keyword/control feature vectors.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Bundled default vocabulary: 30 domain keywords plus 60 control words.
pub const DEFAULT_VOCABULARY_TEXT: &str = include_str!("../data/vocabulary.txt");
/// Bundled stopword list used to split control words into function and
/// content words.
pub const STOPWORDS_TEXT: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("vocabulary section '{0}' missing or empty")]
    MissingSection(String),
    #[error("term '{0}' appears in more than one vocabulary section")]
    DuplicateTerm(String),
    #[error("expected {expected} {section} terms, found {found}")]
    BadSectionSize {
        section: String,
        expected: usize,
        found: usize,
    },
    #[error("only {occurring} vocabulary terms occur in the corpus, need {requested}")]
    InsufficientVocabulary { occurring: usize, requested: usize },
    #[error("cannot fill 60 distinct control words: {candidates} eligible candidates")]
    ControlSelection { candidates: usize },
}

/// Lowercase a comment, delete apostrophes, replace every other
/// non-alphanumeric character with a space and split on whitespace.
///
/// `"White's shape isn't good."` becomes `[whites, shape, isnt, good]`.
pub fn tokenize(comment: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(comment.len());
    for ch in comment.chars() {
        if ch == '\'' || ch == '\u{2019}' {
            continue;
        }
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cleaned.push(lc);
            }
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Token set of a comment (document-frequency semantics: a term counts
/// once per comment no matter how often it repeats).
pub fn token_set(comment: &str) -> BTreeSet<String> {
    tokenize(comment).into_iter().collect()
}

/// An ordered keyword list plus the two control-word lists. The three
/// lists are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub keywords: Vec<String>,
    pub control_function: Vec<String>,
    pub control_content: Vec<String>,
}

impl Vocabulary {
    /// Build a vocabulary of arbitrary section sizes (disjointness still
    /// enforced). The standard 30/60 shape is checked separately by
    /// [`Vocabulary::validate_standard`].
    pub fn custom(
        keywords: Vec<String>,
        control_function: Vec<String>,
        control_content: Vec<String>,
    ) -> Result<Vocabulary, TextError> {
        let v = Vocabulary {
            keywords,
            control_function,
            control_content,
        };
        let mut seen = BTreeSet::new();
        for term in v.all_terms() {
            if !seen.insert(term.to_owned()) {
                return Err(TextError::DuplicateTerm(term.to_owned()));
            }
        }
        if v.keywords.is_empty() {
            return Err(TextError::MissingSection("keywords".into()));
        }
        Ok(v)
    }

    /// The bundled default vocabulary.
    pub fn default_paper() -> Vocabulary {
        Vocabulary::from_text(DEFAULT_VOCABULARY_TEXT).expect("bundled vocabulary is valid")
    }

    /// Enforce the standard shape: exactly 30 keywords and 60 control
    /// words in total.
    pub fn validate_standard(&self) -> Result<(), TextError> {
        if self.keywords.len() != 30 {
            return Err(TextError::BadSectionSize {
                section: "keywords".into(),
                expected: 30,
                found: self.keywords.len(),
            });
        }
        let controls = self.control_function.len() + self.control_content.len();
        if controls != 60 {
            return Err(TextError::BadSectionSize {
                section: "controls".into(),
                expected: 60,
                found: controls,
            });
        }
        Ok(())
    }

    /// Parse the vocabulary file format: three bracketed sections
    /// (`[keywords]`, `[control-function]`, `[control-content]`), one term
    /// per line, `#` comments and blank lines ignored.
    pub fn from_text(text: &str) -> Result<Vocabulary, TextError> {
        let mut sections: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.to_owned());
                sections.entry(name.to_owned()).or_default();
            } else if let Some(section) = &current {
                sections
                    .get_mut(section)
                    .expect("section entry exists")
                    .push(line.to_owned());
            } else {
                return Err(TextError::MissingSection("keywords".into()));
            }
        }
        let mut take = |name: &str| -> Result<Vec<String>, TextError> {
            sections
                .remove(name)
                .filter(|terms| !terms.is_empty())
                .ok_or_else(|| TextError::MissingSection(name.into()))
        };
        Vocabulary::custom(
            take("keywords")?,
            take("control-function")?,
            take("control-content")?,
        )
    }

    /// Serialize in the file format accepted by [`Vocabulary::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, terms) in [
            ("keywords", &self.keywords),
            ("control-function", &self.control_function),
            ("control-content", &self.control_content),
        ] {
            out.push_str(&format!("[{name}]\n"));
            for term in terms {
                out.push_str(term);
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// All terms in feature order: keywords, function controls, content
    /// controls.
    pub fn all_terms(&self) -> impl Iterator<Item = &str> {
        self.keywords
            .iter()
            .chain(self.control_function.iter())
            .chain(self.control_content.iter())
            .map(String::as_str)
    }

    pub fn total_len(&self) -> usize {
        self.keywords.len() + self.control_function.len() + self.control_content.len()
    }
}

/// Binary presence bits for every vocabulary term, in
/// keywords/function/content order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordFeatures {
    pub bits: Vec<u8>,
}

/// Bit `i` is 1 iff vocabulary term `i` appears among the comment's
/// tokens. Exact token match; no stemming.
pub fn extract_keyword_features(comment: &str, vocab: &Vocabulary) -> KeywordFeatures {
    let tokens = token_set(comment);
    let bits = vocab
        .all_terms()
        .map(|term| u8::from(tokens.contains(term)))
        .collect();
    KeywordFeatures { bits }
}

/// Number of comments containing each term, for every term of `vocab`
/// that occurs at all.
fn document_frequencies<'a, S: AsRef<str>>(
    comments: &[S],
    terms: impl Iterator<Item = &'a str>,
) -> BTreeMap<String, usize> {
    let wanted: BTreeSet<&str> = terms.collect();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for comment in comments {
        for token in token_set(comment.as_ref()) {
            if wanted.contains(token.as_str()) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Ranking produced by [`rank_keywords`]: the top-`n` terms plus the
/// document-frequency histogram of the ten most common terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRanking {
    pub top: Vec<String>,
    pub histogram: Vec<(String, usize)>,
}

/// Rank a domain vocabulary by the number of comments containing each
/// term and return the top `n`. Ties break lexicographically.
pub fn rank_keywords<S: AsRef<str>>(
    comments: &[S],
    domain_vocabulary: &[String],
    n: usize,
) -> Result<KeywordRanking, TextError> {
    assert!(n >= 1, "rank_keywords needs n >= 1");
    let counts = document_frequencies(comments, domain_vocabulary.iter().map(String::as_str));
    let mut ranked: Vec<(&String, usize)> = counts.iter().map(|(t, &c)| (t, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if ranked.len() < n {
        return Err(TextError::InsufficientVocabulary {
            occurring: ranked.len(),
            requested: n,
        });
    }
    let top: Vec<String> = ranked.iter().take(n).map(|(t, _)| (*t).clone()).collect();
    let histogram = ranked
        .iter()
        .take(10)
        .map(|(t, c)| ((*t).clone(), *c))
        .collect();
    Ok(KeywordRanking { top, histogram })
}

/// Frequency-rank-matched control for each default keyword, in keyword
/// order. Used as the default pairing for paired keyword-vs-control
/// significance tests; corpus-derived vocabularies get their pairing from
/// [`select_control_words`] instead.
pub const DEFAULT_MATCHED_CONTROLS: [&str; 30] = [
    "looking",
    "wanted",
    "opponents",
    "wasnt",
    "defending",
    "save",
    "youre",
    "answer",
    "three",
    "fine",
    "feel",
    "place",
    "lose",
    "bit",
    "possibility",
    "attacking",
    "likely",
    "leaves",
    "shouldnt",
    "question",
    "lost",
    "threat",
    "almost",
    "theres",
    "continue",
    "trying",
    "hope",
    "just",
    "exchange",
    "before",
];

/// The default keyword-to-control pairing (keyword order).
pub fn default_matched_pairs() -> Vec<(String, String)> {
    Vocabulary::default_paper()
        .keywords
        .iter()
        .zip(DEFAULT_MATCHED_CONTROLS)
        .map(|(k, c)| (k.clone(), c.to_owned()))
        .collect()
}

/// Document frequency of each term over the comments, sorted by
/// descending count then term.
pub fn keyword_document_frequencies<S: AsRef<str>>(
    comments: &[S],
    terms: &[String],
) -> Vec<(String, usize)> {
    let counts = document_frequencies(comments, terms.iter().map(String::as_str));
    let mut out: Vec<(String, usize)> = terms
        .iter()
        .map(|t| (t.clone(), counts.get(t).copied().unwrap_or(0)))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// The bundled stopword set.
pub fn stopwords() -> BTreeSet<String> {
    STOPWORDS_TEXT
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

/// Control words selected for a corpus: the split lists plus the
/// keyword-to-matched-control pairing used by paired significance tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlWords {
    pub function: Vec<String>,
    pub content: Vec<String>,
    /// (keyword, frequency-matched control), in keyword frequency order.
    pub matched_pairs: Vec<(String, String)>,
}

/// Select 60 control words for a corpus: the 30 most frequent non-keyword
/// tokens, plus one frequency-matched non-keyword token per keyword. The
/// union is split into function words (stopwords) and content words.
pub fn select_control_words<S: AsRef<str>>(
    comments: &[S],
    keywords: &[String],
) -> Result<ControlWords, TextError> {
    let keyword_set: BTreeSet<&str> = keywords.iter().map(String::as_str).collect();
    // Document frequency of every token in the corpus.
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for comment in comments {
        for token in token_set(comment.as_ref()) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }

    let mut non_keywords: Vec<(&String, usize)> = counts
        .iter()
        .filter(|(t, _)| !keyword_set.contains(t.as_str()))
        .map(|(t, &c)| (t, c))
        .collect();
    non_keywords.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    if non_keywords.len() < 30 + keywords.len() {
        return Err(TextError::ControlSelection {
            candidates: non_keywords.len(),
        });
    }

    // Set A: the 30 most frequent non-keyword tokens.
    let set_a: Vec<String> = non_keywords
        .iter()
        .take(30)
        .map(|(t, _)| (*t).clone())
        .collect();
    let taken: BTreeSet<&str> = set_a.iter().map(String::as_str).collect();

    // Set B: keywords in descending corpus frequency, each matched to the
    // unused non-keyword token with the nearest document frequency.
    let mut ranked_keywords: Vec<(&String, usize)> = keywords
        .iter()
        .map(|k| (k, counts.get(k).copied().unwrap_or(0)))
        .collect();
    ranked_keywords.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut pool: Vec<(&String, usize)> = non_keywords
        .iter()
        .filter(|(t, _)| !taken.contains(t.as_str()))
        .cloned()
        .collect();
    let mut matched_pairs: Vec<(String, String)> = Vec::with_capacity(keywords.len());
    let mut set_b: Vec<String> = Vec::with_capacity(keywords.len());
    for (keyword, kw_freq) in &ranked_keywords {
        let best = pool
            .iter()
            .enumerate()
            .min_by(|(_, (ta, fa)), (_, (tb, fb))| {
                let da = fa.abs_diff(*kw_freq);
                let db = fb.abs_diff(*kw_freq);
                da.cmp(&db).then_with(|| ta.cmp(tb))
            })
            .map(|(i, _)| i)
            .ok_or(TextError::ControlSelection {
                candidates: non_keywords.len(),
            })?;
        let (term, _) = pool.remove(best);
        set_b.push(term.clone());
        matched_pairs.push(((*keyword).clone(), term.clone()));
    }

    let stop = stopwords();
    let mut function = Vec::new();
    let mut content = Vec::new();
    for term in set_a.into_iter().chain(set_b) {
        if stop.contains(&term) {
            function.push(term);
        } else {
            content.push(term);
        }
    }
    Ok(ControlWords {
        function,
        content,
        matched_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_apostrophes_and_punctuation() {
        assert_eq!(
            tokenize("White's shape isn't good."),
            vec!["whites", "shape", "isnt", "good"]
        );
    }

    #[test]
    fn tokenize_empty_and_case_folding() {
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("Ko! KO ko"), vec!["ko", "ko", "ko"]);
    }

    #[test]
    fn tokenize_handles_digits_and_unicode() {
        assert_eq!(tokenize("3-3 point"), vec!["3", "3", "point"]);
        assert_eq!(tokenize("don’t"), vec!["dont"]);
    }

    #[test]
    fn default_vocabulary_shape() {
        let v = Vocabulary::default_paper();
        v.validate_standard().unwrap();
        assert_eq!(v.keywords.len(), 30);
        assert_eq!(v.control_function.len() + v.control_content.len(), 60);
        assert_eq!(v.keywords[0], "territory");
        assert_eq!(v.keywords[29], "fuseki");
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let v = Vocabulary::default_paper();
        let round = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(v, round);
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        let err = Vocabulary::custom(
            vec!["ko".into()],
            vec!["the".into(), "ko".into()],
            vec!["white".into()],
        )
        .unwrap_err();
        assert_eq!(err, TextError::DuplicateTerm("ko".into()));
    }

    #[test]
    fn keyword_bits_follow_token_membership() {
        let v = Vocabulary::custom(
            vec!["ko".into(), "atari".into()],
            vec!["the".into()],
            vec!["white".into()],
        )
        .unwrap();
        let f = extract_keyword_features("nice ko threat", &v);
        assert_eq!(f.bits, vec![1, 0, 0, 0]);
        let empty = extract_keyword_features("", &v);
        assert_eq!(empty.bits, vec![0, 0, 0, 0]);
        // Exact token match: "kos" does not fire "ko".
        let plural = extract_keyword_features("two kos left", &v);
        assert_eq!(plural.bits, vec![0, 0, 0, 0]);
    }

    #[test]
    fn rank_keywords_by_document_frequency() {
        let comments = ["ko fight", "the ko", "good shape"];
        let vocab = vec!["ko".to_owned(), "shape".to_owned(), "tesuji".to_owned()];
        let r = rank_keywords(&comments, &vocab, 2).unwrap();
        assert_eq!(r.top, vec!["ko", "shape"]);
        assert_eq!(r.histogram, vec![("ko".into(), 2), ("shape".into(), 1)]);
    }

    #[test]
    fn repeated_term_counts_once_per_comment() {
        let comments = ["ko ko ko", "shape shape"];
        let vocab = vec!["ko".to_owned(), "shape".to_owned()];
        let r = rank_keywords(&comments, &vocab, 2).unwrap();
        // Both have document frequency 1; lexicographic tie-break.
        assert_eq!(r.top, vec!["ko", "shape"]);
        assert_eq!(r.histogram[0].1, 1);
    }

    #[test]
    fn rank_keywords_insufficient_vocabulary() {
        let comments = ["nothing relevant"];
        let vocab = vec!["ko".to_owned()];
        let err = rank_keywords(&comments, &vocab, 1).unwrap_err();
        assert_eq!(
            err,
            TextError::InsufficientVocabulary {
                occurring: 0,
                requested: 1
            }
        );
    }

    #[test]
    fn rank_is_invariant_to_comment_order() {
        let mut comments = vec!["ko fight", "the ko", "good shape", "shape again", "ko"];
        let vocab = vec!["ko".to_owned(), "shape".to_owned()];
        let a = rank_keywords(&comments, &vocab, 2).unwrap();
        comments.reverse();
        let b = rank_keywords(&comments, &vocab, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stopword_list_loads() {
        let s = stopwords();
        assert_eq!(s.len(), 127);
        assert!(s.contains("the"));
        assert!(!s.contains("opponents"));
    }

    #[test]
    fn control_selection_nearest_frequency() {
        // 30 high-frequency fillers occupy set A; the keyword (freq 4)
        // must match the nearest-frequency leftover: near3 over near8.
        let mut comments: Vec<String> = Vec::new();
        let fillers: String = (0..30).map(|i| format!("w{i:02} ")).collect();
        for _ in 0..10 {
            comments.push(fillers.clone());
        }
        for i in 0..8 {
            let mut c = String::from("near8");
            if i < 4 {
                c.push_str(" kw");
            }
            if i < 3 {
                c.push_str(" near3");
            }
            comments.push(c);
        }
        let keywords = vec!["kw".to_owned()];
        let controls = select_control_words(&comments, &keywords).unwrap();
        assert_eq!(controls.matched_pairs, vec![("kw".into(), "near3".into())]);
        assert_eq!(controls.function.len() + controls.content.len(), 31);
        assert!(controls.content.contains(&"near3".to_owned()));
        assert!(!controls.content.contains(&"near8".to_owned()));
    }

    #[test]
    fn control_selection_splits_on_stopwords() {
        let mut comments: Vec<String> = Vec::new();
        for i in 0..40 {
            comments.push(format!("f{i:02} the opponents kw"));
        }
        let keywords = vec!["kw".to_owned()];
        let controls = select_control_words(&comments, &keywords).unwrap();
        assert!(controls.function.contains(&"the".to_owned()));
        assert!(controls.content.contains(&"opponents".to_owned()));
    }

    #[test]
    fn control_selection_too_small_corpus() {
        let comments = ["just two words"];
        let keywords = vec!["kw".to_owned()];
        let err = select_control_words(&comments, &keywords).unwrap_err();
        assert!(matches!(err, TextError::ControlSelection { .. }));
    }
}
