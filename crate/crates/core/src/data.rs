//! Vocabulary, word vectors, event records and the line-oriented file formats.
//!
//! Every text format is UTF-8, one record per line; blank lines and lines
//! starting with `#` are skipped. Tokens are lowercased and split on spaces.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Vector};

pub const UNKNOWN: &str = "<unk>";
pub const UNKNOWN_INDEX: usize = 0;

/// Radius of the uniform initialisation for words absent from the pretrained file.
pub const OOV_INIT_RADIUS: f64 = 0.1;

/// Dense word ↔ index map; index 0 is always [`UNKNOWN`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(UNKNOWN.to_string(), UNKNOWN_INDEX);
        Vocabulary {
            words: vec![UNKNOWN.to_string()],
            index,
        }
    }

    /// Rebuilds a vocabulary from its ordered word list (index 0 must be UNKNOWN).
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(UNKNOWN) {
            return Err(Error::Config(format!(
                "vocabulary must start with {UNKNOWN}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// Adds `word` if absent; returns its index and whether it was new.
    pub fn insert(&mut self, word: &str) -> (usize, bool) {
        if let Some(&i) = self.index.get(word) {
            return (i, false);
        }
        let i = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), i);
        (i, true)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of `word`, or [`UNKNOWN_INDEX`] when unseen.
    pub fn lookup(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNKNOWN_INDEX)
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// `V × d` word-vector matrix, row `i` belonging to vocabulary index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<S> {
    pub vectors: Matrix<S>,
}

impl<S: Scalar> EmbeddingTable<S> {
    pub fn new(vectors: Matrix<S>) -> Self {
        EmbeddingTable { vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn row(&self, index: usize) -> &[S] {
        self.vectors.row(index)
    }

    /// Appends rows (uniform in `[-radius, radius]`) for vocabulary entries beyond the table.
    pub fn grow_to<R: Rng + ?Sized>(&mut self, vocab: &Vocabulary, radius: f64, rng: &mut R) {
        let d = self.dim();
        let extra = vocab.len().saturating_sub(self.len());
        if extra == 0 {
            return;
        }
        let mut data = self.vectors.as_slice().to_vec();
        let fresh = Matrix::<S>::random_uniform(extra, d, radius, rng);
        data.extend_from_slice(fresh.as_slice());
        self.vectors = Matrix::from_vec(vocab.len(), d, data).expect("consistent sizes");
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-comment, non-blank lines with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

/// Lowercases and splits on spaces, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Loads `word v1 … vd` lines. The UNKNOWN row is the mean of all loaded rows.
pub fn load_word_vectors<S: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(Vocabulary, EmbeddingTable<S>)> {
    let path = path.as_ref();
    parse_word_vectors(&read_text(path)?, path)
}

pub fn parse_word_vectors<S: Scalar>(
    text: &str,
    path: &Path,
) -> Result<(Vocabulary, EmbeddingTable<S>)> {
    let mut vocab = Vocabulary::new();
    let mut dim = None;
    let mut rows: Vec<f64> = Vec::new();
    for (line_no, line) in records(text) {
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-blank record");
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, line_no, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(parse_err(path, line_no, "word has no vector components"));
        }
        if values.len() != d {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {d} components, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line_no, "non-finite vector component"));
        }
        let (_, fresh) = vocab.insert(&word.to_lowercase());
        if !fresh {
            return Err(parse_err(path, line_no, format!("duplicate word `{word}`")));
        }
        rows.extend_from_slice(&values);
    }
    let d = dim.ok_or_else(|| Error::Empty(format!("word vector file {}", path.display())))?;
    let count = vocab.len() - 1;
    let mut mean = vec![0.0; d];
    for row in rows.chunks(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let data: Vec<S> = mean.into_iter().chain(rows).map(S::lit).collect();
    let vectors = Matrix::from_vec(vocab.len(), d, data)?;
    Ok((vocab, EmbeddingTable::new(vectors)))
}

/// Mean of the rows of `words`; out-of-vocabulary words use the UNKNOWN row.
pub fn average_argument<S: Scalar>(
    words: &[String],
    table: &EmbeddingTable<S>,
    vocab: &Vocabulary,
) -> Result<Vector<S>> {
    if words.is_empty() {
        return Err(Error::Empty("event argument word list".into()));
    }
    let ids: Vec<usize> = words.iter().map(|w| vocab.lookup(w)).collect();
    average_rows(&ids, table)
}

pub(crate) fn average_rows<S: Scalar>(ids: &[usize], table: &EmbeddingTable<S>) -> Result<Vector<S>> {
    if ids.is_empty() {
        return Err(Error::Empty("event argument word list".into()));
    }
    let mut out = vec![S::zero(); table.dim()];
    for &id in ids {
        if id >= table.len() {
            return Err(Error::dim("embedding row index", table.len(), id));
        }
        for (o, &v) in out.iter_mut().zip(table.row(id)) {
            *o += v;
        }
    }
    let n = S::lit(ids.len() as f64);
    out.iter_mut().for_each(|o| *o /= n);
    Ok(Vector::from_vec(out))
}

/// `(actor, predicate, object)`, each a non-empty token list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventTuple {
    pub actor: Vec<String>,
    pub predicate: Vec<String>,
    pub object: Vec<String>,
}

impl EventTuple {
    pub fn new(actor: Vec<String>, predicate: Vec<String>, object: Vec<String>) -> Result<Self> {
        for (name, list) in [("actor", &actor), ("predicate", &predicate), ("object", &object)] {
            if list.is_empty() {
                return Err(Error::Empty(format!("event {name}")));
            }
        }
        Ok(EventTuple {
            actor,
            predicate,
            object,
        })
    }

    /// Parses `actor words|predicate words|object words`.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = text.split('|').collect();
        if parts.len() != 3 {
            return Err(format!(
                "event needs 3 pipe-separated fields, found {}",
                parts.len()
            ));
        }
        let actor = tokenize(parts[0]);
        let predicate = tokenize(parts[1]);
        let object = tokenize(parts[2]);
        EventTuple::new(actor, predicate, object).map_err(|e| e.to_string())
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.actor.iter().chain(&self.predicate).chain(&self.object)
    }
}

impl fmt::Display for EventTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}",
            self.actor.join(" "),
            self.predicate.join(" "),
            self.object.join(" ")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    /// Softmax class index: negative → 0, positive → 1.
    pub fn class_index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }
}

/// Word → ±1 polarity. Absent words are neutral (0).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentimentLexicon {
    entries: HashMap<String, i32>,
}

const STARTER_LEXICON: &str = include_str!("../data/starter_lexicon.tsv");

impl SentimentLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The small bundled lexicon (about forty common emotion words).
    pub fn starter() -> Self {
        Self::parse(STARTER_LEXICON, Path::new("<starter lexicon>"))
            .expect("bundled lexicon is well formed")
    }

    pub fn insert(&mut self, word: &str, polarity: Polarity) {
        self.entries.insert(word.to_lowercase(), polarity.sign());
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        for (line_no, line) in records(text) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected `word<TAB>+1|-1`, found {} fields", fields.len()),
                ));
            }
            let value = match fields[1].trim() {
                "+1" | "1" => 1,
                "-1" => -1,
                other => {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("polarity must be +1 or -1, found `{other}`"),
                    ))
                }
            };
            let word = tokenize(fields[0]).join(" ");
            if word.is_empty() {
                return Err(parse_err(path, line_no, "empty lexicon word"));
            }
            entries.insert(word, value);
        }
        Ok(SentimentLexicon { entries })
    }

    /// Polarity of a word or phrase: the whole phrase if listed, otherwise
    /// its head (last) token, otherwise 0.
    pub fn polarity(&self, word: &str) -> i32 {
        let norm = tokenize(word).join(" ");
        if let Some(&v) = self.entries.get(&norm) {
            return v;
        }
        norm.rsplit(' ')
            .next()
            .and_then(|head| self.entries.get(head))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sign of the summed lexicon polarities; `None` when the sum is zero.
pub fn derive_polarity(emotion_words: &[String], lexicon: &SentimentLexicon) -> Option<Polarity> {
    let sum: i64 = emotion_words
        .iter()
        .map(|w| i64::from(lexicon.polarity(w)))
        .sum();
    match sum {
        s if s > 0 => Some(Polarity::Positive),
        s if s < 0 => Some(Polarity::Negative),
        _ => None,
    }
}

/// An event with optional intent sentence and emotion labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedExample {
    pub event: EventTuple,
    pub intent: Option<Vec<String>>,
    pub emotion_words: Option<Vec<String>>,
    pub polarity: Option<Polarity>,
}

impl AnnotatedExample {
    /// An event with no annotations (plain corpus line).
    pub fn bare(event: EventTuple) -> Self {
        AnnotatedExample {
            event,
            intent: None,
            emotion_words: None,
            polarity: None,
        }
    }
}

impl fmt::Display for AnnotatedExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let intent = self
            .intent
            .as_ref()
            .map_or_else(|| "-".to_string(), |w| w.join(" "));
        let emotions = self
            .emotion_words
            .as_ref()
            .map_or_else(|| "-".to_string(), |w| w.join(","));
        write!(f, "{}\t{}\t{}", self.event, intent, emotions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardSimInstance {
    pub similar: (EventTuple, EventTuple),
    pub dissimilar: (EventTuple, EventTuple),
}

impl fmt::Display for HardSimInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.similar.0, self.similar.1, self.dissimilar.0, self.dissimilar.1
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitiveSimInstance {
    pub pair: (EventTuple, EventTuple),
    pub gold: f64,
}

impl fmt::Display for TransitiveSimInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.pair.0, self.pair.1, self.gold)
    }
}

fn split_tabs<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
    expected: usize,
    what: &str,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() > expected {
        return Err(parse_err(
            path,
            line_no,
            format!(
                "unknown field {} in {what} record (expected {expected} tab-separated fields)",
                expected + 1
            ),
        ));
    }
    if fields.len() < expected {
        return Err(parse_err(
            path,
            line_no,
            format!(
                "{what} record needs {expected} tab-separated fields, found {}",
                fields.len()
            ),
        ));
    }
    Ok(fields)
}

fn event_at(path: &Path, line_no: usize, text: &str) -> Result<EventTuple> {
    EventTuple::parse(text).map_err(|m| parse_err(path, line_no, m))
}

pub fn parse_corpus(text: &str, path: &Path) -> Result<Vec<EventTuple>> {
    records(text)
        .map(|(line_no, line)| {
            if line.contains('\t') {
                return Err(parse_err(path, line_no, "unknown field after event"));
            }
            event_at(path, line_no, line)
        })
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<EventTuple>> {
    let path = path.as_ref();
    parse_corpus(&read_text(path)?, path)
}

pub fn parse_annotations(
    text: &str,
    path: &Path,
    lexicon: &SentimentLexicon,
) -> Result<Vec<AnnotatedExample>> {
    let mut out = Vec::new();
    for (line_no, line) in records(text) {
        let fields = split_tabs(path, line_no, line, 3, "annotation")?;
        let event = event_at(path, line_no, fields[0])?;
        let intent = match fields[1].trim() {
            "-" => None,
            s => {
                let words = tokenize(s);
                if words.is_empty() {
                    return Err(parse_err(path, line_no, "empty intent (use `-` for none)"));
                }
                Some(words)
            }
        };
        let emotion_words = match fields[2].trim() {
            "-" => None,
            s => {
                let words: Vec<String> = s
                    .split(',')
                    .map(|w| tokenize(w).join(" "))
                    .filter(|w| !w.is_empty())
                    .collect();
                if words.is_empty() {
                    return Err(parse_err(path, line_no, "empty emotion list (use `-` for none)"));
                }
                Some(words)
            }
        };
        let polarity = emotion_words
            .as_deref()
            .and_then(|w| derive_polarity(w, lexicon));
        out.push(AnnotatedExample {
            event,
            intent,
            emotion_words,
            polarity,
        });
    }
    Ok(out)
}

pub fn load_annotations(
    path: impl AsRef<Path>,
    lexicon: &SentimentLexicon,
) -> Result<Vec<AnnotatedExample>> {
    let path = path.as_ref();
    parse_annotations(&read_text(path)?, path, lexicon)
}

pub fn parse_hardsim(text: &str, path: &Path) -> Result<Vec<HardSimInstance>> {
    records(text)
        .map(|(line_no, line)| {
            let f = split_tabs(path, line_no, line, 4, "hard similarity")?;
            Ok(HardSimInstance {
                similar: (event_at(path, line_no, f[0])?, event_at(path, line_no, f[1])?),
                dissimilar: (event_at(path, line_no, f[2])?, event_at(path, line_no, f[3])?),
            })
        })
        .collect()
}

pub fn load_hardsim(path: impl AsRef<Path>) -> Result<Vec<HardSimInstance>> {
    let path = path.as_ref();
    parse_hardsim(&read_text(path)?, path)
}

pub fn parse_transitive(text: &str, path: &Path) -> Result<Vec<TransitiveSimInstance>> {
    records(text)
        .map(|(line_no, line)| {
            let f = split_tabs(path, line_no, line, 3, "transitive similarity")?;
            let gold: f64 = f[2]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid gold score `{}`", f[2])))?;
            if !(1.0..=7.0).contains(&gold) {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("gold score {gold} outside [1, 7]"),
                ));
            }
            Ok(TransitiveSimInstance {
                pair: (event_at(path, line_no, f[0])?, event_at(path, line_no, f[1])?),
                gold,
            })
        })
        .collect()
}

pub fn load_transitive(path: impl AsRef<Path>) -> Result<Vec<TransitiveSimInstance>> {
    let path = path.as_ref();
    parse_transitive(&read_text(path)?, path)
}

/// Serialises records one per line in the same grammar the loaders read.
pub fn write_records<T: fmt::Display>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Adds every token the model will consume (event words and intent words)
/// to `vocab` and grows `table` with uniform rows for the new entries.
/// Returns the number of words added.
pub fn extend_vocabulary<'a, S: Scalar, R: Rng + ?Sized>(
    vocab: &mut Vocabulary,
    table: &mut EmbeddingTable<S>,
    examples: impl IntoIterator<Item = &'a AnnotatedExample>,
    rng: &mut R,
) -> usize {
    let before = vocab.len();
    for ex in examples {
        for w in ex.event.words() {
            vocab.insert(w);
        }
        for w in ex.intent.iter().flatten() {
            vocab.insert(w);
        }
    }
    table.grow_to(vocab, OOV_INIT_RADIUS, rng);
    vocab.len() - before
}

/// Path label used by in-memory parsing helpers.
pub fn memory_path(label: &str) -> PathBuf {
    PathBuf::from(label)
}
