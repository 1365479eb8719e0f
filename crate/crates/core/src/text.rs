//! Caption tokenization and vocabulary handling.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub fn is_reserved(id: usize) -> bool {
    id < NUM_RESERVED
}

/// Lowercases, drops punctuation (apostrophes inside words survive) and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Token ↔ id mapping with reserved ids `PAD=0, BOS=1, EOS=2, UNK=3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    fn from_tokens(words: Vec<String>, min_count: usize) -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(words).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index, min_count }
    }

    /// Total number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_RESERVED
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.tokens[NUM_RESERVED..]
    }

    /// Writes one `token<TAB>id` line per entry, reserved tokens first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(f, "{t}\t{i}")?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads a vocabulary file. The build-time `min_count` is not stored in
    /// the file and comes back as 1.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let ctx = || format!("{}:{}", path.display(), lineno + 1);
            let (tok, val) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse { context: ctx(), message: "expected token<TAB>id".into() })?;
            let val: usize = val
                .parse()
                .map_err(|e| Error::Parse { context: ctx(), message: format!("bad id: {e}") })?;
            if val != tokens.len() {
                return Err(Error::Parse { context: ctx(), message: format!("id {val} out of sequence") });
            }
            tokens.push(tok.to_owned());
        }
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED] != RESERVED {
            return Err(Error::Format(format!("{}: reserved tokens missing", path.display())));
        }
        let words = tokens.split_off(NUM_RESERVED);
        Ok(Self::from_tokens(words, 1))
    }
}

/// Builds a vocabulary keeping tokens seen at least `min_count` times,
/// ordered by descending frequency with lexicographic tie-break.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::Parameter("min_count must be >= 1".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for caption in corpus {
        for tok in tokenize(caption.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t).collect(), min_count))
}

/// `BOS w₁ … wₙ EOS` as vocabulary ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSeq(Vec<usize>);

impl TokenSeq {
    /// Wraps raw ids, checking the BOS/EOS framing and the id range.
    /// Trailing PAD after EOS is allowed.
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if ids.first() != Some(&BOS) {
            return Err(Error::Input("token sequence must start with BOS".into()));
        }
        let eos = ids
            .iter()
            .position(|&i| i == EOS)
            .ok_or_else(|| Error::Input("token sequence has no EOS".into()))?;
        if ids[eos + 1..].iter().any(|&i| i != PAD) {
            return Err(Error::Input("only PAD may follow EOS".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::Range(format!("token id {bad} >= vocabulary size {vocab_size}")));
        }
        Ok(Self(ids))
    }

    /// Frames word ids (no reserved framing tokens) with BOS/EOS.
    pub fn from_words(words: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(words);
        ids.push(EOS);
        Self(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// Ids up to and including EOS (trailing PAD removed).
    pub fn unpadded(&self) -> &[usize] {
        let end = self.0.iter().position(|&i| i == EOS).map_or(self.0.len(), |p| p + 1);
        &self.0[..end]
    }

    /// Word ids between BOS and EOS.
    pub fn words(&self) -> &[usize] {
        let u = self.unpadded();
        &u[1..u.len() - 1]
    }

    pub fn padded(&self, len: usize) -> Self {
        let mut ids = self.0.clone();
        ids.resize(len.max(ids.len()), PAD);
        Self(ids)
    }
}

pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> TokenSeq {
    let words: Vec<usize> = tokens.iter().map(|t| vocab.id(t.as_ref()).unwrap_or(UNK)).collect();
    TokenSeq::from_words(&words)
}

/// Tokenizes and encodes a caption string.
pub fn encode_caption(caption: &str, vocab: &Vocabulary) -> TokenSeq {
    encode(&tokenize(caption), vocab)
}

/// Drops reserved ids and joins the remaining tokens with single spaces.
pub fn decode(ids: &[usize], vocab: &Vocabulary) -> Result<String> {
    let mut words = Vec::new();
    for &id in ids {
        let tok = vocab
            .token(id)
            .ok_or_else(|| Error::Range(format!("token id {id} >= vocabulary size {}", vocab.len())))?;
        if !is_reserved(id) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}
