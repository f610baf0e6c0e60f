//! Vocabulary, id-encoded sentences, one-hot rows and softmax distributions.
//!
//! Tokenization is plain whitespace splitting. Ids are assigned in order of
//! first occurrence so a corpus always maps to the same vocabulary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Deref;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Collects every whitespace token of `lines` in first-occurrence order.
    pub fn build<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::default();
        for line in lines {
            for tok in line.as_ref().split_whitespace() {
                vocab.insert(tok);
            }
        }
        vocab
    }

    /// Parses the export format: one token per line, line number = id.
    pub fn from_vocab_file(contents: &str) -> Result<Self> {
        let mut vocab = Vocab::default();
        for line in contents.lines() {
            let tok = line.trim();
            if tok.is_empty() {
                continue;
            }
            if vocab.index.contains_key(tok) {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary entry {tok:?}")));
            }
            vocab.insert(tok);
        }
        Ok(vocab)
    }

    fn insert(&mut self, tok: &str) -> usize {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(tok.to_owned());
        self.index.insert(tok.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, line: &str) -> Result<TokenSeq> {
        line.split_whitespace()
            .map(|tok| self.id(tok).ok_or_else(|| Error::UnknownToken(tok.to_owned())))
            .collect::<Result<Vec<_>>>()
            .map(TokenSeq)
    }

    pub fn decode(&self, seq: &TokenSeq) -> Result<String> {
        let words = seq
            .iter()
            .map(|&id| {
                self.token(id).ok_or(Error::IdOutOfRange {
                    id,
                    vocab_size: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }

    /// Serializes to the one-token-per-line export format.
    pub fn to_vocab_file(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            let _ = writeln!(out, "{tok}");
        }
        out
    }
}

/// Sentence as a sequence of vocabulary ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<usize>);

impl TokenSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        TokenSeq(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<usize> {
        self.0
    }

    /// Checks every id against a vocabulary size.
    pub fn check_range(&self, vocab_size: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id >= vocab_size) {
            Some(&id) => Err(Error::IdOutOfRange { id, vocab_size }),
            None => Ok(()),
        }
    }

    /// True when no id occurs twice.
    pub fn all_unique(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.0.len());
        self.0.iter().all(|id| seen.insert(*id))
    }
}

impl Deref for TokenSeq {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for TokenSeq {
    fn from(ids: Vec<usize>) -> Self {
        TokenSeq(ids)
    }
}

impl FromIterator<usize> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().collect())
    }
}

/// One-hot encoding of a sentence: row `i` is the indicator of `ids[i]`.
///
/// The ids are kept alongside the vocabulary width so n-gram matching can
/// compare ids instead of multiplying dense rows. [`OneHotSeq::matrix`]
/// materializes the dense form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotSeq {
    ids: Vec<usize>,
    vocab_size: usize,
}

impl OneHotSeq {
    pub fn new(seq: &TokenSeq, vocab_size: usize) -> Result<Self> {
        seq.check_range(vocab_size)?;
        Ok(OneHotSeq {
            ids: seq.0.clone(),
            vocab_size,
        })
    }

    /// Recovers the encoding from a dense 0/1 matrix, rejecting anything that
    /// is not exactly one-hot per row.
    pub fn from_matrix<T: Scalar>(m: ArrayView2<'_, T>) -> Result<Self> {
        let mut ids = Vec::with_capacity(m.nrows());
        for (r, row) in m.axis_iter(Axis(0)).enumerate() {
            let mut hot = None;
            for (c, &x) in row.iter().enumerate() {
                if x == T::one() {
                    if hot.replace(c).is_some() {
                        return Err(Error::ShapeMismatch(format!("row {r} has more than one 1")));
                    }
                } else if x != T::zero() {
                    return Err(Error::ShapeMismatch(format!("row {r} has a non-binary entry")));
                }
            }
            ids.push(hot.ok_or_else(|| Error::ShapeMismatch(format!("row {r} has no 1")))?);
        }
        Ok(OneHotSeq {
            ids,
            vocab_size: m.ncols(),
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn to_token_seq(&self) -> TokenSeq {
        TokenSeq(self.ids.clone())
    }

    pub fn matrix<T: Scalar>(&self) -> Array2<T> {
        let mut m = Array2::zeros((self.ids.len(), self.vocab_size));
        for (i, &id) in self.ids.iter().enumerate() {
            m[[i, id]] = T::one();
        }
        m
    }
}

pub fn to_onehot(seq: &TokenSeq, vocab_size: usize) -> Result<OneHotSeq> {
    OneHotSeq::new(seq, vocab_size)
}

/// Row-stochastic matrix of per-position word distributions together with
/// the logits it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix<T> {
    logits: Array2<T>,
    probs: Array2<T>,
}

impl<T: Scalar> DistMatrix<T> {
    /// Row-wise softmax with per-row max subtraction.
    pub fn from_logits(logits: Array2<T>) -> Result<Self> {
        check_finite(logits.view())?;
        let probs = softmax_view(logits.view());
        Ok(DistMatrix { logits, probs })
    }

    /// Replaces the logits and recomputes the probabilities, reusing the
    /// existing buffers when the shape is unchanged.
    pub(crate) fn set_logits(&mut self, logits: ArrayView2<'_, T>) -> Result<()> {
        check_finite(logits)?;
        if self.logits.dim() != logits.dim() {
            *self = DistMatrix::from_logits(logits.to_owned())?;
            return Ok(());
        }
        self.logits.assign(&logits);
        self.probs.assign(&logits);
        softmax_in_place(&mut self.probs);
        Ok(())
    }

    /// Wraps explicit probabilities. Rows must be non-negative and sum to one
    /// within 1e-9; zero entries are allowed (degenerate distributions), in
    /// which case the stored logits are `-inf` there.
    pub fn from_probs(probs: Array2<T>) -> Result<Self> {
        let tol = T::of(1e-9);
        for (r, row) in probs.axis_iter(Axis(0)).enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < T::zero() {
                    return Err(Error::NonFiniteInput { row: r, col: c });
                }
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::ShapeMismatch(format!("probability row {r} sums to {s}")));
            }
        }
        let logits = probs.mapv(|p| p.ln());
        Ok(DistMatrix { logits, probs })
    }

    /// Degenerate distribution putting all mass on `seq`.
    pub fn degenerate(seq: &TokenSeq, vocab_size: usize) -> Result<Self> {
        let probs = OneHotSeq::new(seq, vocab_size)?.matrix::<T>();
        Self::from_probs(probs)
    }

    pub fn logits(&self) -> &Array2<T> {
        &self.logits
    }

    pub fn probs(&self) -> &Array2<T> {
        &self.probs
    }

    /// Number of positions (rows).
    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.ncols()
    }

    /// True when every row is one-hot, i.e. sampling is deterministic.
    pub fn is_degenerate(&self) -> bool {
        self.probs
            .axis_iter(Axis(0))
            .all(|row| row.iter().filter(|&&p| p != T::zero()).count() == 1)
    }
}

pub fn softmax_rows<T: Scalar>(logits: Array2<T>) -> Result<DistMatrix<T>> {
    DistMatrix::from_logits(logits)
}

pub(crate) fn check_finite<T: Scalar>(m: ArrayView2<'_, T>) -> Result<()> {
    // any inf or NaN turns the sum of x * 0 into NaN
    if m.iter().fold(T::zero(), |acc, &x| acc + x * T::zero()) == T::zero() {
        return Ok(());
    }
    for ((row, col), x) in m.indexed_iter() {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput { row, col });
        }
    }
    Ok(())
}

pub(crate) fn softmax_view<T: Scalar>(logits: ArrayView2<'_, T>) -> Array2<T> {
    let mut probs = logits.to_owned();
    softmax_in_place(&mut probs);
    probs
}

fn softmax_in_place<T: Scalar>(probs: &mut Array2<T>) {
    for mut row in probs.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for z in row.iter_mut() {
            *z = (*z - max).exp();
            total = total + *z;
        }
        row.mapv_inplace(|e| e / total);
    }
}

/// Per-row index of the largest probability, ties to the lowest index.
pub fn argmax_decode<T: Scalar>(p: &DistMatrix<T>) -> TokenSeq {
    argmax_rows(p.probs().view())
}

pub(crate) fn argmax_rows<T: Scalar>(m: ArrayView2<'_, T>) -> TokenSeq {
    m.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
