use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const PAD: usize = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<unk>", "<s>", "</s>", "<pad>"];

pub const DEFAULT_MAX_SIZE: usize = 40_000;
pub const DEFAULT_MIN_COUNT: usize = 2;

/// Token ↔ id mapping. Ids `0..4` are the special tokens; the rest are in
/// frequency rank order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub max_size: usize,
    pub min_count: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, max_size: usize, min_count: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            max_size,
            min_count,
        })
    }

    /// Builds a vocabulary from tokenized sentences: tokens seen fewer than
    /// `min_count` times are dropped, ties in frequency are broken
    /// lexicographically, and at most `max_size` non-special tokens are kept.
    pub fn build<'a, I, S>(sentences: I, max_size: usize, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut any = false;
        for s in sentences {
            any = true;
            for t in s.as_ref() {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::Empty("build_vocab"));
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !SPECIAL_TOKENS.contains(&t))
            .collect();
        // BTreeMap iteration is lexicographic; a stable sort keeps that order among ties.
        ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
        ranked.truncate(max_size);
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.to_owned()))
            .collect();
        Self::from_tokens(tokens, max_size, min_count)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(SPECIAL_TOKENS[UNK], String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_owned()).collect()
    }

    /// One token per line in id order, specials first.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_owned).collect();
        if tokens.len() < NUM_SPECIALS
            || tokens[..NUM_SPECIALS]
                .iter()
                .zip(SPECIAL_TOKENS)
                .any(|(a, b)| a != b)
        {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "vocabulary must start with the special tokens".into(),
            });
        }
        let n = tokens.len() - NUM_SPECIALS;
        Self::from_tokens(tokens, n.max(DEFAULT_MAX_SIZE), DEFAULT_MIN_COUNT)
    }
}

/// Dense index over speaker ids, sorted lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SpeakerTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SpeakerTable {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn to_file_string(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines().filter(|l| !l.is_empty())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(s: &[&str]) -> Vec<Vec<String>> {
        s.iter()
            .map(|x| x.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn singletons_are_excluded() {
        let c = sents(&["a b c", "d e"]);
        let v = Vocabulary::build(&c, 40_000, 2).unwrap();
        assert_eq!(v.len(), NUM_SPECIALS);
        assert_eq!(v.id("a"), UNK);
    }

    #[test]
    fn truncates_to_most_frequent() {
        let c = sents(&["a a a a a b b b b c c c d d e e", "a b c d e"]);
        let v = Vocabulary::build(&c, 3, 2).unwrap();
        assert_eq!(&v.tokens()[NUM_SPECIALS..], ["a", "b", "c"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = sents(&["b a b a"]);
        let v = Vocabulary::build(&c, 1, 2).unwrap();
        assert_eq!(&v.tokens()[NUM_SPECIALS..], ["a"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c: Vec<Vec<String>> = vec![];
        assert!(Vocabulary::build(&c, 10, 2).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let c = sents(&["the cat the cat sat sat"]);
        let v = Vocabulary::build(&c, 10, 2).unwrap();
        let toks: Vec<String> = ["the", "dog", "sat"].iter().map(|s| s.to_string()).collect();
        let ids = v.encode(&toks);
        assert_eq!(v.decode(&ids), ["the", "<unk>", "sat"]);
    }

    #[test]
    fn file_round_trip_preserves_hash() {
        let c = sents(&["x y x y z z"]);
        let v = Vocabulary::build(&c, 10, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let w = Vocabulary::load(&p).unwrap();
        assert_eq!(v.tokens(), w.tokens());
        assert_eq!(v.content_hash(), w.content_hash());
    }

    #[test]
    fn speaker_table_is_sorted_and_stable() {
        let t = SpeakerTable::new(["zoe", "adam", "zoe", "mia"]);
        assert_eq!(t.names(), ["adam", "mia", "zoe"]);
        assert_eq!(t.index("mia"), Some(1));
        assert_eq!(t.index("bob"), None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("speakers.txt");
        t.save(&p).unwrap();
        assert_eq!(SpeakerTable::load(&p).unwrap(), t);
    }
}
