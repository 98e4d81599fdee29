//! Subword vocabulary over assembly and symbolic-expression text.
//!
//! Training merges the most frequent adjacent symbol pair (BPE style);
//! encoding is greedy longest match with `##` continuation pieces.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const MARK: u32 = 5;
pub const SPECIALS: [&str; 6] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[MARK]"];
pub const CONTINUATION: &str = "##";
pub const DEFAULT_MAX_SEQ: usize = 512;
pub const DEFAULT_MAX_VOCAB: usize = 4096;
const HEADER: &str = "#strandforge-vocab v1";

const PUNCT: &[char] = &['[', ']', '(', ')', ',', '+', '*', '-', ':', '=', ';'];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("bad vocabulary file: {0}")]
    BadVocab(String),
}

/// Whitespace split, with each punctuation character its own piece.
pub fn pre_tokenize(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in line.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if PUNCT.contains(&c) {
                if start < i {
                    out.push(&word[start..i]);
                }
                out.push(&word[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

/// The form `decode` returns: pre-tokens joined by single spaces.
pub fn canonical_spacing(line: &str) -> String {
    pre_tokenize(line).join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
    pub max_seq: usize,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, max_seq: usize) -> Result<Self, TokenizerError> {
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::BadVocab(format!("duplicate token `{}`", t)));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(TokenizerError::BadVocab(format!("special `{}` is not at id {}", s, i)));
            }
        }
        Ok(Vocab { tokens, index, max_seq })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or("[UNK]")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Pieces of one pre-token, greedy longest match first. A position with
    /// no matching piece becomes [UNK] and the scan moves one character on.
    pub fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let mut pos = 0;
        while pos < chars.len() {
            let start = chars[pos].0;
            let mut found = None;
            for end in (pos + 1..=chars.len()).rev() {
                let stop = chars.get(end).map(|c| c.0).unwrap_or(word.len());
                let piece = &word[start..stop];
                let id = if pos == 0 {
                    self.id(piece)
                } else {
                    self.index.get(&format!("{}{}", CONTINUATION, piece)).copied()
                };
                if let Some(id) = id.filter(|id| !Vocab::is_special(*id)) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    pos = end;
                }
                None => {
                    out.push(UNK);
                    pos += 1;
                }
            }
        }
    }

    pub fn encode_text(&self, line: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in pre_tokenize(line) {
            self.encode_word(w, &mut out);
        }
        out
    }

    /// Joins pieces, gluing `##` continuations to their predecessor.
    pub fn decode_ids(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id);
            match t.strip_prefix(CONTINUATION) {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(t);
                }
            }
        }
        out
    }

    /// `vocab.txt` contents: a header, then one token per line (id = line - 1).
    pub fn to_text(&self) -> String {
        let mut s = format!("{} max_seq={}\n", HEADER, self.max_seq);
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| TokenizerError::BadVocab("empty file".into()))?;
        let rest = header
            .strip_prefix(HEADER)
            .ok_or_else(|| TokenizerError::BadVocab(format!("unexpected header `{}`", header)))?;
        let max_seq = rest
            .trim()
            .strip_prefix("max_seq=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TokenizerError::BadVocab("missing max_seq".into()))?;
        Vocab::from_tokens(lines.map(ToString::to_string).collect(), max_seq)
    }
}

fn symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| if i == 0 { c.to_string() } else { format!("{}{}", CONTINUATION, c) })
        .collect()
}

fn merged(a: &str, b: &str) -> String {
    let mut s = String::from(a);
    s.push_str(b.strip_prefix(CONTINUATION).unwrap_or(b));
    s
}

/// Learns a vocabulary of at most `max_vocab` entries (specials included).
/// The base alphabet is always kept, even when it alone exceeds the cap.
pub fn train_vocab<S: AsRef<str>>(corpus: &[S], max_vocab: usize) -> Result<Vocab, TokenizerError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for line in corpus {
        for w in pre_tokenize(line.as_ref()) {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut words: Vec<(Vec<String>, u64)> = counts.into_iter().map(|(w, c)| (symbols(&w), c)).collect();
    let base: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    let mut known: BTreeSet<String> = tokens.iter().cloned().collect();
    for b in base {
        if known.insert(b.clone()) {
            tokens.push(b);
        }
    }
    while tokens.len() < max_vocab {
        let mut pairs: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for p in syms.windows(2) {
                *pairs.entry((p[0].as_str(), p[1].as_str())).or_insert(0) += c;
            }
        }
        // Highest count; the map iterates in lexicographic order, so the
        // first maximum is the lexicographically smallest pair.
        let Some(((a, b), _)) = pairs.iter().fold(None, |best: Option<(&(&str, &str), u64)>, (k, v)| match best {
            Some((_, bv)) if bv >= *v => best,
            _ => Some((k, *v)),
        }) else {
            break;
        };
        let (a, b) = (a.to_string(), b.to_string());
        let m = merged(&a, &b);
        for (syms, _) in words.iter_mut() {
            let mut i = 0;
            let mut out = Vec::with_capacity(syms.len());
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    out.push(m.clone());
                    i += 2;
                } else {
                    out.push(core::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            *syms = out;
        }
        if known.insert(m.clone()) {
            tokens.push(m);
        }
    }
    Vocab::from_tokens(tokens, DEFAULT_MAX_SEQ)
}

/// One encoded model input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sample {
    pub token_ids: Vec<u32>,
    /// 0 for assembly, 1 for symbolic expression.
    pub language_ids: Vec<u32>,
    pub position_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    /// Index of the first token of each instruction that survived truncation.
    pub instr_starts: Vec<usize>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn push(&mut self, id: u32, lang: u32) {
        self.position_ids.push(self.token_ids.len() as u32);
        self.token_ids.push(id);
        self.language_ids.push(lang);
        self.attention_mask.push(1);
    }
}

/// `[CLS] asm [SEP]` or `[CLS] asm [SEP] symexpr [SEP]`, truncated to the
/// vocabulary's `max_seq` by trimming the longer segment first. With
/// `mark = Some(i)` instruction `i` is wrapped in [MARK] tokens.
pub fn encode<S: AsRef<str>>(asm: &[S], symexpr: Option<&str>, mark: Option<usize>, vocab: &Vocab) -> Sample {
    encode_within(asm, symexpr, mark, vocab, vocab.max_seq)
}

/// [`encode`] with an explicit length limit instead of `vocab.max_seq`.
pub fn encode_within<S: AsRef<str>>(asm: &[S], symexpr: Option<&str>, mark: Option<usize>, vocab: &Vocab, max_seq: usize) -> Sample {
    let mut asm_ids: Vec<u32> = Vec::new();
    let mut starts: Vec<usize> = Vec::new();
    for (i, line) in asm.iter().enumerate() {
        let marked = mark == Some(i);
        if marked {
            asm_ids.push(MARK);
        }
        starts.push(asm_ids.len());
        asm_ids.extend(vocab.encode_text(line.as_ref()));
        if marked {
            asm_ids.push(MARK);
        }
    }
    let mut sym_ids: Vec<u32> = symexpr.map(|s| vocab.encode_text(s)).unwrap_or_default();
    let fixed = if symexpr.is_some() { 3 } else { 2 };
    let budget = max_seq.saturating_sub(fixed);
    while asm_ids.len() + sym_ids.len() > budget {
        if asm_ids.len() >= sym_ids.len() {
            asm_ids.pop();
        } else {
            sym_ids.pop();
        }
    }
    let mut s = Sample::default();
    s.push(CLS, 0);
    for id in &asm_ids {
        s.push(*id, 0);
    }
    s.instr_starts = starts.into_iter().filter(|p| *p < asm_ids.len()).map(|p| p + 1).collect();
    s.push(SEP, 0);
    if symexpr.is_some() {
        for id in &sym_ids {
            s.push(*id, 1);
        }
        s.push(SEP, 1);
    }
    s
}

/// Payload text of a sample: the assembly segment and, if present, the
/// symbolic segment. Specials other than [UNK] are dropped.
pub fn decode(sample: &Sample, vocab: &Vocab) -> (String, Option<String>) {
    let mut asm = Vec::new();
    let mut sym = Vec::new();
    let mut has_sym = false;
    for (id, lang) in sample.token_ids.iter().zip(&sample.language_ids) {
        if *lang == 1 {
            has_sym = true;
        }
        if Vocab::is_special(*id) && *id != UNK {
            continue;
        }
        if *lang == 0 {
            asm.push(*id);
        } else {
            sym.push(*id);
        }
    }
    (vocab.decode_ids(&asm), has_sym.then(|| vocab.decode_ids(&sym)))
}

/// Samples padded to the longest one in the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub samples: Vec<Sample>,
    pub seq_len: usize,
}

pub fn pad_batch(samples: &[Sample]) -> Batch {
    let seq_len = samples.iter().map(Sample::len).max().unwrap_or(0);
    let samples = samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            while s.len() < seq_len {
                s.position_ids.push(s.token_ids.len() as u32);
                s.token_ids.push(PAD);
                s.language_ids.push(0);
                s.attention_mask.push(0);
            }
            s
        })
        .collect();
    Batch { samples, seq_len }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn punctuation_is_split() {
        assert_eq!(pre_tokenize("mov rax, qword ptr [rbp-168]"), vec!["mov", "rax", ",", "qword", "ptr", "[", "rbp", "-", "168", "]"]);
    }

    #[test]
    fn cmov_family_shares_a_prefix() {
        let mut corpus = Vec::new();
        for c in ["nz", "e", "ne", "l", "g", "le", "ge", "a", "b", "s", "ns"] {
            for _ in 0..5 {
                corpus.push(format!("cmov{} eax, ebx", c));
            }
        }
        corpus.push("mov eax, 5".to_string());
        let v = train_vocab(&corpus, 60).unwrap();
        let ids = v.encode_text("cmovz");
        let pieces: Vec<&str> = ids.iter().map(|i| v.token(*i)).collect();
        assert_eq!(pieces, vec!["cmov", "##z"]);
    }

    #[test]
    fn base_alphabet_only_splits_to_characters() {
        let corpus = ["mov eax"];
        let v = train_vocab(&corpus, 0).unwrap();
        let pieces: Vec<&str> = v.encode_text("mov").iter().map(|i| v.token(*i)).collect();
        assert_eq!(pieces, vec!["m", "##o", "##v"]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let corpus: [&str; 1] = ["   "];
        assert_eq!(train_vocab(&corpus, 100), Err(TokenizerError::EmptyCorpus));
    }

    #[test]
    fn layout_and_truncation() {
        let v = train_vocab(&["mov eax , 5", "rax add 1"], 200).unwrap();
        let s = encode(&["mov eax , 5"], None, None, &v);
        let pieces: Vec<&str> = s.token_ids.iter().map(|i| v.token(*i)).collect();
        assert_eq!(pieces, vec!["[CLS]", "mov", "eax", ",", "5", "[SEP]"]);
        assert!(s.language_ids.iter().all(|l| *l == 0));
        let long: Vec<String> = (0..300).map(|_| "mov eax , 5".to_string()).collect();
        let s = encode(&long, Some("rax add 1"), None, &v);
        assert_eq!(s.len(), 512);
        assert_eq!(s.token_ids[0], CLS);
        assert_eq!(*s.token_ids.last().unwrap(), SEP);
        assert_eq!(s.language_ids.iter().filter(|l| **l == 1).count(), 4);
    }

    #[test]
    fn unknown_characters_become_unk() {
        let v = train_vocab(&["mov"], 50).unwrap();
        let pieces: Vec<&str> = v.encode_text("mox").iter().map(|i| v.token(*i)).collect();
        assert_eq!(pieces, vec!["m", "##o", "[UNK]"]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = train_vocab(&["cmovz eax, ebx", "rax add 1"], 100).unwrap();
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(v.to_text().starts_with("#strandforge-vocab v1 max_seq=512\n[PAD]\n"));
    }

    #[test]
    fn marks_wrap_the_instruction() {
        let v = train_vocab(&["mov eax , 5", "add eax , 1"], 200).unwrap();
        let s = encode(&["mov eax , 5", "add eax , 1"], None, Some(1), &v);
        assert_eq!(s.instr_starts, vec![1, 6]);
        assert_eq!(s.token_ids[5], MARK);
        assert_eq!(s.token_ids[10], MARK);
    }

    #[test]
    fn padding_is_dynamic() {
        let v = train_vocab(&["mov eax , 5"], 200).unwrap();
        let a = encode(&["mov eax , 5"], None, None, &v);
        let b = encode(&["mov"], None, None, &v);
        let batch = pad_batch(&[a.clone(), b]);
        assert_eq!(batch.seq_len, a.len());
        assert_eq!(batch.samples[1].attention_mask, vec![1, 1, 1, 0, 0, 0]);
    }
}
