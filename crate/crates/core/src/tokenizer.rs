//! Byte-level BPE tokenizer: training, encoding, and persistence.
//!
//! The vocabulary always contains five special tokens at ids 0..4
//! (`<s>`, `<pad>`, `</s>`, `<unk>`, `<mask>`) followed by all 256
//! single-byte tokens, so any byte string encodes without `<unk>`. Training
//! repeatedly merges the most frequent adjacent token pair (count at least
//! `min_frequency`) until the vocabulary budget is spent or no pair
//! qualifies; equal counts are broken by lexicographic order of the pair's
//! byte contents, which makes training fully deterministic.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

pub const DEFAULT_SPECIALS: [&str; 5] = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"];
pub const BOS_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
const N_SPECIALS: usize = 5;
const BYTE_BASE: u32 = N_SPECIALS as u32;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid tokenizer parameters: {reason}")]
    InvalidConfig { reason: String },
    #[error("missing tokenizer file {path}")]
    MissingFile { path: PathBuf },
    #[error("corrupt tokenizer file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

/// A trained byte-level BPE model.
#[derive(Debug, Clone)]
pub struct TokenizerModel {
    specials: Vec<String>,
    /// Byte contents of token ids >= 5, indexed by `id - 5`.
    contents: Vec<Vec<u8>>,
    /// Byte content -> id for ids >= 5.
    vocab: HashMap<Vec<u8>, u32>,
    /// Learned merges in order: (left bytes, right bytes).
    merges: Vec<(Vec<u8>, Vec<u8>)>,
    /// (left id, right id) -> (rank, merged id).
    merge_map: HashMap<(u32, u32), (u32, u32)>,
    pub config: TokenizerConfig,
}

/// Token ids and attention masks for a batch of lines. Masks carry 1 exactly
/// on non-pad positions, and real tokens always precede padding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub input_ids: Array2<u32>,
    pub attention_masks: Array2<u8>,
}

impl EncodedBatch {
    pub fn n_rows(&self) -> usize {
        self.input_ids.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.input_ids.ncols()
    }

    /// The given rows, in order, as a new batch.
    pub fn slice_rows(&self, indices: &[usize]) -> EncodedBatch {
        let seq = self.seq_len();
        let mut ids = Array2::zeros((indices.len(), seq));
        let mut masks = Array2::zeros((indices.len(), seq));
        for (r, &i) in indices.iter().enumerate() {
            ids.row_mut(r).assign(&self.input_ids.row(i));
            masks.row_mut(r).assign(&self.attention_masks.row(i));
        }
        EncodedBatch {
            input_ids: ids,
            attention_masks: masks,
        }
    }
}

/// Corpus normalization stage. Digest corpora are already canonical, so this
/// is the identity; it exists so the pipeline stages line up one-to-one.
pub fn normalize(corpus: Vec<String>) -> Vec<String> {
    corpus
}

/// Trains a byte-level BPE model. `vocab_size` budgets the whole vocabulary
/// (specials + 256 bytes + merged tokens); `specials` must be the five
/// reserved tokens.
pub fn train_bbpe(
    corpus: &[String],
    vocab_size: usize,
    min_frequency: u64,
    specials: &[String],
) -> Result<TokenizerModel, TokenizerError> {
    if specials.len() != N_SPECIALS {
        return Err(TokenizerError::InvalidConfig {
            reason: format!("expected {N_SPECIALS} special tokens, got {}", specials.len()),
        });
    }
    if vocab_size <= 256 + N_SPECIALS {
        return Err(TokenizerError::InvalidConfig {
            reason: format!("vocab_size {vocab_size} must exceed {}", 256 + N_SPECIALS),
        });
    }
    if min_frequency == 0 {
        return Err(TokenizerError::InvalidConfig {
            reason: "min_frequency must be at least 1".into(),
        });
    }
    if corpus.iter().map(|l| l.len()).sum::<usize>() == 0 {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut model = TokenizerModel::empty(
        specials.to_vec(),
        TokenizerConfig {
            vocab_size,
            min_frequency,
        },
    );

    // Aggregate identical lines; order of first occurrence keeps everything
    // deterministic.
    let mut line_index: HashMap<&str, usize> = HashMap::new();
    let mut words: Vec<(Vec<u32>, u64)> = Vec::new();
    for line in corpus {
        match line_index.get(line.as_str()) {
            Some(&i) => words[i].1 += 1,
            None => {
                line_index.insert(line, words.len());
                let ids = line.bytes().map(|b| BYTE_BASE + b as u32).collect();
                words.push((ids, 1));
            }
        }
    }

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    for (ids, count) in &words {
        for pair in ids.windows(2) {
            *pair_counts.entry((pair[0], pair[1])).or_insert(0) += count;
        }
    }

    while model.vocab_len() < vocab_size {
        let best = pair_counts
            .iter()
            .filter(|(_, &c)| c >= min_frequency)
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    // On equal counts prefer the lexicographically smaller pair.
                    let ka = (model.token_bytes(pa.0), model.token_bytes(pa.1));
                    let kb = (model.token_bytes(pb.0), model.token_bytes(pb.1));
                    kb.cmp(&ka)
                })
            })
            .map(|(&pair, _)| pair);
        let Some((a, b)) = best else { break };

        let mut content = model.token_bytes(a).to_vec();
        content.extend_from_slice(model.token_bytes(b));
        let new_id = match model.vocab.get(&content) {
            Some(&id) => id,
            None => model.push_token(content.clone()),
        };
        model.merges.push((
            model.token_bytes(a).to_vec(),
            model.token_bytes(b).to_vec(),
        ));
        model
            .merge_map
            .insert((a, b), (model.merges.len() as u32 - 1, new_id));

        for (ids, count) in &mut words {
            if !contains_pair(ids, a, b) {
                continue;
            }
            for pair in ids.windows(2) {
                decrement(&mut pair_counts, (pair[0], pair[1]), *count);
            }
            *ids = apply_merge(ids, a, b, new_id);
            for pair in ids.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_insert(0) += *count;
            }
        }
        pair_counts.remove(&(a, b));
    }

    Ok(model)
}

fn contains_pair(ids: &[u32], a: u32, b: u32) -> bool {
    ids.windows(2).any(|w| w[0] == a && w[1] == b)
}

fn decrement(counts: &mut HashMap<(u32, u32), u64>, pair: (u32, u32), by: u64) {
    if let Some(c) = counts.get_mut(&pair) {
        *c = c.saturating_sub(by);
        if *c == 0 {
            counts.remove(&pair);
        }
    }
}

/// Replaces every non-overlapping left-to-right occurrence of `(a, b)`.
fn apply_merge(ids: &[u32], a: u32, b: u32, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == a && ids[i + 1] == b {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

impl TokenizerModel {
    fn empty(specials: Vec<String>, config: TokenizerConfig) -> Self {
        let mut contents = Vec::with_capacity(256);
        let mut vocab = HashMap::with_capacity(256);
        for b in 0u16..256 {
            let content = vec![b as u8];
            vocab.insert(content.clone(), BYTE_BASE + b as u32);
            contents.push(content);
        }
        Self {
            specials,
            contents,
            vocab,
            merges: Vec::new(),
            merge_map: HashMap::new(),
            config,
        }
    }

    fn push_token(&mut self, content: Vec<u8>) -> u32 {
        let id = BYTE_BASE + self.contents.len() as u32;
        self.vocab.insert(content.clone(), id);
        self.contents.push(content);
        id
    }

    fn token_bytes(&self, id: u32) -> &[u8] {
        &self.contents[(id - BYTE_BASE) as usize]
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    pub fn merges(&self) -> &[(Vec<u8>, Vec<u8>)] {
        &self.merges
    }

    /// Total vocabulary size: specials, byte tokens, and merged tokens.
    pub fn vocab_len(&self) -> usize {
        N_SPECIALS + self.contents.len()
    }

    /// Segments raw bytes into token ids by repeatedly applying the
    /// lowest-ranked applicable merge. Equivalent to applying the merges in
    /// learned order, each exhaustively.
    pub fn encode_ids(&self, bytes: &[u8]) -> Vec<u32> {
        let mut ids: Vec<u32> = bytes.iter().map(|&b| BYTE_BASE + b as u32).collect();
        if self.merge_map.is_empty() {
            return ids;
        }
        loop {
            let mut best: Option<(u32, u32, (u32, u32))> = None;
            for w in ids.windows(2) {
                if let Some(&(rank, new_id)) = self.merge_map.get(&(w[0], w[1])) {
                    if best.is_none_or(|(r, _, _)| rank < r) {
                        best = Some((rank, new_id, (w[0], w[1])));
                    }
                }
            }
            match best {
                None => break,
                Some((_, new_id, (a, b))) => ids = apply_merge(&ids, a, b, new_id),
            }
        }
        ids
    }

    /// Inverse of [`encode_ids`] for non-special ids; specials contribute no
    /// bytes.
    pub fn decode(&self, ids: &[u32]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            if id >= BYTE_BASE {
                out.extend_from_slice(self.token_bytes(id));
            }
        }
        out
    }

    /// Encodes one line: `<s>` + tokens + `</s>`, truncated to `max_len`
    /// (keeping the frame around the head of the line), right-padded with
    /// `<pad>`. The mask marks non-pad positions.
    pub fn encode_line(&self, line: &str, max_len: usize) -> (Vec<u32>, Vec<u8>) {
        assert!(max_len >= 2, "max_len must be at least 2");
        let mut content = self.encode_ids(line.as_bytes());
        content.truncate(max_len - 2);
        let mut ids = Vec::with_capacity(max_len);
        ids.push(BOS_ID);
        ids.extend_from_slice(&content);
        ids.push(EOS_ID);
        let real = ids.len();
        ids.resize(max_len, PAD_ID);
        let mut mask = vec![0u8; max_len];
        mask[..real].fill(1);
        (ids, mask)
    }

    /// Encodes a batch of lines into id and mask matrices.
    pub fn encode_batch(&self, lines: &[String], max_len: usize) -> EncodedBatch {
        let mut ids = Array2::from_elem((lines.len(), max_len), PAD_ID);
        let mut masks = Array2::zeros((lines.len(), max_len));
        for (r, line) in lines.iter().enumerate() {
            let (row_ids, row_mask) = self.encode_line(line, max_len);
            for (c, v) in row_ids.into_iter().enumerate() {
                ids[[r, c]] = v;
            }
            for (c, v) in row_mask.into_iter().enumerate() {
                masks[[r, c]] = v;
            }
        }
        EncodedBatch {
            input_ids: ids,
            attention_masks: masks,
        }
    }

    /// Chunked batch encoding: lines are processed `chunk_size` at a time
    /// and the per-chunk blocks concatenated along the row dimension. The
    /// result is identical to encoding the whole list at once.
    pub fn encode_chunked(
        &self,
        lines: &[String],
        chunk_size: usize,
        max_len: usize,
    ) -> Result<EncodedBatch, TokenizerError> {
        if chunk_size == 0 {
            return Err(TokenizerError::InvalidConfig {
                reason: "chunk_size must be at least 1".into(),
            });
        }
        let mut ids = Array2::from_elem((lines.len(), max_len), PAD_ID);
        let mut masks = Array2::zeros((lines.len(), max_len));
        let mut row = 0;
        for chunk in lines.chunks(chunk_size) {
            let block = self.encode_batch(chunk, max_len);
            for r in 0..block.n_rows() {
                ids.row_mut(row).assign(&block.input_ids.row(r));
                masks.row_mut(row).assign(&block.attention_masks.row(r));
                row += 1;
            }
        }
        Ok(EncodedBatch {
            input_ids: ids,
            attention_masks: masks,
        })
    }
}

// --- persistence -----------------------------------------------------------

const VOCAB_FILE: &str = "vocab.txt";
const MERGES_FILE: &str = "merges.txt";

/// Renders token bytes as a JSON string, one char per byte (U+0000..U+00FF).
fn bytes_to_json(bytes: &[u8]) -> String {
    let s: String = bytes.iter().map(|&b| b as char).collect();
    serde_json::to_string(&s).expect("string serializes")
}

fn json_to_bytes(json: &str, path: &Path) -> Result<Vec<u8>, TokenizerError> {
    let s: String = serde_json::from_str(json).map_err(|e| TokenizerError::CorruptFile {
        path: path.to_path_buf(),
        reason: format!("bad token literal {json}: {e}"),
    })?;
    s.chars()
        .map(|c| {
            u8::try_from(c as u32).map_err(|_| TokenizerError::CorruptFile {
                path: path.to_path_buf(),
                reason: format!("token literal {json} contains non-byte char"),
            })
        })
        .collect()
}

/// Saves the vocabulary and merges files into `dir`.
pub fn save_tokenizer(tok: &TokenizerModel, dir: &Path) -> Result<(), TokenizerError> {
    std::fs::create_dir_all(dir).map_err(|source| TokenizerError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let vocab_path = dir.join(VOCAB_FILE);
    let mut vocab = format!(
        "#! vocab_size={} min_frequency={}\n",
        tok.config.vocab_size, tok.config.min_frequency
    );
    for (i, name) in tok.specials.iter().enumerate() {
        vocab.push_str(&format!("{}\t{}\n", bytes_to_json(name.as_bytes()), i));
    }
    for (i, content) in tok.contents.iter().enumerate() {
        vocab.push_str(&format!(
            "{}\t{}\n",
            bytes_to_json(content),
            BYTE_BASE as usize + i
        ));
    }
    std::fs::write(&vocab_path, vocab).map_err(|source| TokenizerError::Io {
        path: vocab_path.clone(),
        source,
    })?;

    let merges_path = dir.join(MERGES_FILE);
    let mut merges = String::new();
    for (left, right) in &tok.merges {
        merges.push_str(&format!(
            "{}\t{}\n",
            bytes_to_json(left),
            bytes_to_json(right)
        ));
    }
    std::fs::write(&merges_path, merges).map_err(|source| TokenizerError::Io {
        path: merges_path.clone(),
        source,
    })?;
    Ok(())
}

/// Loads a tokenizer saved by [`save_tokenizer`], validating the id layout,
/// byte completeness, and that every merge resolves within the vocabulary.
pub fn load_tokenizer(dir: &Path) -> Result<TokenizerModel, TokenizerError> {
    let vocab_path = dir.join(VOCAB_FILE);
    let merges_path = dir.join(MERGES_FILE);
    for path in [&vocab_path, &merges_path] {
        if !path.is_file() {
            return Err(TokenizerError::MissingFile { path: path.clone() });
        }
    }
    let corrupt = |path: &Path, reason: String| TokenizerError::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };

    let vocab_text = std::fs::read_to_string(&vocab_path).map_err(|source| TokenizerError::Io {
        path: vocab_path.clone(),
        source,
    })?;
    let mut lines = vocab_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| corrupt(&vocab_path, "empty vocab file".into()))?;
    let config = parse_header(header)
        .ok_or_else(|| corrupt(&vocab_path, format!("bad header line `{header}`")))?;

    let mut entries: Vec<(Vec<u8>, u32)> = Vec::new();
    for line in lines {
        let (token, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| corrupt(&vocab_path, format!("bad vocab line `{line}`")))?;
        let id: u32 = id
            .parse()
            .map_err(|_| corrupt(&vocab_path, format!("bad id in `{line}`")))?;
        entries.push((json_to_bytes(token, &vocab_path)?, id));
    }
    entries.sort_by_key(|(_, id)| *id);
    for (i, (_, id)) in entries.iter().enumerate() {
        if *id != i as u32 {
            return Err(corrupt(
                &vocab_path,
                format!("ids are not a contiguous 0-based range (saw {id} at {i})"),
            ));
        }
    }
    if entries.len() < N_SPECIALS + 256 {
        return Err(corrupt(&vocab_path, "vocabulary smaller than bytes+specials".into()));
    }
    let specials: Vec<String> = entries[..N_SPECIALS]
        .iter()
        .map(|(bytes, _)| String::from_utf8_lossy(bytes).into_owned())
        .collect();
    let mut model = TokenizerModel::empty(specials, config);
    for (i, (content, _)) in entries[N_SPECIALS..N_SPECIALS + 256].iter().enumerate() {
        if content.as_slice() != [i as u8] {
            return Err(corrupt(
                &vocab_path,
                format!("byte token {i} out of place"),
            ));
        }
    }
    for (content, _) in &entries[N_SPECIALS + 256..] {
        model.push_token(content.clone());
    }

    let merges_text =
        std::fs::read_to_string(&merges_path).map_err(|source| TokenizerError::Io {
            path: merges_path.clone(),
            source,
        })?;
    for line in merges_text.lines() {
        let (left, right) = line
            .rsplit_once('\t')
            .ok_or_else(|| corrupt(&merges_path, format!("bad merge line `{line}`")))?;
        let left = json_to_bytes(left, &merges_path)?;
        let right = json_to_bytes(right, &merges_path)?;
        let (&lid, &rid) = match (model.vocab.get(&left), model.vocab.get(&right)) {
            (Some(l), Some(r)) => (l, r),
            _ => {
                return Err(corrupt(
                    &merges_path,
                    format!("merge side not in vocabulary: `{line}`"),
                ))
            }
        };
        let mut concat = left.clone();
        concat.extend_from_slice(&right);
        let &new_id = model.vocab.get(&concat).ok_or_else(|| {
            corrupt(
                &merges_path,
                format!("merge result not in vocabulary: `{line}`"),
            )
        })?;
        let rank = model.merges.len() as u32;
        model.merges.push((left, right));
        model.merge_map.insert((lid, rid), (rank, new_id));
    }
    Ok(model)
}

fn parse_header(line: &str) -> Option<TokenizerConfig> {
    let rest = line.strip_prefix("#!")?.trim();
    let mut vocab_size = None;
    let mut min_frequency = None;
    for part in rest.split_whitespace() {
        let (key, value) = part.split_once('=')?;
        match key {
            "vocab_size" => vocab_size = value.parse().ok(),
            "min_frequency" => min_frequency = value.parse().ok(),
            _ => return None,
        }
    }
    Some(TokenizerConfig {
        vocab_size: vocab_size?,
        min_frequency: min_frequency?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn specials() -> Vec<String> {
        DEFAULT_SPECIALS.iter().map(|s| s.to_string()).collect()
    }

    fn train(corpus: &[String], vocab_size: usize, min_freq: u64) -> TokenizerModel {
        train_bbpe(corpus, vocab_size, min_freq, &specials()).unwrap()
    }

    fn hexish_lines(n: usize, seed: u64) -> Vec<String> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let alphabet: Vec<char> = "0123456789abcdef".chars().collect();
        (0..n)
            .map(|_| {
                let words = rng.gen_range(2..8);
                (0..words)
                    .map(|_| {
                        (0..8)
                            .map(|_| alphabet[rng.gen_range(0..16)])
                            .collect::<String>()
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    #[test]
    fn normalize_is_identity() {
        assert_eq!(normalize(vec!["abc".into()]), vec!["abc".to_string()]);
        assert_eq!(normalize(Vec::<String>::new()), Vec::<String>::new());
        let line = vec!["AbC 123".to_string()];
        assert_eq!(normalize(line.clone()), line);
    }

    #[test]
    fn dominant_pair_is_learned_first() {
        let corpus: Vec<String> = vec!["aaaa".to_string(); 100];
        let tok = train(&corpus, 300, 2);
        assert_eq!(tok.merges()[0], (b"a".to_vec(), b"a".to_vec()));
    }

    #[test]
    fn unique_pairs_below_min_frequency_learn_nothing() {
        let corpus = vec!["abcdefg".to_string()];
        let tok = train(&corpus, 300, 2);
        assert!(tok.merges().is_empty());
        assert_eq!(tok.vocab_len(), 261);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = hexish_lines(50, 3);
        let a = train(&corpus, 300, 2);
        let b = train(&corpus, 300, 2);
        assert_eq!(a.merges(), b.merges());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            train_bbpe(&[], 300, 2, &specials()),
            Err(TokenizerError::EmptyCorpus)
        ));
        assert!(matches!(
            train_bbpe(&["".to_string()], 300, 2, &specials()),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let corpus = vec!["ab".to_string()];
        assert!(train_bbpe(&corpus, 261, 2, &specials()).is_err());
        assert!(train_bbpe(&corpus, 300, 0, &specials()).is_err());
        assert!(train_bbpe(&corpus, 300, 2, &specials()[..4]).is_err());
    }

    #[test]
    fn vocab_budget_is_respected() {
        let corpus = hexish_lines(100, 5);
        let tok = train(&corpus, 280, 2);
        assert_eq!(tok.vocab_len(), 280);
        assert!(tok.merges().len() >= 280 - 261);
    }

    #[test]
    fn empty_line_is_frame_plus_padding() {
        let corpus = vec!["ab".to_string(), "ab".into()];
        let tok = train(&corpus, 300, 2);
        let (ids, mask) = tok.encode_line("", 8);
        assert_eq!(ids, vec![BOS_ID, EOS_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID, PAD_ID]);
        assert_eq!(mask, vec![1, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn decode_round_trips_untruncated_lines() {
        let corpus = hexish_lines(200, 7);
        let tok = train(&corpus, 400, 2);
        for line in hexish_lines(1000, 8) {
            let (ids, _) = tok.encode_line(&line, line.len() + 2);
            assert_eq!(tok.decode(&ids), line.as_bytes());
        }
    }

    #[test]
    fn long_line_truncates_to_max_len_with_frame() {
        let corpus = vec!["zq".to_string(), "zq".into()];
        let tok = train(&corpus, 300, 2);
        let line: String = "x".repeat(737);
        let (ids, mask) = tok.encode_line(&line, 512);
        assert_eq!(ids.len(), 512);
        assert_eq!(ids[0], BOS_ID);
        assert_eq!(ids[511], EOS_ID);
        assert!(mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn chunked_encoding_matches_unchunked() {
        let corpus = hexish_lines(60, 9);
        let tok = train(&corpus, 320, 2);
        let lines = hexish_lines(101, 10);
        let whole = tok.encode_batch(&lines, 32);
        for chunk_size in [1usize, 7, 100, 5000] {
            let chunked = tok.encode_chunked(&lines, chunk_size, 32).unwrap();
            assert_eq!(chunked, whole, "chunk_size {chunk_size}");
        }
        assert_eq!(whole.n_rows(), 101);
        assert!(tok.encode_chunked(&lines, 0, 32).is_err());
    }

    #[test]
    fn zero_lines_make_an_empty_batch() {
        let corpus = vec!["ab".to_string(), "ab".into()];
        let tok = train(&corpus, 300, 2);
        let batch = tok.encode_chunked(&[], 5000, 16).unwrap();
        assert_eq!(batch.n_rows(), 0);
        assert_eq!(batch.seq_len(), 16);
    }

    #[test]
    fn save_load_round_trip_preserves_encodings() {
        let corpus = hexish_lines(150, 11);
        let tok = train(&corpus, 350, 2);
        let dir = tempfile::tempdir().unwrap();
        save_tokenizer(&tok, dir.path()).unwrap();
        let loaded = load_tokenizer(dir.path()).unwrap();
        assert_eq!(loaded.config, tok.config);
        assert_eq!(loaded.merges(), tok.merges());
        for line in hexish_lines(100, 12) {
            assert_eq!(
                loaded.encode_line(&line, 64),
                tok.encode_line(&line, 64)
            );
        }
        let merges_text =
            std::fs::read_to_string(dir.path().join(MERGES_FILE)).unwrap();
        assert_eq!(merges_text.lines().count(), tok.merges().len());
    }

    #[test]
    fn tampered_merge_line_is_corrupt() {
        let corpus = hexish_lines(150, 13);
        let tok = train(&corpus, 320, 2);
        let dir = tempfile::tempdir().unwrap();
        save_tokenizer(&tok, dir.path()).unwrap();
        let merges_path = dir.path().join(MERGES_FILE);
        let mut text = std::fs::read_to_string(&merges_path).unwrap();
        text.push_str("\"\\u00ff\\u00fe\"\t\"zz9\"\n");
        std::fs::write(&merges_path, text).unwrap();
        assert!(matches!(
            load_tokenizer(dir.path()),
            Err(TokenizerError::CorruptFile { .. })
        ));
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_tokenizer(dir.path()),
            Err(TokenizerError::MissingFile { .. })
        ));
    }

    #[test]
    fn incremental_counts_match_naive_recount_trainer() {
        // Oracle: retrain with pair counts rebuilt from scratch before every
        // merge; the learned merge sequences must match exactly.
        for seed in 0..5u64 {
            let corpus = hexish_lines(30, 100 + seed);
            let fast = train(&corpus, 290, 2);

            let mut model = TokenizerModel::empty(
                specials(),
                TokenizerConfig {
                    vocab_size: 290,
                    min_frequency: 2,
                },
            );
            let mut words: Vec<Vec<u32>> = corpus
                .iter()
                .map(|l| l.bytes().map(|b| BYTE_BASE + b as u32).collect())
                .collect();
            let mut naive_merges = Vec::new();
            while model.vocab_len() < 290 {
                let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
                for ids in &words {
                    for w in ids.windows(2) {
                        *counts.entry((w[0], w[1])).or_insert(0) += 1;
                    }
                }
                let best = counts
                    .iter()
                    .filter(|(_, &c)| c >= 2)
                    .max_by(|(pa, ca), (pb, cb)| {
                        ca.cmp(cb).then_with(|| {
                            let ka = (model.token_bytes(pa.0), model.token_bytes(pa.1));
                            let kb = (model.token_bytes(pb.0), model.token_bytes(pb.1));
                            kb.cmp(&ka)
                        })
                    })
                    .map(|(&p, _)| p);
                let Some((a, b)) = best else { break };
                let mut content = model.token_bytes(a).to_vec();
                content.extend_from_slice(model.token_bytes(b));
                let new_id = match model.vocab.get(&content) {
                    Some(&id) => id,
                    None => model.push_token(content),
                };
                naive_merges.push((
                    model.token_bytes(a).to_vec(),
                    model.token_bytes(b).to_vec(),
                ));
                for ids in &mut words {
                    *ids = apply_merge(ids, a, b, new_id);
                }
            }
            assert_eq!(fast.merges(), naive_merges.as_slice(), "seed {seed}");
        }
    }

    #[test]
    fn encode_matches_in_order_merge_application() {
        // Oracle: apply each merge exhaustively in learned order.
        let corpus = hexish_lines(120, 17);
        let tok = train(&corpus, 330, 2);
        for line in hexish_lines(50, 18) {
            let mut ids: Vec<u32> =
                line.bytes().map(|b| BYTE_BASE + b as u32).collect();
            for (rank, (left, right)) in tok.merges().iter().enumerate() {
                let a = tok.vocab[left];
                let b = tok.vocab[right];
                let (_, new_id) = tok.merge_map[&(a, b)];
                let _ = rank;
                ids = apply_merge(&ids, a, b, new_id);
            }
            assert_eq!(tok.encode_ids(line.as_bytes()), ids, "line {line}");
        }
    }

    proptest! {
        #[test]
        fn no_oov_and_masks_are_prefix_contiguous(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let corpus = hexish_lines(40, 21);
            let tok = train(&corpus, 300, 2);
            // Arbitrary raw bytes encode without <unk> and never expand.
            let ids = tok.encode_ids(&bytes);
            prop_assert!(ids.iter().all(|&id| id != UNK_ID));
            prop_assert!(ids.len() <= bytes.len());
            prop_assert_eq!(tok.decode(&ids), bytes.clone());

            let line: String = bytes.iter().map(|&b| (b % 128) as char).collect();
            let (framed, mask) = tok.encode_line(&line, 64);
            prop_assert!(framed.iter().all(|&id| id != UNK_ID));
            let first_pad = mask.iter().position(|&m| m == 0).unwrap_or(mask.len());
            prop_assert!(mask[..first_pad].iter().all(|&m| m == 1));
            prop_assert!(mask[first_pad..].iter().all(|&m| m == 0));
            for (id, m) in framed.iter().zip(&mask) {
                prop_assert_eq!(*m == 1, *id != PAD_ID);
            }
        }

        #[test]
        fn training_lines_compress(seed in 0u64..50) {
            let corpus = hexish_lines(30, seed);
            let tok = train(&corpus, 300, 1);
            for line in &corpus {
                let (ids, _) = tok.encode_line(line, line.len() + 2);
                let real = ids.iter().filter(|&&id| id != PAD_ID).count();
                prop_assert!(real <= line.len() + 2);
            }
        }
    }
}
