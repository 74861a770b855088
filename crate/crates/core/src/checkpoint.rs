//! Binary checkpoint format.
//!
//! All integers are little-endian. Layout:
//!
//! ```text
//! magic            8 bytes   "EVEMBCKP"
//! version          u32
//! epoch            u64
//! config           u64 byte length + UTF-8 `key = value` text
//! rng seed         32 bytes
//! rng word pos     u128
//! rng stream       u64
//! vocabulary       u64 count, then per word: u64 byte length + UTF-8
//! arrays           u64 count, then per array:
//!                    u64 name length + UTF-8 name
//!                    u64 rank, rank × u64 dims
//!                    product(dims) × f64
//! digest           32 bytes  SHA-256 of everything above
//! ```
//!
//! Parameter arrays come first in model listing order, followed by the
//! Adagrad accumulators under the same names prefixed with `adagrad/`.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, ModelDims, Parameters};
use crate::params::Parameterized;
use crate::scalar::Scalar;
use crate::trainer::TrainingConfig;

pub const MAGIC: &[u8; 8] = b"EVEMBCKP";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
const ACCUMULATOR_PREFIX: &str = "adagrad/";

/// Position of the training RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub stream: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        }
    }

    pub fn to_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub config: TrainingConfig,
    pub vocab: Vocabulary,
    pub params: Parameters<S>,
    pub accumulators: Parameters<S>,
    pub rng: RngState,
    pub epoch: u64,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n > remaining {
            return Err(Error::Checkpoint(format!(
                "{what} length {n} exceeds remaining {remaining} bytes"
            )));
        }
        Ok(n as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(what)?;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("{what} is not valid UTF-8")))
    }
}

/// Names and shapes every checkpoint for `dims` over `vocab_size` words must hold.
pub fn expected_layout(vocab_size: usize, dims: ModelDims) -> Vec<(String, Vec<usize>)> {
    let template = Parameters::<f64>::zeros(vocab_size, dims);
    let params: Vec<(String, Vec<usize>)> = template
        .arrays()
        .into_iter()
        .map(|a| (a.name, a.shape))
        .collect();
    let accs = params
        .iter()
        .map(|(n, s)| (format!("{ACCUMULATOR_PREFIX}{n}"), s.clone()));
    params.clone().into_iter().chain(accs).collect()
}

impl<S: Scalar> Checkpoint<S> {
    pub fn model(&self) -> Model<S> {
        Model {
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        }
    }

    pub fn into_model(self) -> Model<S> {
        Model {
            vocab: self.vocab,
            params: self.params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u64(&mut out, self.epoch);
        put_str(&mut out, &self.config.to_text());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_u64(&mut out, self.rng.stream);
        put_u64(&mut out, self.vocab.len() as u64);
        for w in self.vocab.words() {
            put_str(&mut out, w);
        }
        let params = self.params.arrays();
        let accs = self.accumulators.arrays();
        put_u64(&mut out, (params.len() + accs.len()) as u64);
        let tagged = params
            .iter()
            .map(|a| (a.name.clone(), a))
            .chain(accs.iter().map(|a| (format!("{ACCUMULATOR_PREFIX}{}", a.name), a)));
        for (name, a) in tagged {
            put_str(&mut out, &name);
            put_u64(&mut out, a.shape.len() as u64);
            for &d in &a.shape {
                put_u64(&mut out, d as u64);
            }
            for &v in a.data {
                out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("missing magic header (not a checkpoint file)".into()));
        }
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} not supported (expected {FORMAT_VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint(
                "checksum mismatch (file truncated or corrupted)".into(),
            ));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let epoch = r.u64("epoch")?;
        let config_text = r.string("config")?;
        let config = TrainingConfig::parse(&config_text, Path::new("<checkpoint config>"))?;
        let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("32 bytes");
        let word_pos = u128::from_le_bytes(r.take(16, "rng position")?.try_into().expect("16 bytes"));
        let stream = r.u64("rng stream")?;
        let vocab_len = r.u64("vocabulary size")? as usize;
        let mut words = Vec::with_capacity(vocab_len.min(body.len()));
        for _ in 0..vocab_len {
            words.push(r.string("vocabulary word")?);
        }
        let vocab = Vocabulary::from_words(words)?;
        let dims = config.dims();
        dims.validate()?;

        let layout = expected_layout(vocab.len(), dims);
        let count = r.u64("array count")? as usize;
        let mut arrays: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(count.min(layout.len()));
        for _ in 0..count {
            let name = r.string("array name")?;
            let rank = r.u64("array rank")? as usize;
            if rank > 8 {
                return Err(Error::Checkpoint(format!("array `{name}` has implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("array dimension")? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("array too large".into()))?, &name)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name, shape, data));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after arrays",
                body.len() - r.pos
            )));
        }
        check_layout(&arrays, &layout)?;

        let mut params = Parameters::<S>::zeros(vocab.len(), dims);
        let mut accumulators = Parameters::<S>::zeros(vocab.len(), dims);
        let n_params = layout.len() / 2;
        for (dst, (_, _, data)) in params.arrays_mut().into_iter().zip(&arrays[..n_params]) {
            for (d, &v) in dst.data.iter_mut().zip(data) {
                *d = S::lit(v);
            }
        }
        for (dst, (_, _, data)) in accumulators.arrays_mut().into_iter().zip(&arrays[n_params..]) {
            for (d, &v) in dst.data.iter_mut().zip(data) {
                *d = S::lit(v);
            }
        }
        Ok(Checkpoint {
            config,
            vocab,
            params,
            accumulators,
            rng: RngState {
                seed,
                word_pos,
                stream,
            },
            epoch,
        })
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::io(path, e)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and additionally requires the arrays to match `dims`.
    pub fn load_expecting(path: impl AsRef<Path>, dims: ModelDims) -> Result<Self> {
        let ckpt = Self::load(path)?;
        let found: Vec<(String, Vec<usize>)> = ckpt
            .params
            .arrays()
            .into_iter()
            .map(|a| (a.name, a.shape))
            .collect();
        let expected = Parameters::<f64>::zeros(ckpt.vocab.len(), dims);
        for exp in expected.arrays() {
            if let Some((_, shape)) = found.iter().find(|(n, _)| *n == exp.name) {
                if *shape != exp.shape {
                    return Err(Error::ShapeMismatch {
                        name: exp.name,
                        expected: exp.shape,
                        found: shape.clone(),
                    });
                }
            }
        }
        for (exp, got) in expected.arrays().iter().zip(&found) {
            if exp.name != got.0 {
                return Err(Error::Checkpoint(format!(
                    "array `{}` expected, found `{}`",
                    exp.name, got.0
                )));
            }
        }
        if expected.arrays().len() != found.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                expected.arrays().len(),
                found.len()
            )));
        }
        Ok(ckpt)
    }
}

/// Shape mismatches are reported by name before any missing or extra array.
fn check_layout(arrays: &[(String, Vec<usize>, Vec<f64>)], layout: &[(String, Vec<usize>)]) -> Result<()> {
    for (name, shape, _) in arrays {
        if let Some((_, exp)) = layout.iter().find(|(n, _)| n == name) {
            if exp != shape {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: exp.clone(),
                    found: shape.clone(),
                });
            }
        }
    }
    for (i, (name, _)) in layout.iter().enumerate() {
        match arrays.get(i) {
            Some((found, _, _)) if found == name => {}
            Some((found, _, _)) => {
                return Err(Error::Checkpoint(format!(
                    "array {i} should be `{name}`, found `{found}`"
                )))
            }
            None => return Err(Error::Checkpoint(format!("missing array `{name}`"))),
        }
    }
    if arrays.len() > layout.len() {
        return Err(Error::Checkpoint(format!(
            "unexpected extra array `{}`",
            arrays[layout.len()].0
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_word_vectors, AnnotatedExample, EventTuple};
    use crate::trainer::Trainer;

    fn small_checkpoint(k: usize) -> Checkpoint<f64> {
        let (vocab, table) =
            parse_word_vectors::<f64>("a 0.1 0.2\nb 0.3 -0.1\nc -0.2 0.4\n", Path::new("v")).unwrap();
        let config = TrainingConfig {
            d: 2,
            k,
            n: 1,
            epochs: 1,
            beta: 0.0,
            gamma: 0.0,
            ..TrainingConfig::default()
        };
        let corpus = vec![EventTuple::parse("a|b|c").unwrap()];
        let mut t = Trainer::new(config, vocab, table, corpus, Vec::<AnnotatedExample>::new()).unwrap();
        t.run_epoch().unwrap();
        t.checkpoint()
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = small_checkpoint(4);
        let bytes = c.to_bytes();
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = small_checkpoint(4).to_bytes();
        for cut in [1, 9, 40, bytes.len() - 20] {
            assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - cut]).is_err());
        }
    }

    #[test]
    fn flipped_byte_is_rejected() {
        let mut bytes = small_checkpoint(4).to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = Checkpoint::<f64>::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = small_checkpoint(4).to_bytes();
        bytes[8] = 9;
        let err = Checkpoint::<f64>::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn header_shape_mismatch_names_array() {
        // Rewrite the config header to claim k = 6 while arrays hold k = 4.
        let c = small_checkpoint(4);
        let mut lie = c.clone();
        lie.config.k = 6;
        let mut body = Vec::new();
        body.extend_from_slice(MAGIC);
        body.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u64(&mut body, lie.epoch);
        put_str(&mut body, &lie.config.to_text());
        let honest = c.to_bytes();
        let skip = 12 + 8 + 8 + c.config.to_text().len();
        body.extend_from_slice(&honest[skip..honest.len() - DIGEST_LEN]);
        let digest = Sha256::digest(&body);
        body.extend_from_slice(digest.as_slice());
        match Checkpoint::<f64>::from_bytes(&body).unwrap_err() {
            Error::ShapeMismatch { name, .. } => assert!(name.starts_with("composer.layer1"), "{name}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rng_state_resumes_stream() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: u64 = rng.gen();
        let state = RngState::capture(&rng);
        let mut restored = state.to_rng();
        assert_eq!(rng.gen::<u64>(), restored.gen::<u64>());
    }
}
