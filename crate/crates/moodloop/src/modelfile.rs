//! N-gram model files.
//!
//! Layout: a magic line `moodloop-ngram <version>\n`, one line of JSON
//! header (order, alpha, vocabulary, number of contexts), then little-endian
//! binary count tables. Each context is written as `u8 len`, `len x u32` ids,
//! `u32 entries`, then `entries x (u32 id, u32 count)`.

use std::collections::BTreeMap;
use std::path::Path;

use moodloop_core::generate::NGramModel;
use moodloop_core::token::Token;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_atomic};

pub const MAGIC: &str = "moodloop-ngram";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    order: usize,
    alpha: f64,
    vocabulary: Vec<Token>,
    contexts: usize,
}

pub fn encode_model(model: &NGramModel) -> Result<Vec<u8>> {
    use moodloop_core::generate::GeneratorModel;
    let header = Header {
        order: model.order(),
        alpha: model.alpha(),
        vocabulary: model.vocabulary().to_vec(),
        contexts: model.counts().len(),
    };
    let mut out = format!("{MAGIC} {VERSION}\n").into_bytes();
    out.extend(serde_json::to_vec(&header)?);
    out.push(b'\n');
    for (ctx, next) in model.counts() {
        out.push(u8::try_from(ctx.len()).map_err(|_| Error::invalid("context longer than 255"))?);
        for id in ctx {
            out.extend(id.to_le_bytes());
        }
        out.extend((next.len() as u32).to_le_bytes());
        for (id, c) in next {
            out.extend(id.to_le_bytes());
            out.extend(c.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| Error::invalid("model file is truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn line(&mut self) -> Result<&[u8]> {
        let rest = &self.bytes[self.pos..];
        let n = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::invalid("model file is truncated"))?;
        self.pos += n + 1;
        Ok(&rest[..n])
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<NGramModel> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = std::str::from_utf8(c.line()?).map_err(|_| Error::invalid("not a model file"))?;
    match magic.split_once(' ') {
        Some((MAGIC, v)) if v == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(Error::invalid(format!("unsupported model version {v}"))),
        _ => return Err(Error::invalid("not a model file")),
    }
    let header: Header = serde_json::from_slice(c.line()?)?;
    let mut counts = BTreeMap::new();
    for _ in 0..header.contexts {
        let len = c.take(1)?[0] as usize;
        let ctx = (0..len).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let entries = c.u32()?;
        let mut next = BTreeMap::new();
        for _ in 0..entries {
            let id = c.u32()?;
            next.insert(id, c.u32()?);
        }
        counts.insert(ctx, next);
    }
    if c.pos != bytes.len() {
        return Err(Error::invalid("trailing bytes after count tables"));
    }
    Ok(NGramModel::from_parts(header.order, header.alpha, header.vocabulary, counts)?)
}

pub fn save_model(path: &Path, model: &NGramModel) -> Result<()> {
    write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<NGramModel> {
    decode_model(&read_bytes(path)?).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use moodloop_core::generate::train_generator;
    use moodloop_core::token::parse_tokens;

    fn model() -> NGramModel {
        let c = vec![
            parse_tokens("valence:high tempo:160 start new_measure wait:960 end").unwrap(),
            parse_tokens("valence:low tempo:70 start new_measure bass:note:s1:f0 wait:3840 end").unwrap(),
        ];
        train_generator(&c, 4, 0.01).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        assert!(m.counts().keys().any(|k| k.contains(&moodloop_core::generate::COND_SEP)));
        let bytes = encode_model(&m).unwrap();
        assert_eq!(decode_model(&bytes).unwrap(), m);
        assert!(bytes.starts_with(b"moodloop-ngram 1\n"));
    }

    #[test]
    fn rejects_bad_files() {
        let bytes = encode_model(&model()).unwrap();
        assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_model(b"something else\n{}\n").is_err());
        let mut v2 = b"moodloop-ngram 2".to_vec();
        v2.extend(&bytes[16..]);
        assert!(decode_model(&v2).unwrap_err().to_string().contains("version 2"));
    }
}
