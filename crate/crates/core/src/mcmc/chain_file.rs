//! Columnar chain files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "JMSELCH1"
//! u64       header length H in bytes
//! H bytes   UTF-8 JSON header (ChainOutput metadata plus n_draws)
//! then, for each column in header order, n_draws f64 values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::ChainOutput;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"JMSELCH1";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    n_draws: usize,
    #[serde(flatten)]
    meta: ChainOutput,
}

pub fn write_chain<W: Write>(out: &mut W, chain: &ChainOutput) -> Result<()> {
    let header = Header {
        format_version: 1,
        n_draws: chain.n_draws(),
        meta: chain.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for col in &chain.draws {
        if col.len() != header.n_draws {
            return Err(Error::ChainFormat("ragged columns".into()));
        }
        let mut buf = Vec::with_capacity(col.len() * 8);
        for v in col {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_chain<R: Read>(input: &mut R) -> Result<ChainOutput> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::ChainFormat("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::ChainFormat("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::ChainFormat(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.format_version != 1 {
        return Err(Error::ChainFormat(format!(
            "unsupported version {}",
            header.format_version
        )));
    }
    let mut chain = header.meta;
    let n = header.n_draws;
    let mut draws = Vec::with_capacity(chain.columns.len());
    let mut buf = vec![0u8; n * 8];
    for name in &chain.columns {
        input
            .read_exact(&mut buf)
            .map_err(|_| Error::ChainFormat(format!("truncated column {name}")))?;
        draws.push(
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        );
    }
    chain.draws = draws;
    Ok(chain)
}

pub fn save_chain(path: &Path, chain: &ChainOutput) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_chain(&mut f, chain)?;
    f.flush()?;
    Ok(())
}

pub fn load_chain(path: &Path) -> Result<ChainOutput> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_chain(&mut f)
}
