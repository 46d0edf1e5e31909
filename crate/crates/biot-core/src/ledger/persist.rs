//! Append-only on-disk chain format, verification, and replay.
//!
//! File layout: an 8-byte magic, a big-endian u16 format version, then one
//! length-prefixed record per block in chain order. Each record is a u32
//! big-endian byte count followed by the block body:
//!
//! ```text
//! index u64 | timestamp u64 | parentDigest 32B | txSection | digest 32B
//! ```
//!
//! where `txSection` is the same canonical byte string the block digest
//! covers. Appending new blocks never rewrites existing records, so two runs
//! that produce the same chain produce byte-identical files.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::anchoring::StorageScheme;
use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::economics::GasSchedule;
use crate::ledger::{
    block_digest, decode_tx, encode_tx, Block, LatencyModel, Ledger, LedgerError, Transaction,
};
use crate::types::Digest32;

pub const LEDGER_MAGIC: &[u8; 8] = b"BIOTLDGR";
pub const LEDGER_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a ledger file: bad magic")]
    BadMagic,
    #[error("unsupported ledger format version {0}")]
    BadVersion(u16),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("chain has no blocks")]
    EmptyChain,
    #[error("genesis block is malformed")]
    BadGenesis,
    #[error("block {index} has index out of order; expected {expected}")]
    NonConsecutiveIndex { index: u64, expected: u64 },
    #[error("block {index} does not link to its parent digest")]
    ParentMismatch { index: u64 },
    #[error("block {index} digest does not match its contents")]
    DigestMismatch { index: u64 },
    #[error("block {index} breaks the fixed production cadence")]
    IrregularCadence { index: u64 },
    #[error("replay diverged at block {index}: recorded and reproduced digests differ")]
    ReplayMismatch { index: u64 },
    #[error("replay could not re-execute the chain: {0}")]
    Replay(String),
}

impl From<LedgerError> for PersistError {
    fn from(e: LedgerError) -> Self {
        PersistError::Replay(e.to_string())
    }
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_u64(block.index)
        .put_u64(block.timestamp)
        .put_digest(&block.parent_digest);
    w.put_u32(block.transactions.len() as u32);
    for tx in &block.transactions {
        w.put_bytes(&encode_tx(tx));
    }
    w.put_digest(&block.digest);
    w.finish()
}

pub fn decode_block(bytes: &[u8]) -> Result<Block, PersistError> {
    let mut r = ByteReader::new(bytes);
    let index = r.u64()?;
    let timestamp = r.u64()?;
    let parent_digest = r.digest()?;
    let count = r.u32()?;
    let mut transactions: Vec<Transaction> = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tx_bytes = r.bytes()?;
        transactions.push(decode_tx(&tx_bytes)?);
    }
    let digest = r.digest()?;
    r.finish()?;
    Ok(Block {
        index,
        timestamp,
        parent_digest,
        transactions,
        digest,
    })
}

pub fn write_chain<W: Write>(mut out: W, blocks: &[Block]) -> io::Result<()> {
    out.write_all(LEDGER_MAGIC)?;
    out.write_all(&LEDGER_FORMAT_VERSION.to_be_bytes())?;
    for block in blocks {
        write_record(&mut out, block)?;
    }
    out.flush()
}

fn write_record<W: Write>(out: &mut W, block: &Block) -> io::Result<()> {
    let body = encode_block(block);
    out.write_all(&(body.len() as u32).to_be_bytes())?;
    out.write_all(&body)
}

pub fn read_chain<R: Read>(mut input: R) -> Result<Vec<Block>, PersistError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != LEDGER_MAGIC {
        return Err(PersistError::BadMagic);
    }
    let mut version = [0u8; 2];
    input.read_exact(&mut version)?;
    let version = u16::from_be_bytes(version);
    if version != LEDGER_FORMAT_VERSION {
        return Err(PersistError::BadVersion(version));
    }
    let mut blocks = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match input.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
        input.read_exact(&mut body)?;
        blocks.push(decode_block(&body)?);
    }
    Ok(blocks)
}

pub fn save_chain(path: &Path, blocks: &[Block]) -> Result<(), PersistError> {
    let file = File::create(path)?;
    write_chain(BufWriter::new(file), blocks)?;
    Ok(())
}

pub fn load_chain(path: &Path) -> Result<Vec<Block>, PersistError> {
    let file = File::open(path)?;
    read_chain(BufReader::new(file))
}

/// Appends blocks to an existing chain file, creating it (with header) if
/// absent. Callers are responsible for appending in chain order.
pub fn append_blocks(path: &Path, blocks: &[Block]) -> Result<(), PersistError> {
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    if fresh {
        out.write_all(LEDGER_MAGIC)?;
        out.write_all(&LEDGER_FORMAT_VERSION.to_be_bytes())?;
    }
    for block in blocks {
        write_record(&mut out, block)?;
    }
    out.flush()?;
    Ok(())
}

/// Structural verification: consecutive indexes, intact parent links,
/// digests that match contents, and a uniform production cadence.
pub fn verify_chain(blocks: &[Block]) -> Result<(), PersistError> {
    let genesis = blocks.first().ok_or(PersistError::EmptyChain)?;
    if genesis.index != 0
        || genesis.timestamp != 0
        || genesis.parent_digest != Digest32::zero()
        || !genesis.transactions.is_empty()
    {
        return Err(PersistError::BadGenesis);
    }
    let interval = blocks.get(1).map(|b| b.timestamp);
    for (i, block) in blocks.iter().enumerate() {
        if block.index != i as u64 {
            return Err(PersistError::NonConsecutiveIndex {
                index: block.index,
                expected: i as u64,
            });
        }
        if i > 0 {
            if block.parent_digest != blocks[i - 1].digest {
                return Err(PersistError::ParentMismatch { index: block.index });
            }
            let expected_ts = blocks[i - 1].timestamp + interval.unwrap();
            if block.timestamp != expected_ts {
                return Err(PersistError::IrregularCadence { index: block.index });
            }
        }
        let section = super::encode_tx_section(&block.transactions);
        let expected = block_digest(&block.parent_digest, block.index, block.timestamp, &section);
        if block.digest != expected {
            return Err(PersistError::DigestMismatch { index: block.index });
        }
    }
    Ok(())
}

/// Re-executes a recorded chain from genesis on a fresh ledger and checks
/// that every reproduced block digest matches the recording. On success the
/// returned ledger holds the replayed state and can keep producing blocks.
pub fn replay(
    blocks: &[Block],
    schedule: GasSchedule,
    metering_scheme: StorageScheme,
) -> Result<Ledger, PersistError> {
    verify_chain(blocks)?;
    let interval = blocks.get(1).map(|b| b.timestamp).unwrap_or(15);
    let latency = LatencyModel {
        block_interval: interval,
        confirmations: 1,
    };
    let ledger = Ledger::new(schedule, latency, metering_scheme);
    if ledger.head().2 != blocks[0].digest {
        return Err(PersistError::ReplayMismatch { index: 0 });
    }
    for block in &blocks[1..] {
        for tx in &block.transactions {
            ledger.create_account(tx.sender);
            ledger.submit_raw(
                tx.sender,
                tx.function.clone(),
                tx.args.clone(),
                tx.submitted_at,
            )?;
        }
        let produced = ledger.produce_block(block.timestamp)?;
        if produced.digest != block.digest {
            return Err(PersistError::ReplayMismatch { index: block.index });
        }
    }
    Ok(ledger)
}
