//! Canonical byte encoding used for transaction arguments, block digests, and the
//! binary ledger file. Integers are big-endian; variable-length fields carry a
//! u32 length prefix. The exact layouts are documented in docs/formats.md.

use thiserror::Error;

use crate::types::{Address, DeviceId, Digest32};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {0}")]
    UnexpectedEnd(usize),
    #[error("trailing bytes after value ({0} left)")]
    TrailingBytes(usize),
    #[error("declared length {0} exceeds remaining input")]
    BadLength(u32),
    #[error("invalid utf-8 in string field")]
    BadUtf8,
    #[error("invalid enum tag {0}")]
    BadTag(u8),
}

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn put_u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// u32 length prefix followed by the bytes.
    pub fn put_bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.put_u32(bytes.len() as u32);
        self.put_raw(bytes)
    }

    pub fn put_str(&mut self, s: &str) -> &mut Self {
        self.put_bytes(s.as_bytes())
    }

    pub fn put_address(&mut self, a: &Address) -> &mut Self {
        self.put_raw(a.as_bytes())
    }

    pub fn put_device_id(&mut self, d: &DeviceId) -> &mut Self {
        self.put_raw(d.as_bytes())
    }

    pub fn put_digest(&mut self, d: &Digest32) -> &mut Self {
        self.put_raw(d.as_bytes())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.data.len() {
            return Err(CodecError::UnexpectedEnd(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let len = self.u32()?;
        if self.pos + len as usize > self.data.len() {
            return Err(CodecError::BadLength(len));
        }
        Ok(self.take(len as usize)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::BadUtf8)
    }

    pub fn address(&mut self) -> Result<Address, CodecError> {
        Ok(Address(self.take(20)?.try_into().unwrap()))
    }

    pub fn device_id(&mut self) -> Result<DeviceId, CodecError> {
        Ok(DeviceId(self.take(16)?.try_into().unwrap()))
    }

    pub fn digest(&mut self) -> Result<Digest32, CodecError> {
        Ok(Digest32(self.take(32)?.try_into().unwrap()))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    /// Fails unless every input byte was consumed.
    pub fn finish(self) -> Result<(), CodecError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes(self.remaining()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn primitive_round_trip() {
        let mut w = ByteWriter::new();
        w.put_u8(7)
            .put_u16(300)
            .put_u32(70_000)
            .put_u64(1 << 40)
            .put_bytes(b"hello")
            .put_str("world");
        let buf = w.finish();
        let mut r = ByteReader::new(&buf);
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u16().unwrap(), 300);
        assert_eq!(r.u32().unwrap(), 70_000);
        assert_eq!(r.u64().unwrap(), 1 << 40);
        assert_eq!(r.bytes().unwrap(), b"hello");
        assert_eq!(r.str().unwrap(), "world");
        r.finish().unwrap();
    }

    #[test]
    fn truncated_input_fails() {
        let mut w = ByteWriter::new();
        w.put_bytes(b"abcdef");
        let buf = w.finish();
        let mut r = ByteReader::new(&buf[..buf.len() - 1]);
        assert!(matches!(r.bytes(), Err(CodecError::BadLength(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let buf = [0u8, 1, 2];
        let mut r = ByteReader::new(&buf);
        r.u8().unwrap();
        assert_eq!(r.finish(), Err(CodecError::TrailingBytes(2)));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(payload in proptest::collection::vec(any::<u8>(), 0..512),
                            a in any::<u64>(), b in any::<u16>()) {
            let mut w = ByteWriter::new();
            w.put_u64(a).put_bytes(&payload).put_u16(b);
            let buf = w.finish();
            let mut r = ByteReader::new(&buf);
            prop_assert_eq!(r.u64().unwrap(), a);
            prop_assert_eq!(r.bytes().unwrap(), payload);
            prop_assert_eq!(r.u16().unwrap(), b);
            r.finish().unwrap();
        }
    }
}
