//! Canonical length-prefixed binary encoding shared by tokens, plaintexts
//! and wire messages.
//!
//! Every field is written as a 4-byte big-endian length followed by the
//! field bytes. Integers are encoded as 8-byte big-endian payloads and
//! booleans as a single byte, so they are length-prefixed like any other
//! field.

use std::collections::BTreeMap;

use thiserror::Error;

/// Decoding failure for the canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("short read: needed {needed} bytes, {available} available")]
    ShortRead { needed: usize, available: usize },
    #[error("field has length {found}, expected {expected}")]
    BadFieldLength { expected: usize, found: usize },
    #[error("{0} trailing bytes after last field")]
    TrailingBytes(usize),
    #[error("invalid boolean byte {0:#04x}")]
    BadBool(u8),
    #[error("field is not valid UTF-8")]
    BadUtf8,
    #[error("map keys are not strictly ascending")]
    UnsortedMap,
}

/// Builder for canonical encodings.
#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts the buffer with a raw tag byte (not length-prefixed).
    pub fn with_tag(tag: u8) -> Self {
        Self { buf: vec![tag] }
    }

    pub fn bytes(&mut self, field: &[u8]) -> &mut Self {
        let len = u32::try_from(field.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn str(&mut self, field: &str) -> &mut Self {
        self.bytes(field.as_bytes())
    }

    pub fn u64(&mut self, value: u64) -> &mut Self {
        self.bytes(&value.to_be_bytes())
    }

    pub fn u8(&mut self, value: u8) -> &mut Self {
        self.bytes(&[value])
    }

    pub fn bool(&mut self, value: bool) -> &mut Self {
        self.u8(value as u8)
    }

    /// Writes a sorted text map as a count followed by key/value pairs.
    pub fn map(&mut self, map: &BTreeMap<String, String>) -> &mut Self {
        self.u64(map.len() as u64);
        for (k, v) in map {
            self.str(k);
            self.str(v);
        }
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

/// Cursor over a canonical encoding. Never reads past declared lengths.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], EncodingError> {
        let available = self.data.len() - self.pos;
        if n > available {
            return Err(EncodingError::ShortRead { needed: n, available });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    /// Reads one raw byte without a length prefix.
    pub fn tag(&mut self) -> Result<u8, EncodingError> {
        Ok(self.take(1)?[0])
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], EncodingError> {
        let len = self.take(4)?;
        let len = u32::from_be_bytes([len[0], len[1], len[2], len[3]]) as usize;
        self.take(len)
    }

    pub fn vec(&mut self) -> Result<Vec<u8>, EncodingError> {
        self.bytes().map(<[u8]>::to_vec)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], EncodingError> {
        let field = self.bytes()?;
        field.try_into().map_err(|_| EncodingError::BadFieldLength {
            expected: N,
            found: field.len(),
        })
    }

    pub fn string(&mut self) -> Result<String, EncodingError> {
        let field = self.bytes()?;
        std::str::from_utf8(field)
            .map(str::to_owned)
            .map_err(|_| EncodingError::BadUtf8)
    }

    pub fn u64(&mut self) -> Result<u64, EncodingError> {
        Ok(u64::from_be_bytes(self.fixed::<8>()?))
    }

    pub fn u8(&mut self) -> Result<u8, EncodingError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn bool(&mut self) -> Result<bool, EncodingError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(EncodingError::BadBool(other)),
        }
    }

    pub fn map(&mut self) -> Result<BTreeMap<String, String>, EncodingError> {
        let count = self.u64()?;
        let mut map = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..count {
            let k = self.string()?;
            let v = self.string()?;
            // Canonical form: strictly ascending keys, so every map has one encoding.
            if last.as_ref().is_some_and(|prev| *prev >= k) {
                return Err(EncodingError::UnsortedMap);
            }
            last = Some(k.clone());
            map.insert(k, v);
        }
        Ok(map)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    /// Fails if any bytes remain unread.
    pub fn finish(self) -> Result<(), EncodingError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(EncodingError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_round_trip() {
        let mut map = BTreeMap::new();
        map.insert("b".to_string(), "2".to_string());
        map.insert("a".to_string(), "1".to_string());
        let bytes = Writer::with_tag(7)
            .bytes(b"abc")
            .str("id")
            .u64(42)
            .bool(true)
            .map(&map)
            .finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.tag().unwrap(), 7);
        assert_eq!(r.bytes().unwrap(), b"abc");
        assert_eq!(r.string().unwrap(), "id");
        assert_eq!(r.u64().unwrap(), 42);
        assert!(r.bool().unwrap());
        assert_eq!(r.map().unwrap(), map);
        r.finish().unwrap();
    }

    #[test]
    fn length_prefix_is_big_endian() {
        let bytes = Writer::new().bytes(&[9; 3]).finish();
        assert_eq!(bytes, [0, 0, 0, 3, 9, 9, 9]);
    }

    #[test]
    fn declared_length_beyond_input_is_short_read() {
        let mut r = Reader::new(&[0, 0, 0, 10, 1, 2]);
        assert!(matches!(r.bytes(), Err(EncodingError::ShortRead { .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = Writer::new().u64(1).finish();
        bytes.push(0);
        let mut r = Reader::new(&bytes);
        r.u64().unwrap();
        assert_eq!(r.finish(), Err(EncodingError::TrailingBytes(1)));
    }

    #[test]
    fn unsorted_map_rejected() {
        let bytes = Writer::new().u64(2).str("b").str("x").str("a").str("y").finish();
        assert_eq!(Reader::new(&bytes).map(), Err(EncodingError::UnsortedMap));
    }
}
