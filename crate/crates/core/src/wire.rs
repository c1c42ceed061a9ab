//! Length-prefixed binary layout for the cryptographic values, plus the hex
//! helpers shared by the JSON forms.
//!
//! Every field is written as a big-endian `u32` length followed by that many
//! bytes. Group elements are fixed width (`ceil(|p|/8)`), digests raw.

use serde::{Deserialize, Deserializer};

use crate::error::CryptoError;

pub(crate) fn hex_bytes<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    use serde::de::Error;
    let s = String::deserialize(d)?;
    hex::decode(&s).map_err(D::Error::custom)
}

pub(crate) mod hex_array {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        use serde::de::Error;
        let bytes = super::hex_bytes(d)?;
        bytes
            .try_into()
            .map_err(|_| D::Error::custom(format!("expected {N} bytes")))
    }
}

/// Appends length-prefixed fields.
#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Reads fields written by [`Writer`].
#[derive(Debug)]
pub struct Reader<'a> {
    rest: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { rest: bytes }
    }

    pub fn field(&mut self) -> Result<&'a [u8], CryptoError> {
        if self.rest.len() < 4 {
            return Err(CryptoError::Decode("truncated length prefix"));
        }
        let (len, rest) = self.rest.split_at(4);
        let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
        if rest.len() < len {
            return Err(CryptoError::Decode("truncated field"));
        }
        let (field, rest) = rest.split_at(len);
        self.rest = rest;
        Ok(field)
    }

    pub fn finish(self) -> Result<(), CryptoError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(CryptoError::Decode("trailing bytes"))
        }
    }
}

/// Binary encoding of a value whose group elements are later re-validated
/// against the public parameters.
pub trait WireEncode: Sized {
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self, CryptoError>;
}
