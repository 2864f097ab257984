//! Unaligned little-endian byte payloads.
//!
//! Statements write their data with a [`PayloadWriter`] and read it back in the
//! reverse sweep through a [`PayloadCursor`] bounded to exactly their slice.

use crate::error::{Error, PayloadFaultKind, Result};

#[derive(Debug, Default, Clone)]
pub struct PayloadWriter {
    bytes: Vec<u8>,
}

impl PayloadWriter {
    pub fn new() -> Self {
        PayloadWriter { bytes: Vec::new() }
    }

    pub fn with_capacity(cap: usize) -> Self {
        PayloadWriter { bytes: Vec::with_capacity(cap) }
    }

    pub fn put_u32(&mut self, value: u32) {
        self.bytes.extend_from_slice(&value.to_le_bytes());
    }

    pub fn put_f64(&mut self, value: f64) {
        self.bytes.extend_from_slice(&value.to_le_bytes());
    }

    pub fn put_f64s(&mut self, values: &[f64]) {
        self.bytes.reserve(values.len() * 8);
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.bytes.extend_from_slice(bytes);
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub(crate) fn clear(&mut self) {
        self.bytes.clear();
    }
}

/// Read cursor over one statement's payload slice.
#[derive(Debug)]
pub struct PayloadCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PayloadCursor<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        PayloadCursor { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Payload(PayloadFaultKind::Overrun {
                requested: n,
                remaining: self.remaining(),
            }));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn get_f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    pub fn get_f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or(Error::Payload(PayloadFaultKind::Overrun {
            requested: usize::MAX,
            remaining: self.remaining(),
        }))?;
        let b = self.take(bytes)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    pub fn get_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    /// Fails with an underrun if bytes are left.
    pub fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            unread => Err(Error::Payload(PayloadFaultKind::Underrun { unread })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overrun_is_reported() {
        let bytes = [1u8, 2, 3];
        let mut c = PayloadCursor::new(&bytes);
        assert_eq!(
            c.get_u32(),
            Err(Error::Payload(PayloadFaultKind::Overrun { requested: 4, remaining: 3 }))
        );
    }

    #[test]
    fn underrun_is_reported() {
        let bytes = [0u8; 12];
        let mut c = PayloadCursor::new(&bytes);
        c.get_f64().unwrap();
        assert_eq!(c.finish(), Err(Error::Payload(PayloadFaultKind::Underrun { unread: 4 })));
    }

    proptest! {
        #[test]
        fn mixed_round_trip(ids in proptest::collection::vec(any::<u32>(), 0..8),
                            reals in proptest::collection::vec(any::<f64>(), 0..8)) {
            let mut w = PayloadWriter::new();
            for &i in &ids { w.put_u32(i); }
            w.put_f64s(&reals);
            prop_assert_eq!(w.len(), ids.len() * 4 + reals.len() * 8);
            let bytes = w.into_bytes();
            let mut c = PayloadCursor::new(&bytes);
            for &i in &ids { prop_assert_eq!(c.get_u32().unwrap(), i); }
            let back = c.get_f64s(reals.len()).unwrap();
            for (a, b) in back.iter().zip(&reals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert!(c.finish().is_ok());
        }
    }
}
