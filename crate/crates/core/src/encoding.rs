//! Canonical byte encoding.
//!
//! Every structure that is hashed or signed is first flattened with
//! [`Encoder`]: integers as fixed-width big-endian, byte strings prefixed
//! by a `u32` big-endian length, fields written in declaration order.
//! Two implementations that follow these rules produce identical bytes.

/// Types with a canonical byte encoding.
pub trait Canonical {
    fn encode(&self, enc: &mut Encoder);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(&mut self, tag: u8) -> &mut Self {
        self.buf.push(tag);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        let len = u32::try_from(data.len()).expect("field longer than u32::MAX");
        self.u32(len);
        self.buf.extend_from_slice(data);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    /// Length-prefixed sequence; the closure encodes each element.
    pub fn seq<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Self, &T)) -> &mut Self {
        let len = u32::try_from(items.len()).expect("sequence longer than u32::MAX");
        self.u32(len);
        for item in items {
            f(self, item);
        }
        self
    }

    pub fn item<T: Canonical + ?Sized>(&mut self, item: &T) -> &mut Self {
        item.encode(self);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}
