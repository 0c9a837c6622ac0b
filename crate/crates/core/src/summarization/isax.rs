use std::fmt;

use super::Breakpoints;

/// One variable-cardinality symbol: the leading `len` bits of a full SAX
/// symbol. `len == 0` is the wildcard covering the whole value range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ISaxSymbol {
    pub prefix: u8,
    pub len: u8,
}

impl ISaxSymbol {
    pub const WILDCARD: ISaxSymbol = ISaxSymbol { prefix: 0, len: 0 };

    pub fn new(prefix: u8, len: u8) -> Self {
        debug_assert!(len <= 8 && (len == 8 || u16::from(prefix) < (1u16 << len)));
        Self { prefix, len }
    }

    /// Whether the full-cardinality symbol `sym` (of `bits` bits) falls in
    /// this symbol's region.
    #[inline]
    pub fn covers(self, sym: u8, bits: u8) -> bool {
        self.len == 0 || (sym >> (bits - self.len)) == self.prefix
    }

    /// The bit of `sym` right after this prefix.
    #[inline]
    pub fn next_bit(self, sym: u8, bits: u8) -> u8 {
        debug_assert!(self.len < bits);
        (sym >> (bits - self.len - 1)) & 1
    }

    #[inline]
    pub fn extended(self, bit: u8) -> Self {
        Self {
            prefix: (self.prefix << 1) | (bit & 1),
            len: self.len + 1,
        }
    }

    /// The sibling obtained by flipping the last bit. Wildcards have none.
    pub fn sibling(self) -> Option<Self> {
        (self.len > 0).then_some(Self {
            prefix: self.prefix ^ 1,
            len: self.len,
        })
    }

    /// Whether `other`'s region lies inside this one.
    pub fn contains(self, other: ISaxSymbol) -> bool {
        other.len >= self.len && (self.len == 0 || (other.prefix >> (other.len - self.len)) == self.prefix)
    }
}

/// An iSAX word: one variable-cardinality symbol per segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ISaxWord {
    symbols: Vec<ISaxSymbol>,
}

impl ISaxWord {
    /// The all-wildcard word, i.e. the root region.
    pub fn wildcard(w: usize) -> Self {
        Self {
            symbols: vec![ISaxSymbol::WILDCARD; w],
        }
    }

    pub fn from_symbols(symbols: Vec<ISaxSymbol>) -> Self {
        Self { symbols }
    }

    /// The full-cardinality word of a SAX word.
    pub fn from_sax(sax: &[u8], bits: u8) -> Self {
        Self {
            symbols: sax.iter().map(|&s| ISaxSymbol::new(s, bits)).collect(),
        }
    }

    pub fn segments(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[ISaxSymbol] {
        &self.symbols
    }

    pub fn symbol(&self, seg: usize) -> ISaxSymbol {
        self.symbols[seg]
    }

    pub fn set_symbol(&mut self, seg: usize, symbol: ISaxSymbol) {
        self.symbols[seg] = symbol;
    }

    /// Whether the SAX word's region lies inside this word's region.
    pub fn covers(&self, sax: &[u8], bits: u8) -> bool {
        self.symbols.len() == sax.len()
            && self
                .symbols
                .iter()
                .zip(sax)
                .all(|(sym, &s)| sym.covers(s, bits))
    }

    pub fn contains(&self, other: &ISaxWord) -> bool {
        self.symbols.len() == other.symbols.len()
            && self
                .symbols
                .iter()
                .zip(&other.symbols)
                .all(|(a, &b)| a.contains(b))
    }

    /// Segments that can still be refined by one bit.
    pub fn promotable_segments(&self, bits: u8) -> Vec<usize> {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len < bits)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn region(&self, seg: usize, bp: &Breakpoints) -> (f64, f64) {
        let s = self.symbols[seg];
        bp.region(s.prefix, s.len)
    }

    /// Total number of refinement bits across segments.
    pub fn total_bits(&self) -> u32 {
        self.symbols.iter().map(|s| u32::from(s.len)).sum()
    }
}

impl fmt::Display for ISaxWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if s.len == 0 {
                f.write_str("*")?;
            } else {
                write!(f, "{:0width$b}", s.prefix, width = s.len as usize)?;
            }
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(parts: &[(u8, u8)]) -> ISaxWord {
        ISaxWord::from_symbols(parts.iter().map(|&(p, l)| ISaxSymbol::new(p, l)).collect())
    }

    #[test]
    fn display_matches_bit_strings() {
        assert_eq!(word(&[(1, 1), (1, 2), (0, 1)]).to_string(), "[1,01,0]");
        assert_eq!(ISaxWord::wildcard(3).to_string(), "[*,*,*]");
    }

    #[test]
    fn covers_prefix_words() {
        // [1,01,0] covers SAX [100,011,010] at b = 3
        let w = word(&[(1, 1), (1, 2), (0, 1)]);
        assert!(w.covers(&[0b100, 0b011, 0b010], 3));
        assert!(!w.covers(&[0b000, 0b011, 0b010], 3));
        assert!(ISaxWord::wildcard(3).covers(&[7, 0, 3], 3));
    }

    #[test]
    fn containment_is_prefix_order() {
        let parent = word(&[(1, 1), (1, 2), (0, 1)]);
        let child = word(&[(1, 1), (2, 3), (0, 1)]);
        assert!(parent.contains(&child));
        assert!(!child.contains(&parent));
        assert!(ISaxWord::wildcard(3).contains(&parent));
    }

    #[test]
    fn next_bit_and_sibling() {
        let s = ISaxSymbol::new(0b01, 2);
        assert_eq!(s.next_bit(0b010, 3), 0);
        assert_eq!(s.next_bit(0b011, 3), 1);
        assert_eq!(s.extended(1), ISaxSymbol::new(0b011, 3));
        assert_eq!(s.sibling(), Some(ISaxSymbol::new(0b00, 2)));
        assert_eq!(ISaxSymbol::WILDCARD.sibling(), None);
    }
}
