//! PRBS-7 data source (x^7 + x^6 + 1).

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prbs7 {
    state: u8,
}

impl Prbs7 {
    /// Only the low 7 bits of `seed` are used; zero maps to 1.
    pub fn new(seed: u32) -> Self {
        let s = (seed & 0x7F) as u8;
        Prbs7 { state: if s == 0 { 1 } else { s } }
    }

    pub fn next_bit(&mut self) -> bool {
        let b = ((self.state >> 6) ^ (self.state >> 5)) & 1;
        self.state = ((self.state << 1) | b) & 0x7F;
        b == 1
    }

    pub fn take(&mut self, n: usize) -> Vec<bool> {
        (0..n).map(|_| self.next_bit()).collect()
    }
}

pub fn prbs7(seed: u32, n: usize) -> Vec<bool> {
    Prbs7::new(seed).take(n)
}
