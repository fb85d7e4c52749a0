/// Two-component rolling checksum over a fixed-size window.
///
/// For a window `X[k..=l]` the components are
/// `a = sum(X[i]) mod 2^16` and `b = sum((l - i + 1) * X[i]) mod 2^16`,
/// combined as `a + 2^16 * b`. Sliding the window by one byte is O(1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RollingChecksum {
    a: u32,
    b: u32,
    window: u32,
}

impl RollingChecksum {
    pub fn new(window: &[u8]) -> Self {
        let len = window.len() as u32;
        let mut a = 0u32;
        let mut b = 0u32;
        for (j, &x) in window.iter().enumerate() {
            a = a.wrapping_add(x as u32);
            b = b.wrapping_add((len - j as u32).wrapping_mul(x as u32));
        }
        Self { a, b, window: len }
    }

    /// Slides the window one byte: `outgoing` leaves at the front,
    /// `incoming` enters at the back.
    #[inline]
    pub fn roll(&mut self, outgoing: u8, incoming: u8) {
        self.a = self.a.wrapping_sub(outgoing as u32).wrapping_add(incoming as u32);
        self.b = self
            .b
            .wrapping_sub(self.window.wrapping_mul(outgoing as u32))
            .wrapping_add(self.a);
    }

    #[inline]
    pub fn digest(&self) -> u32 {
        // Components are kept modulo 2^32; 2^16 divides 2^32 so masking here
        // yields the mod 2^16 values.
        (self.a & 0xffff) | (self.b << 16)
    }

    pub fn window_len(&self) -> usize {
        self.window as usize
    }
}

/// Weak checksum of a whole block.
pub fn weak_checksum(block: &[u8]) -> u32 {
    RollingChecksum::new(block).digest()
}
