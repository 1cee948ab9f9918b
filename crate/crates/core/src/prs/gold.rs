//! Length-31 Gold sequence generator used for NR pseudo-random sequences.

/// Output offset of the Gold generator.
const NC: usize = 1600;

/// `length` bits of the Gold sequence seeded by `c_init` (31 significant bits).
///
/// Both shift registers are packed into `u32` words with bit `i` holding
/// `x(n + i)`, so each step shifts right and inserts `x(n + 31)` at bit 30.
pub fn gold_sequence(c_init: u32, length: usize) -> Vec<u8> {
    debug_assert!(c_init < 1 << 31);
    let mut x1: u32 = 1;
    let mut x2: u32 = c_init & 0x7fff_ffff;
    let step = |x1: &mut u32, x2: &mut u32| {
        let n1 = ((*x1 >> 3) ^ *x1) & 1;
        let n2 = ((*x2 >> 3) ^ (*x2 >> 2) ^ (*x2 >> 1) ^ *x2) & 1;
        *x1 = (*x1 >> 1) | (n1 << 30);
        *x2 = (*x2 >> 1) | (n2 << 30);
    };
    for _ in 0..NC {
        step(&mut x1, &mut x2);
    }
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        out.push(((x1 ^ x2) & 1) as u8);
        step(&mut x1, &mut x2);
    }
    out
}
