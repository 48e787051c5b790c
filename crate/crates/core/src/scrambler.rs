//! Fixed-size buffer scrambling of a structured input sequence.
//!
//! The buffer is filled with the first `B` inputs. Each later input replaces
//! a uniformly drawn slot whose previous content is emitted. Once the input
//! ends, the remaining slots are drained by uniform draws without
//! replacement, so the output is always a permutation of the input.

use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ScrambleBuffer<T, R> {
    capacity: usize,
    slots: Vec<T>,
    rng: R,
}

impl<T, R: Rng> ScrambleBuffer<T, R> {
    pub fn new(capacity: usize, rng: R) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("scramble buffer capacity must be >= 1".into()));
        }
        Ok(ScrambleBuffer { capacity, slots: Vec::with_capacity(capacity), rng })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn draw(&mut self) -> usize {
        // Drawn as u64 so the sequence does not depend on the platform's
        // pointer width.
        self.rng.random_range(0..self.slots.len() as u64) as usize
    }

    /// Feeds `incoming` (or signals end of input with `None`) and returns the
    /// next output, if any.
    ///
    /// While the buffer is still filling, inputs are stored and `None` is
    /// returned. After the input ends, each call emits one remaining slot
    /// until the buffer is empty.
    pub fn next(&mut self, incoming: Option<T>) -> Option<T> {
        match incoming {
            Some(x) if self.slots.len() < self.capacity => {
                self.slots.push(x);
                None
            }
            Some(x) => {
                let j = self.draw();
                Some(core::mem::replace(&mut self.slots[j], x))
            }
            None if self.slots.is_empty() => None,
            None => {
                let j = self.draw();
                Some(self.slots.swap_remove(j))
            }
        }
    }
}

/// Iterator adapter produced by [`scramble`].
#[derive(Debug, Clone)]
pub struct Scrambled<I: Iterator, R> {
    inner: I,
    buffer: ScrambleBuffer<I::Item, R>,
    exhausted: bool,
}

impl<I: Iterator, R: Rng> Iterator for Scrambled<I, R> {
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        while !self.exhausted {
            match self.inner.next() {
                Some(x) => {
                    if let Some(out) = self.buffer.next(Some(x)) {
                        return Some(out);
                    }
                }
                None => self.exhausted = true,
            }
        }
        self.buffer.next(None)
    }
}

/// Scrambles `iter` through a buffer of `capacity` slots.
pub fn scramble<I: IntoIterator, R: Rng>(iter: I, capacity: usize, rng: R) -> Result<Scrambled<I::IntoIter, R>> {
    Ok(Scrambled { inner: iter.into_iter(), buffer: ScrambleBuffer::new(capacity, rng)?, exhausted: false })
}

/// Probability that the `k`-th output (1-based) is the `i`-th input
/// (1-based) for an unbounded input and buffer size `b`.
pub fn selection_probability(b: usize, k: usize, i: usize) -> f64 {
    if b == 0 || k == 0 || i == 0 {
        return 0.0;
    }
    let bf = b as f64;
    let keep = 1.0 - 1.0 / bf;
    if i <= b {
        libm::pow(keep, (k - 1) as f64) / bf
    } else if i < b + k {
        libm::pow(keep, (k - 1 + b - i) as f64) / bf
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_slot_passes_through() {
        let out: Vec<u32> = scramble(0..50u32, 1, ChaCha8Rng::seed_from_u64(1)).unwrap().collect();
        assert_eq!(out, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn output_is_permutation() {
        for b in [1, 2, 7, 64, 500] {
            let mut out: Vec<u32> = scramble(0..300u32, b, ChaCha8Rng::seed_from_u64(b as u64)).unwrap().collect();
            out.sort_unstable();
            assert_eq!(out, (0..300).collect::<Vec<_>>());
        }
    }

    #[test]
    fn short_input_is_drained() {
        let mut out: Vec<u32> = scramble(vec![4, 5], 10, ChaCha8Rng::seed_from_u64(0)).unwrap().collect();
        out.sort_unstable();
        assert_eq!(out, vec![4, 5]);
        assert!(ScrambleBuffer::<u32, _>::new(0, ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn closed_form_sums_to_one() {
        for b in 1..6 {
            for k in 1..8 {
                let total: f64 = (1..=b + k).map(|i| selection_probability(b, k, i)).sum();
                assert!((total - 1.0).abs() < 1e-14, "b={b} k={k}");
            }
        }
        assert_eq!(selection_probability(2, 1, 1), 0.5);
        assert!((selection_probability(4, 3, 1) - 0.140_625).abs() < 1e-15);
    }
}
