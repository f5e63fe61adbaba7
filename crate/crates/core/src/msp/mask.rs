use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One iteration's mask pattern, bit-packed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskRow {
    words: Vec<u64>,
    len: usize,
}

impl MaskRow {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "block {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "block {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of masked blocks, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn to_bitstring(&self) -> String {
        (0..self.len)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bitstring(s: &str) -> Option<Self> {
        let mut row = Self::zeros(s.len());
        for (i, c) in s.bytes().enumerate() {
            match c {
                b'1' => row.set(i),
                b'0' => {}
                _ => return None,
            }
        }
        Some(row)
    }
}

/// Draws iteration `iteration`'s mask: each of `n_blocks` blocks is masked
/// iff its uniform draw falls below `p`.
///
/// The generator is ChaCha8 keyed by `seed` with the iteration number as its
/// stream id, so rows can be produced in any order.
pub fn sample_mask_row(seed: u64, iteration: u64, n_blocks: usize, p: f64) -> MaskRow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    let mut row = MaskRow::zeros(n_blocks);
    for j in 0..n_blocks {
        let r: f64 = rng.random();
        if r < p {
            row.set(j);
        }
    }
    row
}

/// `N x n_blocks` mask bits, one row per iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    n_blocks: usize,
    rows: Vec<MaskRow>,
}

impl MaskMatrix {
    pub fn new(n_blocks: usize) -> Self {
        Self {
            n_blocks,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: MaskRow) {
        assert_eq!(row.len(), self.n_blocks, "mask row width");
        self.rows.push(row);
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, n: usize) -> &MaskRow {
        &self.rows[n]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MaskRow> {
        self.rows.iter()
    }

    pub fn is_masked(&self, n: usize, block: usize) -> bool {
        self.rows[n].get(block)
    }

    /// Number of iterations in which `block` was masked.
    pub fn masked_count(&self, block: usize) -> usize {
        self.rows.iter().filter(|r| r.get(block)).count()
    }
}

#[derive(Serialize, Deserialize)]
struct MaskMatrixRepr {
    n_blocks: usize,
    rows: Vec<String>,
}

impl Serialize for MaskMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MaskMatrixRepr {
            n_blocks: self.n_blocks,
            rows: self.rows.iter().map(MaskRow::to_bitstring).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaskMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MaskMatrixRepr::deserialize(d)?;
        let mut m = MaskMatrix::new(repr.n_blocks);
        for (i, s) in repr.rows.iter().enumerate() {
            let row = MaskRow::from_bitstring(s)
                .ok_or_else(|| D::Error::custom(format!("mask row {i} is not a bitstring")))?;
            if row.len() != repr.n_blocks {
                return Err(D::Error::custom(format!(
                    "mask row {i} has {} bits, expected {}",
                    row.len(),
                    repr.n_blocks
                )));
            }
            m.rows.push(row);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rows_depend_only_on_seed_and_iteration() {
        let a = sample_mask_row(7, 3, 130, 0.3);
        let _ = sample_mask_row(7, 2, 130, 0.3);
        assert_eq!(a, sample_mask_row(7, 3, 130, 0.3));
        assert_ne!(a, sample_mask_row(7, 4, 130, 0.3));
        assert_ne!(a, sample_mask_row(8, 3, 130, 0.3));
    }

    #[test]
    fn bad_bitstrings_are_rejected() {
        assert!(MaskRow::from_bitstring("01x").is_none());
        let bad = r#"{"n_blocks":3,"rows":["0101"]}"#;
        assert!(serde_json::from_str::<MaskMatrix>(bad).is_err());
    }

    proptest! {
        #[test]
        fn bitstring_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let s: String = bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
            let row = MaskRow::from_bitstring(&s).unwrap();
            prop_assert_eq!(row.to_bitstring(), s);
            let ones: Vec<usize> = row.ones().collect();
            let expect: Vec<usize> = bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect();
            prop_assert_eq!(row.count_ones(), expect.len());
            prop_assert_eq!(ones, expect);
        }
    }
}
