//! Document selection for partial runs.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// `N` takes N documents, `a..b` takes the index range `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    Count(usize),
    Range { start: usize, end: usize },
}

impl FromStr for Slice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("invalid slice {s:?}: expected N or START..END");
        match s.split_once("..") {
            Some((a, b)) => {
                let start = a.trim().parse().map_err(|_| bad())?;
                let end = b.trim().parse().map_err(|_| bad())?;
                if start > end {
                    return Err(bad());
                }
                Ok(Slice::Range { start, end })
            }
            None => s.trim().parse().map(Slice::Count).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slice::Count(n) => write!(f, "{n}"),
            Slice::Range { start, end } => write!(f, "{start}..{end}"),
        }
    }
}

/// Indices of the selected documents, ascending.
///
/// A count takes the first N unless a seed is given, in which case it takes
/// a seeded random sample of N. Ranges ignore the seed.
pub fn select(total: usize, slice: Option<Slice>, seed: Option<u64>) -> Vec<usize> {
    match slice {
        None => (0..total).collect(),
        Some(Slice::Range { start, end }) => (start.min(total)..end.min(total)).collect(),
        Some(Slice::Count(n)) => {
            let n = n.min(total);
            match seed {
                None => (0..n).collect(),
                Some(seed) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut picked = sample(&mut rng, total, n).into_vec();
                    picked.sort_unstable();
                    picked
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_counts_and_ranges() {
        assert_eq!("20".parse(), Ok(Slice::Count(20)));
        assert_eq!("5..9".parse(), Ok(Slice::Range { start: 5, end: 9 }));
        assert!("9..5".parse::<Slice>().is_err());
        assert!("x".parse::<Slice>().is_err());
    }

    #[test]
    fn first_n_by_default() {
        assert_eq!(select(10, Some(Slice::Count(3)), None), [0, 1, 2]);
        assert_eq!(select(2, Some(Slice::Count(3)), None), [0, 1]);
        assert_eq!(select(10, Some(Slice::Range { start: 8, end: 20 }), Some(1)), [8, 9]);
        assert_eq!(select(3, None, None), [0, 1, 2]);
    }

    #[test]
    fn seeded_samples_are_reproducible() {
        let a = select(1000, Some(Slice::Count(20)), Some(42));
        assert_eq!(a, select(1000, Some(Slice::Count(20)), Some(42)));
        assert_ne!(a, select(1000, Some(Slice::Count(20)), Some(43)));
        assert_eq!(a.len(), 20);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
