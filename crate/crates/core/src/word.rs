//! Signed-step words and their free-group manipulations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A step traversed forward (`sign = +1`) or backward (`sign = −1`).
/// Ordering is by step id, then sign with `−1 < +1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub step: usize,
    pub sign: i8,
}

impl Letter {
    pub fn pos(step: usize) -> Letter {
        Letter { step, sign: 1 }
    }

    pub fn neg(step: usize) -> Letter {
        Letter { step, sign: -1 }
    }

    pub fn inv(self) -> Letter {
        Letter { step: self.step, sign: -self.sign }
    }
}

pub type Word = Vec<Letter>;

/// Parses `"0+ 1- 0- 1+"` style test shorthand.
pub fn w(src: &str) -> Word {
    src.split_whitespace()
        .map(|t| {
            let (id, s) = t.split_at(t.len() - 1);
            Letter { step: id.parse().expect("step id"), sign: if s == "+" { 1 } else { -1 } }
        })
        .collect()
}

pub fn inverse(word: &[Letter]) -> Word {
    word.iter().rev().map(|l| l.inv()).collect()
}

/// Cancels adjacent inverse pairs until none remain.
pub fn free_reduce(word: &[Letter]) -> Word {
    let mut out: Word = Vec::with_capacity(word.len());
    for &l in word {
        if out.last() == Some(&l.inv()) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

/// Free reduction followed by cancellation across the cyclic seam.
pub fn cyclic_reduce(word: &[Letter]) -> Word {
    let r = free_reduce(word);
    let mut i = 0;
    let mut j = r.len();
    while j >= i + 2 && r[i] == r[j - 1].inv() {
        i += 1;
        j -= 1;
    }
    r[i..j].to_vec()
}

pub fn rotate(word: &[Letter], k: usize) -> Word {
    let mut v = word[k..].to_vec();
    v.extend_from_slice(&word[..k]);
    v
}

/// The lexicographically least rotation.
pub fn min_rotation(word: &[Letter]) -> Word {
    (0..word.len().max(1))
        .map(|k| if word.is_empty() { Vec::new() } else { rotate(word, k) })
        .min()
        .unwrap_or_default()
}

/// Equality of cyclic words up to rotation.
pub fn cyclic_eq(a: &[Letter], b: &[Letter]) -> bool {
    a.len() == b.len() && min_rotation(a) == min_rotation(b)
}

/// Equality of cyclic words up to rotation and inversion.
pub fn cyclic_eq_up_to_inverse(a: &[Letter], b: &[Letter]) -> bool {
    cyclic_eq(a, b) || cyclic_eq(a, &inverse(b))
}

/// Displays a word with generator names, `ε` for the empty word.
pub struct Named<'a> {
    pub word: &'a [Letter],
    pub names: &'a dyn Fn(usize) -> String,
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return write!(f, "ε");
        }
        for (i, l) in self.word.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", (self.names)(l.step))?;
            if l.sign < 0 {
                write!(f, "^-1")?;
            }
        }
        Ok(())
    }
}

/// `s0 s1^-1` rendering with default step names.
pub fn show(word: &[Letter]) -> String {
    Named { word, names: &|i| format!("s{i}") }.to_string()
}

/// Exponent sum of every step, indexed by step id.
pub fn exponent_sums(word: &[Letter], n: usize) -> Vec<i64> {
    let mut v = vec![0; n];
    for l in word {
        v[l.step] += l.sign as i64;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reductions() {
        assert!(free_reduce(&w("0+ 0-")).is_empty());
        assert_eq!(free_reduce(&w("0+ 1+ 1- 0+")), w("0+ 0+"));
        assert_eq!(free_reduce(&w("0+ 1+ 0- 1-")), w("0+ 1+ 0- 1-"));
        assert_eq!(cyclic_reduce(&w("1- 0+ 2+ 0- 1+")), w("2+"));
        assert_eq!(min_rotation(&w("1+ 0- 1- 0+")), w("0- 1- 0+ 1+"));
        assert_eq!(show(&w("0- 1+")), "s0^-1 s1");
    }

    fn word_strategy() -> impl Strategy<Value = Word> {
        prop::collection::vec((0usize..3, prop::bool::ANY), 0..24)
            .prop_map(|v| v.into_iter().map(|(s, b)| Letter { step: s, sign: if b { 1 } else { -1 } }).collect())
    }

    proptest! {
        #[test]
        fn free_reduce_is_idempotent_and_shrinks(word in word_strategy()) {
            let r = free_reduce(&word);
            prop_assert_eq!(free_reduce(&r), r.clone());
            prop_assert!(r.len() <= word.len());
            prop_assert!(r.windows(2).all(|p| p[0] != p[1].inv()));
            prop_assert_eq!(exponent_sums(&r, 3), exponent_sums(&word, 3));
        }

        #[test]
        fn inverse_cancels(word in word_strategy()) {
            let mut ww = word.clone();
            ww.extend(inverse(&word));
            prop_assert!(free_reduce(&ww).is_empty());
        }
    }
}
