//! Pattern-progress automaton (KMP failure construction).

use crate::model::Pattern;

/// Deterministic automaton over progress states `0..=n`. State `s` means the
/// longest suffix of the text read so far that is a prefix of the pattern has
/// length `s`; state `n` is reached exactly when the pattern ends at the
/// current position.
#[derive(Debug, Clone)]
pub struct PatternAutomaton {
    n: usize,
    alphabet: usize,
    delta: Vec<usize>,
    failure: Vec<usize>,
}

impl PatternAutomaton {
    pub fn new(pattern: &Pattern, alphabet: usize) -> Self {
        let p = pattern.symbols();
        let n = p.len();
        // failure[i] = length of the longest proper border of p[..i]
        let mut failure = vec![0; n + 1];
        let mut k = 0;
        for i in 1..n {
            while k > 0 && p[i] != p[k] {
                k = failure[k];
            }
            if p[i] == p[k] {
                k += 1;
            }
            failure[i + 1] = k;
        }
        let mut delta = vec![0; (n + 1) * alphabet];
        for s in 0..=n {
            for a in 0..alphabet {
                delta[s * alphabet + a] = if s < n && p[s] == a {
                    s + 1
                } else if s == 0 {
                    0
                } else {
                    delta[failure[s] * alphabet + a]
                };
            }
        }
        Self {
            n,
            alphabet,
            delta,
            failure,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    #[inline]
    pub fn step(&self, state: usize, symbol: usize) -> usize {
        self.delta[state * self.alphabet + symbol]
    }

    /// Longest proper border of the full pattern.
    pub fn border(&self) -> usize {
        self.failure[self.n]
    }

    pub fn run(&self, state: usize, text: &[usize]) -> usize {
        text.iter().fold(state, |s, &a| self.step(s, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_state(p: &[usize], text: &[usize]) -> usize {
        (0..=p.len().min(text.len()))
            .rev()
            .find(|&k| text[text.len() - k..] == p[..k])
            .unwrap()
    }

    #[test]
    fn matches_naive_longest_prefix_suffix() {
        for n in 1..=5 {
            for pat in Pattern::enumerate(n, 2) {
                let aut = PatternAutomaton::new(&pat, 2);
                for len in 0..=9 {
                    for text in Pattern::enumerate(len.max(1), 2) {
                        let text = &text.symbols()[..len];
                        let mut s = 0;
                        for i in 0..len {
                            s = aut.step(s, text[i]);
                            let expect = naive_state(pat.symbols(), &text[..=i]);
                            assert_eq!(s, expect, "{pat} on {text:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn borders() {
        let aut = PatternAutomaton::new(&Pattern::parse("0101", 2).unwrap(), 2);
        assert_eq!(aut.border(), 2);
        let aut = PatternAutomaton::new(&Pattern::parse("1111", 2).unwrap(), 2);
        assert_eq!(aut.border(), 3);
        assert_eq!(aut.step(4, 1), 4);
        assert_eq!(aut.step(4, 0), 0);
        let aut = PatternAutomaton::new(&Pattern::parse("012", 3).unwrap(), 3);
        assert_eq!(aut.run(0, &[0, 1, 0, 1, 2]), 3);
    }
}
