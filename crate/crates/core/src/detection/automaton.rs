//! Multi-pattern substring matcher (Aho-Corasick).
//!
//! The trie is built with goto edges, failure links are computed
//! breadth-first, and the goto function is then completed into a dense DFA
//! over byte equivalence classes so a scan takes one table lookup per byte.
//! Bytes that occur in no pattern share class 0, which always leads back to
//! the root.

use std::collections::VecDeque;

use thiserror::Error;

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("pattern {0} is empty")]
    EmptyPattern(usize),
    #[error("automaton exceeds {} states", u32::MAX - 1)]
    TooManyStates,
}

/// One occurrence of pattern `pattern` at `text[start..end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Match {
    pub pattern: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct Automaton {
    byte_class: [u16; 256],
    stride: usize,
    trans: Vec<u32>,
    fail: Vec<u32>,
    /// Patterns ending exactly at this state.
    own: Vec<Vec<u32>>,
    /// Nearest state on the failure chain that has its own outputs.
    dict_link: Vec<u32>,
    bfs_order: Vec<u32>,
    pattern_lens: Vec<usize>,
}

impl Automaton {
    pub fn new<I, P>(patterns: I) -> Result<Self, AutomatonError>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[u8]>,
    {
        let patterns: Vec<P> = patterns.into_iter().collect();

        let mut byte_class = [0u16; 256];
        let mut stride = 1usize;
        for (i, p) in patterns.iter().enumerate() {
            let p = p.as_ref();
            if p.is_empty() {
                return Err(AutomatonError::EmptyPattern(i));
            }
            for &b in p {
                if byte_class[b as usize] == 0 {
                    byte_class[b as usize] = stride as u16;
                    stride += 1;
                }
            }
        }

        // goto trie, NONE for missing edges
        let mut trans: Vec<u32> = vec![NONE; stride];
        let mut own: Vec<Vec<u32>> = vec![Vec::new()];
        let mut pattern_lens = Vec::with_capacity(patterns.len());
        for (id, p) in patterns.iter().enumerate() {
            let p = p.as_ref();
            let mut state = ROOT;
            for &b in p {
                let slot = state as usize * stride + byte_class[b as usize] as usize;
                state = match trans[slot] {
                    NONE => {
                        let next = own.len();
                        if next >= NONE as usize - 1 {
                            return Err(AutomatonError::TooManyStates);
                        }
                        trans[slot] = next as u32;
                        trans.extend(std::iter::repeat_n(NONE, stride));
                        own.push(Vec::new());
                        next as u32
                    }
                    s => s,
                };
            }
            own[state as usize].push(id as u32);
            pattern_lens.push(p.len());
        }

        let n = own.len();
        let mut fail = vec![ROOT; n];
        let mut dict_link = vec![NONE; n];
        let mut bfs_order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();

        for slot in trans.iter_mut().take(stride) {
            match *slot {
                NONE => *slot = ROOT,
                s => queue.push_back(s),
            }
        }
        bfs_order.push(ROOT);
        while let Some(s) = queue.pop_front() {
            bfs_order.push(s);
            let base = s as usize * stride;
            for c in 0..stride {
                let target = trans[base + c];
                // fail[s] precedes s in BFS order, so its row is complete
                let via_fail = trans[fail[s as usize] as usize * stride + c];
                if target == NONE {
                    trans[base + c] = via_fail;
                } else {
                    fail[target as usize] = via_fail;
                    let f = via_fail as usize;
                    dict_link[target as usize] = if own[f].is_empty() { dict_link[f] } else { f as u32 };
                    queue.push_back(target);
                }
            }
        }
        Ok(Automaton {
            byte_class,
            stride,
            trans,
            fail,
            own,
            dict_link,
            bfs_order,
            pattern_lens,
        })
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_lens.len()
    }

    pub fn state_count(&self) -> usize {
        self.own.len()
    }

    #[inline]
    fn step(&self, state: u32, byte: u8) -> u32 {
        self.trans[state as usize * self.stride + self.byte_class[byte as usize] as usize]
    }

    /// Calls `f` for every (possibly overlapping) occurrence, in order of
    /// end position.
    pub fn for_each_match(&self, text: &[u8], mut f: impl FnMut(Match)) {
        let mut state = ROOT;
        for (i, &b) in text.iter().enumerate() {
            state = self.step(state, b);
            let mut s = state;
            while s != NONE {
                for &p in &self.own[s as usize] {
                    let len = self.pattern_lens[p as usize];
                    f(Match {
                        pattern: p as usize,
                        start: i + 1 - len,
                        end: i + 1,
                    });
                }
                s = self.dict_link[s as usize];
            }
        }
    }

    pub fn find_overlapping(&self, text: &[u8]) -> Vec<Match> {
        let mut out = Vec::new();
        self.for_each_match(text, |m| out.push(m));
        out
    }

    pub fn is_match(&self, text: &[u8]) -> bool {
        let mut state = ROOT;
        for &b in text {
            state = self.step(state, b);
            if !self.own[state as usize].is_empty() || self.dict_link[state as usize] != NONE {
                return true;
            }
        }
        false
    }

    /// For every state, the minimum of `rank(pattern)` over all patterns
    /// recognized on entering that state (`u64::MAX` when none).
    pub fn min_rank_table(&self, rank: impl Fn(usize) -> u64) -> Vec<u64> {
        let mut table = vec![u64::MAX; self.state_count()];
        for &s in &self.bfs_order {
            let s = s as usize;
            let own_min = self.own[s].iter().map(|&p| rank(p as usize)).min();
            let inherited = if s == ROOT as usize {
                u64::MAX
            } else {
                table[self.fail[s] as usize]
            };
            table[s] = own_min.unwrap_or(u64::MAX).min(inherited);
        }
        table
    }

    /// Minimum table value over every state visited while scanning `text`.
    pub fn scan_min(&self, text: &[u8], table: &[u64]) -> u64 {
        let mut state = ROOT;
        let mut best = u64::MAX;
        for &b in text {
            state = self.step(state, b);
            best = best.min(table[state as usize]);
        }
        best
    }
}
