use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pddl::PropId;

/// A closed-world state: the set of true propositions.
///
/// Stored as a bitset with trailing zero words trimmed, so derived equality
/// and hashing are plain set equality regardless of how the set was built.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    words: Vec<u64>,
}

impl State {
    pub fn new() -> State {
        State::default()
    }

    pub fn from_props<I: IntoIterator<Item = PropId>>(props: I) -> State {
        let mut s = State::new();
        for p in props {
            s.insert(p);
        }
        s
    }

    pub fn contains(&self, p: PropId) -> bool {
        self.words.get(p / 64).is_some_and(|w| w & (1 << (p % 64)) != 0)
    }

    pub fn insert(&mut self, p: PropId) {
        let w = p / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (p % 64);
    }

    pub fn remove(&mut self, p: PropId) {
        if let Some(w) = self.words.get_mut(p / 64) {
            *w &= !(1 << (p % 64));
        }
        self.trim();
    }

    pub fn set(&mut self, p: PropId, value: bool) {
        if value {
            self.insert(p)
        } else {
            self.remove(p)
        }
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = PropId> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i * 64 + b)
            })
        })
    }

    pub fn contains_all(&self, props: &[PropId]) -> bool {
        props.iter().all(|&p| self.contains(p))
    }

    pub fn contains_none(&self, props: &[PropId]) -> bool {
        props.iter().all(|&p| !self.contains(p))
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<PropId> for State {
    fn from_iter<I: IntoIterator<Item = PropId>>(iter: I) -> State {
        State::from_props(iter)
    }
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<State, D::Error> {
        Ok(Vec::<PropId>::deserialize(d)?.into_iter().collect())
    }
}
