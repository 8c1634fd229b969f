use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slot-level token groups. Each decoding position draws only from one
/// group; all other tokens get probability zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenGroup {
    Scheduler,
    NumUes,
    Load,
    Duration,
    Eos,
    Template,
    Synonym(u8),
    Digit,
    ThroughputFlag,
    DelayFlag,
    Trend,
}

impl TokenGroup {
    fn prefix(self) -> &'static str {
        match self {
            TokenGroup::Scheduler => "sched:",
            TokenGroup::NumUes => "ues:",
            TokenGroup::Load => "load:",
            TokenGroup::Duration => "dur:",
            TokenGroup::Eos => "<eos>",
            TokenGroup::Template => "tpl:",
            TokenGroup::Synonym(0) => "syn1:",
            TokenGroup::Synonym(1) => "syn2:",
            TokenGroup::Synonym(_) => "syn3:",
            TokenGroup::Digit => "d:",
            TokenGroup::ThroughputFlag => "thr:",
            TokenGroup::DelayFlag => "dly:",
            TokenGroup::Trend => "trend:",
        }
    }

    const ALL: [TokenGroup; 13] = [
        TokenGroup::Scheduler,
        TokenGroup::NumUes,
        TokenGroup::Load,
        TokenGroup::Duration,
        TokenGroup::Eos,
        TokenGroup::Template,
        TokenGroup::Synonym(0),
        TokenGroup::Synonym(1),
        TokenGroup::Synonym(2),
        TokenGroup::Digit,
        TokenGroup::ThroughputFlag,
        TokenGroup::DelayFlag,
        TokenGroup::Trend,
    ];
}

/// Ordered symbolic vocabulary with stable integer indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    groups: HashMap<TokenGroup, Vec<usize>>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("vocabulary must contain at least one token"));
        }
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if lookup.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token {t:?}")));
            }
        }
        let mut groups = HashMap::new();
        for g in TokenGroup::ALL {
            let members: Vec<usize> = tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| match g {
                    TokenGroup::Eos => t.as_str() == g.prefix(),
                    _ => t.starts_with(g.prefix()),
                })
                .map(|(i, _)| i)
                .collect();
            groups.insert(g, members);
        }
        Ok(Self {
            tokens,
            lookup,
            groups,
        })
    }

    /// The layout shared by the action and report grammars (56 tokens).
    pub fn standard() -> Self {
        let mut t: Vec<String> = vec!["sched:RR".into(), "sched:PF".into()];
        t.extend((3..=10).map(|n| format!("ues:{n}")));
        t.extend((2..=10).map(|n| format!("load:{n}")));
        t.extend((5..=10).map(|n| format!("dur:{n}")));
        t.push("<eos>".into());
        t.extend((0..4).map(|n| format!("tpl:{n}")));
        for s in 1..=3 {
            t.extend((0..3).map(|n| format!("syn{s}:{n}")));
        }
        t.extend((0..10).map(|n| format!("d:{n}")));
        t.extend(["thr:hi", "thr:lo", "dly:hi", "dly:lo"].map(String::from));
        t.extend(["trend:up", "trend:stable", "trend:down"].map(String::from));
        Self::new(t).expect("standard vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    /// Members of `group` in vocabulary order.
    pub fn group(&self, group: TokenGroup) -> &[usize] {
        self.groups.get(&group).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Position of `index` inside `group`, if it belongs to it.
    pub fn rank_in_group(&self, group: TokenGroup, index: usize) -> Option<usize> {
        self.group(group).iter().position(|&m| m == index)
    }

    /// Numeric suffix of a value token such as `ues:8`.
    pub fn value_of(&self, index: usize) -> Option<u32> {
        self.token(index)?.split_once(':')?.1.parse().ok()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layout() {
        let v = Vocabulary::standard();
        assert_eq!(v.len(), 56);
        assert_eq!(v.group(TokenGroup::Scheduler).len(), 2);
        assert_eq!(v.group(TokenGroup::NumUes).len(), 8);
        assert_eq!(v.group(TokenGroup::Load).len(), 9);
        assert_eq!(v.group(TokenGroup::Duration).len(), 6);
        assert_eq!(v.group(TokenGroup::Digit).len(), 10);
        assert_eq!(v.group(TokenGroup::Eos).len(), 1);
        assert_eq!(v.value_of(v.index_of("ues:8").unwrap()), Some(8));
        for i in 0..v.len() {
            assert_eq!(v.index_of(v.token(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(Vocabulary::new(vec![]).is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn json_is_a_plain_token_list() {
        let v = Vocabulary::standard();
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.starts_with("[\"sched:RR\""));
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
