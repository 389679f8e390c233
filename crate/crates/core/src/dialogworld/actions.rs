use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::WorldSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActType {
    Inform,
    Request,
    Offer,
    Book,
    NoOffer,
    Bye,
}

impl ActType {
    pub fn as_str(self) -> &'static str {
        match self {
            ActType::Inform => "inform",
            ActType::Request => "request",
            ActType::Offer => "offer",
            ActType::Book => "book",
            ActType::NoOffer => "nooffer",
            ActType::Bye => "bye",
        }
    }
}

/// A (domain, act type, slot) triple. `domain == None` is the general domain
/// (only `bye`); `slot` indexes informable slots first, then requestable ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomicAction {
    pub domain: Option<usize>,
    pub act: ActType,
    pub slot: Option<usize>,
}

/// Bijective index over every valid atomic action of a schema.
///
/// Per domain, in order: `inform` for every slot, `request` for every
/// informable slot, then `offer`, `book`, `nooffer`. The single
/// `general-bye` action comes last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVocab {
    actions: Vec<AtomicAction>,
    names: Vec<String>,
    domain_base: Vec<usize>,
    informable: Vec<usize>,
    slots: Vec<usize>,
}

impl ActionVocab {
    pub fn new(schema: &WorldSchema) -> Self {
        let mut actions = Vec::new();
        let mut names = Vec::new();
        let mut domain_base = Vec::new();
        let mut informable = Vec::new();
        let mut slots = Vec::new();
        for (d, dom) in schema.domains.iter().enumerate() {
            domain_base.push(actions.len());
            informable.push(dom.informable.len());
            slots.push(dom.num_slots());
            let mut add = |act: ActType, slot: Option<usize>| {
                actions.push(AtomicAction {
                    domain: Some(d),
                    act,
                    slot,
                });
                names.push(match slot {
                    Some(s) => format!("{}-{}-{}", dom.name, act.as_str(), dom.slot_name(s)),
                    None => format!("{}-{}", dom.name, act.as_str()),
                });
            };
            for s in 0..dom.num_slots() {
                add(ActType::Inform, Some(s));
            }
            for s in 0..dom.informable.len() {
                add(ActType::Request, Some(s));
            }
            add(ActType::Offer, None);
            add(ActType::Book, None);
            add(ActType::NoOffer, None);
        }
        actions.push(AtomicAction {
            domain: None,
            act: ActType::Bye,
            slot: None,
        });
        names.push("general-bye".to_string());
        ActionVocab {
            actions,
            names,
            domain_base,
            informable,
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> AtomicAction {
        self.actions[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, action: &AtomicAction) -> Option<usize> {
        match action.domain {
            None => (action.act == ActType::Bye && action.slot.is_none()).then(|| self.bye()),
            Some(d) if d < self.domain_base.len() => {
                let idx = match (action.act, action.slot) {
                    (ActType::Inform, Some(s)) if s < self.slots[d] => self.inform(d, s),
                    (ActType::Request, Some(s)) if s < self.informable[d] => self.request(d, s),
                    (ActType::Offer, None) => self.offer(d),
                    (ActType::Book, None) => self.book(d),
                    (ActType::NoOffer, None) => self.nooffer(d),
                    _ => return None,
                };
                Some(idx)
            }
            Some(_) => None,
        }
    }

    pub fn inform(&self, domain: usize, slot: usize) -> usize {
        debug_assert!(slot < self.slots[domain]);
        self.domain_base[domain] + slot
    }

    pub fn request(&self, domain: usize, informable_slot: usize) -> usize {
        debug_assert!(informable_slot < self.informable[domain]);
        self.domain_base[domain] + self.slots[domain] + informable_slot
    }

    pub fn offer(&self, domain: usize) -> usize {
        self.domain_base[domain] + self.slots[domain] + self.informable[domain]
    }

    pub fn book(&self, domain: usize) -> usize {
        self.offer(domain) + 1
    }

    pub fn nooffer(&self, domain: usize) -> usize {
        self.offer(domain) + 2
    }

    pub fn bye(&self) -> usize {
        self.actions.len() - 1
    }

    pub fn describe(&self, set: &ActionSet) -> Vec<String> {
        set.iter().map(|i| self.names[i].clone()).collect()
    }
}

/// A macro action: a set of atomic action indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSet(BTreeSet<usize>);

impl ActionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: usize) -> bool {
        self.0.insert(index)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// `{c : probs[c] > 0.5}`; ties at exactly 0.5 are excluded.
    pub fn from_probs(probs: &[f64]) -> Self {
        probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.5)
            .map(|(c, _)| c)
            .collect()
    }

    /// Dense 0/1 indicator of length `num_actions`.
    pub fn to_indicator(&self, num_actions: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_actions];
        for i in self.iter() {
            v[i] = 1.0;
        }
        v
    }
}

impl FromIterator<usize> for ActionSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        ActionSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[usize; N]> for ActionSet {
    fn from(v: [usize; N]) -> Self {
        v.into_iter().collect()
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}
