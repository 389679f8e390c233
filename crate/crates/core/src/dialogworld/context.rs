//! Agent-visible dialog record and its fixed-length feature encoding.

use serde::{Deserialize, Serialize};

use super::schema::{DomainSchema, WorldSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "act", rename_all = "snake_case")]
pub enum UserAct {
    /// `value == None` means the user does not care about the slot.
    Inform {
        domain: usize,
        slot: usize,
        value: Option<usize>,
    },
    Request {
        domain: usize,
        slot: usize,
    },
    Book {
        domain: usize,
    },
    Bye,
}

impl UserAct {
    pub fn domain(&self) -> Option<usize> {
        match *self {
            UserAct::Inform { domain, .. } | UserAct::Request { domain, .. } | UserAct::Book { domain } => {
                Some(domain)
            }
            UserAct::Bye => None,
        }
    }

    pub fn describe(&self, schema: &WorldSchema) -> String {
        match *self {
            UserAct::Inform { domain, slot, value } => {
                let d = &schema.domains[domain];
                let v = value.map_or("dontcare", |v| d.informable[slot].values[v].as_str());
                format!("{}-inform-{}={}", d.name, d.informable[slot].name, v)
            }
            UserAct::Request { domain, slot } => {
                let d = &schema.domains[domain];
                format!("{}-request-{}", d.name, d.requestable[slot])
            }
            UserAct::Book { domain } => format!("{}-book", schema.domains[domain].name),
            UserAct::Bye => "general-bye".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Value(usize),
    DontCare,
}

/// What has happened in one domain so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStatus {
    /// Per informable slot.
    pub constraints: Vec<Option<Constraint>>,
    /// Per requestable slot: the user has asked for it.
    pub requested: Vec<bool>,
    /// Per requestable slot: the agent informed it after the user asked.
    pub answered: Vec<bool>,
    /// Per slot (informable then requestable): the agent has informed it.
    pub informed: Vec<bool>,
    pub booking_requested: bool,
    pub offered: Option<usize>,
    pub booked: Option<usize>,
}

impl DomainStatus {
    fn new(d: &DomainSchema) -> Self {
        DomainStatus {
            constraints: vec![None; d.informable.len()],
            requested: vec![false; d.requestable.len()],
            answered: vec![false; d.requestable.len()],
            informed: vec![false; d.num_slots()],
            booking_requested: false,
            offered: None,
            booked: None,
        }
    }

    pub fn touched(&self) -> bool {
        self.constraints.iter().any(Option::is_some) || self.requested.iter().any(|&r| r) || self.booking_requested
    }

    pub fn pending(&self, slot: usize) -> bool {
        self.requested[slot] && !self.answered[slot]
    }

    pub fn pending_requests(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.requested.len()).filter(|&r| self.pending(r))
    }

    pub fn first_unexpressed(&self) -> Option<usize> {
        self.constraints.iter().position(Option::is_none)
    }

    /// Entity indices consistent with every expressed constraint.
    pub fn matches(&self, d: &DomainSchema) -> Vec<usize> {
        d.entities
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                self.constraints.iter().enumerate().all(|(s, c)| match c {
                    Some(Constraint::Value(v)) => e.informable[s] == *v,
                    _ => true,
                })
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// The offered entity still satisfies the expressed constraints.
    pub fn offer_valid(&self, d: &DomainSchema) -> bool {
        self.offered.is_some_and(|e| self.matches(d).contains(&e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogContext {
    pub domains: Vec<DomainStatus>,
    pub last_user_acts: Vec<UserAct>,
    /// Completed agent turns.
    pub turn: usize,
}

impl DialogContext {
    pub fn new(schema: &WorldSchema) -> Self {
        DialogContext {
            domains: schema.domains.iter().map(DomainStatus::new).collect(),
            last_user_acts: Vec::new(),
            turn: 0,
        }
    }

    pub fn apply_user_acts(&mut self, acts: &[UserAct]) {
        for act in acts {
            match *act {
                UserAct::Inform { domain, slot, value } => {
                    self.domains[domain].constraints[slot] =
                        Some(value.map_or(Constraint::DontCare, Constraint::Value));
                }
                UserAct::Request { domain, slot } => {
                    let st = &mut self.domains[domain];
                    st.requested[slot] = true;
                    st.answered[slot] = false;
                }
                UserAct::Book { domain } => self.domains[domain].booking_requested = true,
                UserAct::Bye => {}
            }
        }
        self.last_user_acts = acts.to_vec();
    }

    pub fn user_said_bye(&self) -> bool {
        self.last_user_acts.contains(&UserAct::Bye)
    }

    /// Domain of the latest user act that names one, else the first touched domain.
    pub fn current_domain(&self) -> usize {
        self.last_user_acts
            .iter()
            .rev()
            .find_map(UserAct::domain)
            .or_else(|| self.domains.iter().position(DomainStatus::touched))
            .unwrap_or(0)
    }
}

/// Number of turn-count buckets: 0, 1–2, 3–5, 6–9, 10+.
pub const TURN_BUCKETS: usize = 5;
/// Database match buckets: 0, 1, 2–3, 4+.
pub const MATCH_BUCKETS: usize = 4;

pub fn turn_bucket(turn: usize) -> usize {
    match turn {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=9 => 3,
        _ => 4,
    }
}

pub fn match_bucket(matches: usize) -> usize {
    match matches {
        0 => 0,
        1 => 1,
        2..=3 => 2,
        _ => 3,
    }
}

/// Offsets of each feature block inside the state vector.
///
/// Per domain: three flags per slot (constraint expressed, request pending,
/// already informed), the match-count bucket one-hot (all zero while the
/// domain is untouched), then booking flags (requested, valid offer, booked).
/// After the domain blocks: a multi-hot of the last user turn's acts, then the
/// turn-count bucket one-hot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    domain_base: Vec<usize>,
    user_act_base: Vec<usize>,
    user_bye: usize,
    turn_base: usize,
    dim: usize,
}

impl StateLayout {
    pub fn new(schema: &WorldSchema) -> Self {
        let mut dim = 0;
        let mut domain_base = Vec::new();
        for d in &schema.domains {
            domain_base.push(dim);
            dim += 3 * d.num_slots() + MATCH_BUCKETS + 3;
        }
        let mut user_act_base = Vec::new();
        for d in &schema.domains {
            user_act_base.push(dim);
            dim += d.informable.len() + d.requestable.len() + 1;
        }
        let user_bye = dim;
        dim += 1;
        let turn_base = dim;
        dim += TURN_BUCKETS;
        StateLayout {
            domain_base,
            user_act_base,
            user_bye,
            turn_base,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraint_flag(&self, domain: usize, slot: usize) -> usize {
        self.domain_base[domain] + 3 * slot
    }

    pub fn pending_flag(&self, domain: usize, slot: usize) -> usize {
        self.domain_base[domain] + 3 * slot + 1
    }

    pub fn informed_flag(&self, domain: usize, slot: usize) -> usize {
        self.domain_base[domain] + 3 * slot + 2
    }

    pub fn turn_flag(&self, bucket: usize) -> usize {
        self.turn_base + bucket
    }

    /// Binary feature vector of `ctx`.
    pub fn encode(&self, schema: &WorldSchema, ctx: &DialogContext) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (d, (dom, st)) in schema.domains.iter().zip(&ctx.domains).enumerate() {
            let n_inf = dom.informable.len();
            for s in 0..dom.num_slots() {
                if s < n_inf {
                    if st.constraints[s].is_some() {
                        v[self.constraint_flag(d, s)] = 1.0;
                    }
                } else if st.pending(s - n_inf) {
                    v[self.pending_flag(d, s)] = 1.0;
                }
                if st.informed[s] {
                    v[self.informed_flag(d, s)] = 1.0;
                }
            }
            let base = self.domain_base[d] + 3 * dom.num_slots();
            if st.touched() {
                v[base + match_bucket(st.matches(dom).len())] = 1.0;
            }
            let flags = base + MATCH_BUCKETS;
            if st.booking_requested {
                v[flags] = 1.0;
            }
            if st.offer_valid(dom) {
                v[flags + 1] = 1.0;
            }
            if st.booked.is_some() {
                v[flags + 2] = 1.0;
            }
        }
        for act in &ctx.last_user_acts {
            let idx = match *act {
                UserAct::Inform { domain, slot, .. } => self.user_act_base[domain] + slot,
                UserAct::Request { domain, slot } => {
                    self.user_act_base[domain] + schema.domains[domain].informable.len() + slot
                }
                UserAct::Book { domain } => {
                    self.user_act_base[domain] + schema.domains[domain].num_slots()
                }
                UserAct::Bye => self.user_bye,
            };
            v[idx] = 1.0;
        }
        v[self.turn_flag(turn_bucket(ctx.turn))] = 1.0;
        v
    }
}
