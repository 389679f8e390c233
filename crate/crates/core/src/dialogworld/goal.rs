use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::schema::WorldSchema;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGoal {
    pub domain: usize,
    /// (informable slot, value index), in the order the user reveals them.
    pub constraints: Vec<(usize, usize)>,
    /// Requestable slot indices, in the order the user asks for them.
    pub requests: Vec<usize>,
    pub book: bool,
}

impl DomainGoal {
    pub fn constraint(&self, slot: usize) -> Option<usize> {
        self.constraints.iter().find(|(s, _)| *s == slot).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    pub domains: Vec<DomainGoal>,
}

impl UserGoal {
    pub fn domain(&self, domain: usize) -> Option<&DomainGoal> {
        self.domains.iter().find(|g| g.domain == domain)
    }

    pub fn num_requests(&self) -> usize {
        self.domains.iter().map(|g| g.requests.len()).sum()
    }

    pub fn is_satisfiable(&self, schema: &WorldSchema) -> bool {
        self.domains.iter().all(|g| {
            schema.domains.get(g.domain).is_some_and(|d| {
                d.entities
                    .iter()
                    .any(|e| g.constraints.iter().all(|&(s, v)| e.informable.get(s) == Some(&v)))
            })
        })
    }
}

/// Sampling weights for [`sample_goal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoalConfig {
    /// Weight of goals spanning 1, 2, 3, ... domains.
    pub domain_count_weights: Vec<f64>,
    pub constraint_prob: f64,
    pub request_prob: f64,
    pub book_prob: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        GoalConfig {
            domain_count_weights: vec![0.5, 0.35, 0.15],
            constraint_prob: 0.6,
            request_prob: 0.5,
            book_prob: 0.5,
        }
    }
}

const MAX_GOAL_RETRIES: usize = 100;

/// Draw a satisfiable goal: constraint values are copied from a uniformly
/// chosen entity, so the goal always has at least one matching entity.
pub fn sample_goal(schema: &WorldSchema, cfg: &GoalConfig, rng: &mut Rng) -> Result<UserGoal> {
    let n_domains = schema.domains.len();
    let weights: Vec<f64> = cfg.domain_count_weights.iter().take(n_domains).copied().collect();
    let total: f64 = weights.iter().sum();
    if n_domains == 0 || !(total > 0.0) {
        return Err(Error::Config("goal sampler needs domains and positive count weights".into()));
    }
    for _ in 0..MAX_GOAL_RETRIES {
        let mut u = rng.random::<f64>() * total;
        let mut count = weights.len();
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                count = k + 1;
                break;
            }
            u -= w;
        }
        let mut order: Vec<usize> = (0..n_domains).collect();
        order.shuffle(rng);
        order.truncate(count);

        let mut domains = Vec::with_capacity(count);
        for d in order {
            let dom = &schema.domains[d];
            let Some(entity) = dom.entities.choose(rng) else { break };
            let mut constraints: Vec<(usize, usize)> = (0..dom.informable.len())
                .filter(|_| rng.random_bool(cfg.constraint_prob))
                .map(|s| (s, entity.informable[s]))
                .collect();
            if constraints.is_empty() {
                let s = rng.random_range(0..dom.informable.len());
                constraints.push((s, entity.informable[s]));
            }
            constraints.shuffle(rng);
            let requests: Vec<usize> = (0..dom.requestable.len())
                .filter(|_| rng.random_bool(cfg.request_prob))
                .collect();
            domains.push(DomainGoal {
                domain: d,
                constraints,
                requests,
                book: rng.random_bool(cfg.book_prob),
            });
        }
        if domains.iter().all(|g| g.requests.is_empty()) {
            if let Some(g) = domains
                .iter_mut()
                .find(|g| !schema.domains[g.domain].requestable.is_empty())
            {
                let n = schema.domains[g.domain].requestable.len();
                g.requests.push(rng.random_range(0..n));
            }
        }
        let goal = UserGoal { domains };
        if goal.domains.len() == count && goal.num_requests() > 0 && goal.is_satisfiable(schema) {
            return Ok(goal);
        }
    }
    Err(Error::Config(format!(
        "no satisfiable goal after {MAX_GOAL_RETRIES} draws; does any domain have requestable slots?"
    )))
}

/// Every distinct single-domain goal of `domain` with slot-ordered constraints
/// and requests: non-empty satisfiable constraint assignments, non-empty
/// request subsets, with and without booking.
pub fn enumerate_domain_goals(schema: &WorldSchema, domain: usize) -> Vec<UserGoal> {
    let dom = &schema.domains[domain];
    let n_inf = dom.informable.len();
    let n_req = dom.requestable.len();
    let mut assignments = std::collections::BTreeSet::new();
    for entity in &dom.entities {
        for mask in 1u32..(1 << n_inf) {
            let c: Vec<(usize, usize)> = (0..n_inf)
                .filter(|s| mask & (1 << s) != 0)
                .map(|s| (s, entity.informable[s]))
                .collect();
            assignments.insert(c);
        }
    }
    let mut goals = Vec::new();
    for constraints in assignments {
        for rmask in 1u32..(1 << n_req) {
            let requests: Vec<usize> = (0..n_req).filter(|r| rmask & (1 << r) != 0).collect();
            for book in [false, true] {
                goals.push(UserGoal {
                    domains: vec![DomainGoal {
                        domain,
                        constraints: constraints.clone(),
                        requests: requests.clone(),
                        book,
                    }],
                });
            }
        }
    }
    goals
}
