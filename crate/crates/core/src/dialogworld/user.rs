use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::actions::{ActType, ActionSet};
use super::context::{Constraint, DialogContext, UserAct};
use super::goal::UserGoal;
use super::World;

/// Acts the user utters per turn, answers included.
pub const MAX_USER_ACTS: usize = 2;

/// Agenda-based user: goal, remaining agenda and which goal requests have
/// been answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserState {
    pub goal: UserGoal,
    pub agenda: VecDeque<UserAct>,
    /// Per goal domain (same order as `goal.domains`), per requestable slot.
    pub answered: Vec<Vec<bool>>,
    pub last_acts: Vec<UserAct>,
}

impl UserState {
    /// Agenda: for each goal domain its constraints, then requests, then a booking.
    pub fn new(world: &World, goal: UserGoal) -> Self {
        let mut agenda = VecDeque::new();
        for g in &goal.domains {
            for &(slot, value) in &g.constraints {
                agenda.push_back(UserAct::Inform {
                    domain: g.domain,
                    slot,
                    value: Some(value),
                });
            }
            for &slot in &g.requests {
                agenda.push_back(UserAct::Request { domain: g.domain, slot });
            }
            if g.book {
                agenda.push_back(UserAct::Book { domain: g.domain });
            }
        }
        let answered = goal
            .domains
            .iter()
            .map(|g| vec![false; world.schema.domains[g.domain].requestable.len()])
            .collect();
        UserState {
            goal,
            agenda,
            answered,
            last_acts: Vec::new(),
        }
    }

    fn goal_index(&self, domain: usize) -> Option<usize> {
        self.goal.domains.iter().position(|g| g.domain == domain)
    }

    /// The requestable slot is in the goal and not yet answered.
    pub fn wants(&self, domain: usize, slot: usize) -> bool {
        self.goal_index(domain)
            .is_some_and(|k| self.goal.domains[k].requests.contains(&slot) && !self.answered[k][slot])
    }

    pub fn mark_answered(&mut self, domain: usize, slot: usize) {
        if let Some(k) = self.goal_index(domain) {
            self.answered[k][slot] = true;
        }
    }

    pub fn answered_count(&self) -> usize {
        self.goal
            .domains
            .iter()
            .zip(&self.answered)
            .map(|(g, a)| g.requests.iter().filter(|&&r| a[r]).count())
            .sum()
    }

    /// Every goal request answered and every required booking made.
    pub fn satisfied(&self, ctx: &DialogContext) -> bool {
        self.answered_count() == self.goal.num_requests()
            && self
                .goal
                .domains
                .iter()
                .all(|g| !g.book || ctx.domains[g.domain].booked.is_some())
    }

    /// Still worth saying given what has happened.
    fn outstanding(&self, act: &UserAct, ctx: &DialogContext) -> bool {
        match *act {
            UserAct::Inform { domain, slot, value } => {
                ctx.domains[domain].constraints[slot] != Some(value.map_or(Constraint::DontCare, Constraint::Value))
            }
            UserAct::Request { domain, slot } => self.wants(domain, slot),
            UserAct::Book { domain } => ctx.domains[domain].booked.is_none(),
            UserAct::Bye => false,
        }
    }

    fn pop_agenda(&mut self, ctx: &DialogContext, acts: &mut Vec<UserAct>) {
        while acts.len() < MAX_USER_ACTS {
            let Some(act) = self.agenda.pop_front() else { break };
            if self.outstanding(&act, ctx) {
                acts.push(act);
            }
        }
    }

    pub fn opening(&mut self, ctx: &DialogContext) -> Vec<UserAct> {
        let mut acts = Vec::new();
        self.pop_agenda(ctx, &mut acts);
        self.last_acts = acts.clone();
        acts
    }

    /// One user turn in reply to `agent`; `ctx` already reflects the agent's actions.
    ///
    /// Returns the user's acts and whether the dialog is over. The user
    /// leaves when the agent says bye or when its goal is satisfied; it answers
    /// agent requests from its goal (`dontcare` for unconstrained slots), then
    /// continues its agenda; on an empty agent turn it repeats its most recent
    /// still-pending acts; with the agenda exhausted it re-asks for whatever is
    /// still outstanding.
    pub fn step(&mut self, world: &World, ctx: &DialogContext, agent: &ActionSet) -> (Vec<UserAct>, bool) {
        if agent.contains(world.vocab.bye()) || self.satisfied(ctx) {
            self.last_acts = vec![UserAct::Bye];
            return (self.last_acts.clone(), true);
        }
        let mut acts: Vec<UserAct> = Vec::new();
        for a in agent.iter().map(|i| world.vocab.get(i)) {
            if acts.len() >= MAX_USER_ACTS {
                break;
            }
            let (ActType::Request, Some(domain), Some(slot)) = (a.act, a.domain, a.slot) else {
                continue;
            };
            let Some(k) = self.goal_index(domain) else { continue };
            let value = self.goal.domains[k].constraint(slot);
            let answer = UserAct::Inform { domain, slot, value };
            self.agenda
                .retain(|x| !matches!(*x, UserAct::Inform { domain: d, slot: s, .. } if d == domain && s == slot));
            acts.push(answer);
        }

        if agent.is_empty() && acts.is_empty() {
            let retry: Vec<UserAct> = self
                .last_acts
                .iter()
                .filter(|a| self.outstanding(a, ctx))
                .copied()
                .collect();
            acts.extend(retry.into_iter().take(MAX_USER_ACTS));
        }

        self.pop_agenda(ctx, &mut acts);

        if acts.is_empty() {
            for (g, answered) in self.goal.domains.iter().zip(&self.answered) {
                for &r in &g.requests {
                    if !answered[r] && acts.len() < MAX_USER_ACTS {
                        acts.push(UserAct::Request { domain: g.domain, slot: r });
                    }
                }
                if g.book && ctx.domains[g.domain].booked.is_none() && acts.len() < MAX_USER_ACTS {
                    acts.push(UserAct::Book { domain: g.domain });
                }
            }
        }
        self.last_acts = acts.clone();
        (acts, false)
    }
}
