use serde::{Deserialize, Serialize};

use super::actions::{ActType, ActionSet};
use super::context::{DialogContext, UserAct};
use super::expert::expert_respond;
use super::goal::UserGoal;
use super::user::UserState;
use super::World;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_TURNS: usize = 20;

/// Anything that maps a dialog state to a macro action.
pub trait Agent {
    fn respond(&self, world: &World, ctx: &DialogContext, state: &[f64]) -> ActionSet;
}

/// The rule-based expert as an agent.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertAgent;

impl Agent for ExpertAgent {
    fn respond(&self, world: &World, ctx: &DialogContext, _state: &[f64]) -> ActionSet {
        expert_respond(world, ctx)
    }
}

/// Says goodbye immediately.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByeAgent;

impl Agent for ByeAgent {
    fn respond(&self, world: &World, _ctx: &DialogContext, _state: &[f64]) -> ActionSet {
        ActionSet::from([world.vocab.bye()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub turns: usize,
    pub matched: bool,
    pub inform_recall: f64,
    pub inform_precision: f64,
    pub inform_f1: f64,
    pub success: bool,
}

impl EpisodeMetrics {
    /// Derive precision/recall/F1/success from raw counts.
    pub fn from_counts(turns: usize, matched: bool, requested: usize, answered: usize, informs: usize, useful: usize) -> Self {
        let recall = if requested == 0 { 1.0 } else { answered as f64 / requested as f64 };
        let precision = if informs == 0 { 0.0 } else { useful as f64 / informs as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EpisodeMetrics {
            turns,
            matched,
            inform_recall: recall,
            inform_precision: precision,
            inform_f1: f1,
            success: answered == requested && matched,
        }
    }
}

/// Inform counts produced by one agent turn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InformCounts {
    pub informs: usize,
    pub useful: usize,
}

/// Apply an agent turn to the dialog: offers, then bookings, then informs.
///
/// `offer` picks the first database match; `book` books a still-valid offer.
/// An inform is useful iff the slot is a goal request not answered before.
pub fn apply_agent_actions(world: &World, ctx: &mut DialogContext, user: &mut UserState, actions: &ActionSet) -> InformCounts {
    let vocab = &world.vocab;
    let mut counts = InformCounts::default();
    let ordered = [ActType::Offer, ActType::Book, ActType::Inform];
    for act_type in ordered {
        for idx in actions.iter() {
            let a = vocab.get(idx);
            if a.act != act_type {
                continue;
            }
            let Some(d) = a.domain else { continue };
            let dom = &world.schema.domains[d];
            let st = &mut ctx.domains[d];
            match a.act {
                ActType::Offer => {
                    if let Some(&first) = st.matches(dom).first() {
                        st.offered = Some(first);
                    }
                }
                ActType::Book => {
                    if st.offer_valid(dom) {
                        st.booked = st.offered;
                    }
                }
                ActType::Inform => {
                    let slot = a.slot.expect("inform has a slot");
                    st.informed[slot] = true;
                    counts.informs += 1;
                    if let Some(r) = slot.checked_sub(dom.informable.len()) {
                        if st.requested[r] {
                            st.answered[r] = true;
                        }
                        if user.wants(d, r) {
                            user.mark_answered(d, r);
                            counts.useful += 1;
                        }
                    }
                }
                _ => {}
            }
        }
    }
    counts
}

/// One agent turn, for traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn: usize,
    pub agent: Vec<String>,
    pub user: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub opening: Vec<String>,
    pub turns: Vec<TurnTrace>,
    pub metrics: EpisodeMetrics,
}

/// Simulate one dialog; `observe` sees every (context, state, agent action).
pub fn run_episode_with<A, F>(world: &World, agent: &A, goal: &UserGoal, max_turns: usize, mut observe: F) -> EpisodeMetrics
where
    A: Agent + ?Sized,
    F: FnMut(&DialogContext, &[f64], &ActionSet, &[UserAct]),
{
    let mut ctx = DialogContext::new(&world.schema);
    let mut user = UserState::new(world, goal.clone());
    let opening = user.opening(&ctx);
    ctx.apply_user_acts(&opening);

    let mut informs = 0;
    let mut useful = 0;
    let mut finished = false;
    while ctx.turn < max_turns {
        let state = world.encode(&ctx);
        let actions = agent.respond(world, &ctx, &state);
        let c = apply_agent_actions(world, &mut ctx, &mut user, &actions);
        informs += c.informs;
        useful += c.useful;
        ctx.turn += 1;
        let (acts, terminated) = user.step(world, &ctx, &actions);
        observe(&ctx, &state, &actions, &acts);
        ctx.apply_user_acts(&acts);
        if terminated {
            finished = true;
            break;
        }
    }

    let matched = goal
        .domains
        .iter()
        .filter(|g| g.book)
        .all(|g| {
            let st = &ctx.domains[g.domain];
            st.booked.or(st.offered).is_some_and(|e| {
                let ent = &world.schema.domains[g.domain].entities[e];
                g.constraints.iter().all(|&(s, v)| ent.informable[s] == v)
            })
        });
    let mut m = EpisodeMetrics::from_counts(ctx.turn, matched, goal.num_requests(), user.answered_count(), informs, useful);
    if !finished {
        m.success = false;
    }
    m
}

pub fn run_episode<A: Agent + ?Sized>(world: &World, agent: &A, goal: &UserGoal, max_turns: usize) -> EpisodeMetrics {
    run_episode_with(world, agent, goal, max_turns, |_, _, _, _| {})
}

/// Like [`run_episode`], recording readable agent/user acts per turn.
pub fn trace_episode<A: Agent + ?Sized>(world: &World, agent: &A, goal: &UserGoal, max_turns: usize) -> EpisodeTrace {
    let mut ctx0 = DialogContext::new(&world.schema);
    let mut user0 = UserState::new(world, goal.clone());
    let opening = user0.opening(&ctx0);
    ctx0.apply_user_acts(&opening);
    let mut turns = Vec::new();
    let metrics = run_episode_with(world, agent, goal, max_turns, |ctx, _, actions, acts| {
        turns.push(TurnTrace {
            turn: ctx.turn,
            agent: world.vocab.describe(actions),
            user: acts.iter().map(|a| a.describe(&world.schema)).collect(),
        });
    });
    EpisodeTrace {
        opening: opening.iter().map(|a| a.describe(&world.schema)).collect(),
        turns,
        metrics,
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

/// Per-metric mean ± std. Success is a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub turns: Stat,
    pub matched: Stat,
    pub inform_recall: Stat,
    pub inform_f1: Stat,
    pub success_pct: Stat,
}

impl MetricsReport {
    /// `"76.7 ± 2.83"` style cells in Table order: Turn, Match, Inform Rec, Inform F1, Success%.
    pub fn formatted_row(&self) -> [String; 5] {
        [
            format!("{:.2} ± {:.2}", self.turns.mean, self.turns.std),
            format!("{:.2} ± {:.1}%", self.matched.mean, 100.0 * self.matched.std),
            format!("{:.2} ± {:.1}%", self.inform_recall.mean, 100.0 * self.inform_recall.std),
            format!("{:.2} ± {:.1}%", self.inform_f1.mean, 100.0 * self.inform_f1.std),
            format!("{:.1} ± {:.2}", self.success_pct.mean, self.success_pct.std),
        ]
    }
}

pub fn compute_aggregate(episodes: &[EpisodeMetrics]) -> Result<MetricsReport> {
    if episodes.is_empty() {
        return Err(Error::Usage("cannot aggregate zero episodes".into()));
    }
    let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| -> Stat { Stat::of(&episodes.iter().map(f).collect::<Vec<_>>()) };
    Ok(MetricsReport {
        turns: col(&|e| e.turns as f64),
        matched: col(&|e| f64::from(u8::from(e.matched))),
        inform_recall: col(&|e| e.inform_recall),
        inform_f1: col(&|e| e.inform_f1),
        success_pct: col(&|e| 100.0 * f64::from(u8::from(e.success))),
    })
}
