//! Synthetic multi-domain task-oriented dialog world: schema, goals, an
//! agenda-based user, a rule-based expert, state encoding and metrics.

pub mod actions;
pub mod context;
pub mod episode;
pub mod expert;
pub mod goal;
pub mod schema;
pub mod user;

pub use actions::{ActType, ActionSet, ActionVocab, AtomicAction};
pub use context::{Constraint, DialogContext, DomainStatus, StateLayout, UserAct};
pub use episode::{
    apply_agent_actions, compute_aggregate, run_episode, run_episode_with, trace_episode, Agent, ByeAgent,
    EpisodeMetrics, EpisodeTrace, ExpertAgent, MetricsReport, Stat, DEFAULT_MAX_TURNS,
};
pub use expert::expert_respond;
pub use goal::{enumerate_domain_goals, sample_goal, DomainGoal, GoalConfig, UserGoal};
pub use schema::{DomainSchema, WorldGenConfig, WorldSchema};
pub use user::{UserState, MAX_USER_ACTS};

/// A schema together with its action vocabulary and state layout.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub schema: WorldSchema,
    pub vocab: ActionVocab,
    pub layout: StateLayout,
}

impl World {
    pub fn new(schema: WorldSchema) -> Self {
        let vocab = ActionVocab::new(&schema);
        let layout = StateLayout::new(&schema);
        World { schema, vocab, layout }
    }

    pub fn num_actions(&self) -> usize {
        self.vocab.len()
    }

    pub fn state_dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn encode(&self, ctx: &DialogContext) -> Vec<f64> {
        self.layout.encode(&self.schema, ctx)
    }
}
