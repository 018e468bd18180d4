//! Monte Carlo Tree Search over compensation strategies.
//!
//! Each rollout selects a leaf by UCB, expands it with agent proposals once it
//! has been visited, simulates (applies and scores) the chosen node and
//! backpropagates the score to the root. The search stops when the rollout
//! budget is spent, when the best score stops improving for `patience`
//! rollouts, or when every leaf sits at the depth limit and has been visited.

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, HeuristicAgent, Proposal};
use crate::compensation::{
    apply_strategy, compensation_score, score_accuracy, score_effectiveness, score_stability,
    CompensationStateSummary, CompensationStrategy, ScoreBreakdown, ScoreWeights,
};
use crate::error::{Error, Result};
use crate::model::{CloudWindow, ScenarioDescriptor, SensorSetup};

pub type NodeId = usize;

/// Parameter-wise tolerance under which two strategies are the same action.
pub const DUPLICATE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum number of rollouts.
    pub budget: usize,
    pub max_depth: usize,
    /// Exploration constant `c` of the UCB rule.
    pub exploration: f64,
    pub weights: ScoreWeights,
    /// Minimum gain in best score that counts as progress.
    pub epsilon_stop: f64,
    /// Rollouts without progress tolerated before stopping.
    pub patience: usize,
    /// Proposals requested per expansion.
    pub branching: usize,
    /// Time slices used by the stability score.
    pub stability_splits: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 32,
            max_depth: 3,
            exploration: std::f64::consts::SQRT_2,
            weights: ScoreWeights::default(),
            epsilon_stop: 1e-3,
            patience: 8,
            branching: 3,
            stability_splits: 4,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.budget == 0 || self.branching == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter("budget, branching and patience must be positive".into()));
        }
        if !(self.exploration >= 0.0) {
            return Err(Error::InvalidParameter(format!("exploration constant {}", self.exploration)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    /// Composed strategy on the path to this node; `None` at the root.
    pub strategy: Option<CompensationStrategy>,
    pub visits: u64,
    pub total_score: f64,
    pub children: Vec<NodeId>,
    pub state: CompensationStateSummary,
    /// Set once expansion was attempted and produced no new child.
    pub exhausted: bool,
    /// Highest single simulation score seen at this node.
    pub best_single: Option<f64>,
}

impl SearchNode {
    /// Mean score `W / n`, zero for an unvisited node.
    pub fn mean_score(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_score / self.visits as f64
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Upper confidence bound `W/n + c sqrt(ln N / n)`; infinite for unvisited nodes.
pub fn ucb(node: &SearchNode, total_visits: u64, exploration: f64) -> f64 {
    if node.visits == 0 {
        return f64::INFINITY;
    }
    let n = node.visits as f64;
    let ln_n = (total_visits.max(1) as f64).ln();
    node.mean_score() + exploration * (ln_n / n).sqrt()
}

/// A search over one window. The tree owns the data it compensates.
#[derive(Debug, Clone)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    pub root: NodeId,
    /// `N`, equal to the root's visit count after every rollout.
    pub total_visits: u64,
    pub config: SearchConfig,
    /// Proposals the agent made outside the parameter bounds.
    pub clamped_proposals: usize,
    window: CloudWindow,
    setup: SensorSetup,
    scenario: ScenarioDescriptor,
}

/// Builds a single-node tree whose root summarises the uncompensated window.
pub fn init_root(
    window: &CloudWindow,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    config: SearchConfig,
) -> SearchTree {
    let state = CompensationStateSummary::from_window(window, setup, scenario, None);
    SearchTree {
        nodes: vec![SearchNode {
            id: 0,
            parent: None,
            depth: 0,
            strategy: None,
            visits: 0,
            total_score: 0.0,
            children: Vec::new(),
            state,
            exhausted: false,
            best_single: None,
        }],
        root: 0,
        total_visits: 0,
        config,
        clamped_proposals: 0,
        window: window.clone(),
        setup: setup.clone(),
        scenario: *scenario,
    }
}

impl SearchTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn window(&self) -> &CloudWindow {
        &self.window
    }

    /// Node ids from the root down to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    fn can_expand(&self, id: NodeId) -> bool {
        let n = &self.nodes[id];
        n.is_leaf() && !n.exhausted && n.depth < self.config.max_depth
    }

    /// Descends from the root along maximal-UCB children (ties to the lowest
    /// id) until reaching a leaf.
    pub fn select(&self) -> NodeId {
        let mut cur = self.root;
        while !self.nodes[cur].is_leaf() {
            let mut best = self.nodes[cur].children[0];
            let mut best_ucb = ucb(&self.nodes[best], self.total_visits, self.config.exploration);
            for &c in &self.nodes[cur].children[1..] {
                let u = ucb(&self.nodes[c], self.total_visits, self.config.exploration);
                if u > best_ucb {
                    best = c;
                    best_ucb = u;
                }
            }
            cur = best;
        }
        cur
    }

    /// Adds up to `k` children holding agent proposals composed with the
    /// node's strategy. Proposals equal to an existing child are skipped.
    pub fn expand(&mut self, id: NodeId, agent: &dyn Agent, k: usize) -> Result<Vec<NodeId>> {
        let depth = self.nodes[id].depth;
        if depth >= self.config.max_depth {
            return Err(Error::DepthExceeded {
                node: id,
                max_depth: self.config.max_depth,
            });
        }
        let proposals = match agent.propose_strategies(&self.nodes[id].state, k) {
            Ok(p) => p,
            Err(Error::MalformedAgentReply(reason)) => {
                log::warn!("agent `{}` sent unusable strategies ({reason}); using heuristic", agent.name());
                HeuristicAgent::default().propose_strategies(&self.nodes[id].state, k)?
            }
            Err(e) => return Err(e),
        };
        self.clamped_proposals += proposals.iter().filter(|p| p.clamped).count();
        Ok(self.add_children(id, &proposals, k))
    }

    fn add_children(&mut self, id: NodeId, proposals: &[Proposal], k: usize) -> Vec<NodeId> {
        let parent_strategy = self.nodes[id].strategy;
        let depth = self.nodes[id].depth + 1;
        let mut added = Vec::new();
        for p in proposals.iter().take(k) {
            let strategy = match &parent_strategy {
                None => p.strategy,
                Some(s) => s.compose(&p.strategy),
            };
            let duplicate = self.nodes[id].children.iter().any(|&c| {
                self.nodes[c]
                    .strategy
                    .is_some_and(|s| s.approx_eq(&strategy, DUPLICATE_TOLERANCE))
            });
            if duplicate {
                continue;
            }
            let compensated = apply_strategy(&self.window, Some(&strategy));
            let state = CompensationStateSummary::from_window(&compensated, &self.setup, &self.scenario, Some(strategy));
            let child = self.nodes.len();
            self.nodes.push(SearchNode {
                id: child,
                parent: Some(id),
                depth,
                strategy: Some(strategy),
                visits: 0,
                total_score: 0.0,
                children: Vec::new(),
                state,
                exhausted: false,
                best_single: None,
            });
            self.nodes[id].children.push(child);
            added.push(child);
        }
        if added.is_empty() && self.nodes[id].is_leaf() {
            self.nodes[id].exhausted = true;
        }
        added
    }

    /// Scores the node's strategy on the window: effectiveness against the
    /// raw root state, accuracy of the compensated profile and stability over
    /// time slices.
    pub fn simulate(&self, id: NodeId) -> Result<ScoreBreakdown> {
        let node = &self.nodes[id];
        let effectiveness = score_effectiveness(&self.nodes[self.root].state, &node.state);
        let accuracy = score_accuracy(&node.state);
        let stability = score_stability(
            &self.window,
            node.strategy.as_ref(),
            &self.setup,
            self.config.stability_splits,
        );
        compensation_score(effectiveness, accuracy, stability, self.config.weights)
    }

    /// Adds one visit and `score` to every node from `id` up to the root.
    pub fn backpropagate(&mut self, id: NodeId, score: f64) {
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = &mut self.nodes[c];
            node.visits += 1;
            node.total_score += score;
            cur = node.parent;
        }
        let best = &mut self.nodes[id].best_single;
        *best = Some(best.map_or(score, |b| b.max(score)));
        self.total_visits = self.nodes[self.root].visits;
    }

    /// True while some leaf is unvisited or can still be expanded.
    fn has_frontier(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| n.is_leaf() && (n.visits == 0 || self.can_expand(n.id)))
    }

    /// The highest-mean node visited at least twice, else the node with the
    /// highest single simulation. Ties go to the lowest id.
    pub fn best_node(&self) -> NodeId {
        let mut best: Option<(NodeId, f64)> = None;
        for n in self.nodes.iter().filter(|n| n.visits >= 2) {
            if best.is_none_or(|(_, b)| n.mean_score() > b) {
                best = Some((n.id, n.mean_score()));
            }
        }
        if let Some((id, _)) = best {
            return id;
        }
        for n in &self.nodes {
            if let Some(s) = n.best_single {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((n.id, s));
                }
            }
        }
        best.map_or(self.root, |(id, _)| id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Budget,
    EarlyStop,
    DepthLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub rollout: usize,
    /// Root-to-node path of the simulated node.
    pub path: Vec<NodeId>,
    pub strategy: Option<CompensationStrategy>,
    pub score: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub rollouts: Vec<RolloutRecord>,
    pub stop_reason: StopReason,
    pub tree_size: usize,
    pub clamped_proposals: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Strategy to apply; `None` when leaving the data untouched scored best.
    pub best_strategy: Option<CompensationStrategy>,
    pub best_node: NodeId,
    /// Score of one simulation of the best node.
    pub score: ScoreBreakdown,
    pub trace: SearchTrace,
    pub tree: SearchTree,
}

/// Runs select, expand, simulate and backpropagate until a stopping rule fires.
pub fn run_search(
    window: &CloudWindow,
    agent: &dyn Agent,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    config: SearchConfig,
) -> Result<SearchOutcome> {
    config.validate()?;
    let mut tree = init_root(window, setup, scenario, config);
    let mut rollouts = Vec::new();
    let mut best_seen: Option<f64> = None;
    let mut stale = 0;
    let mut stop_reason = StopReason::Budget;

    for rollout in 0..config.budget {
        let selected = tree.select();
        let target = if tree.nodes[selected].visits > 0 && tree.can_expand(selected) {
            let added = tree.expand(selected, agent, config.branching)?;
            added.first().copied().unwrap_or(selected)
        } else {
            selected
        };

        let score = tree.simulate(target)?;
        tree.backpropagate(target, score.total);
        rollouts.push(RolloutRecord {
            rollout,
            path: tree.path_to(target),
            strategy: tree.nodes[target].strategy,
            score,
        });

        match best_seen {
            Some(b) if !(score.total - b >= config.epsilon_stop) => stale += 1,
            _ => stale = 0,
        }
        best_seen = Some(best_seen.map_or(score.total, |b| b.max(score.total)));

        if rollout + 1 == config.budget {
            break;
        }
        if stale >= config.patience {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        if !tree.has_frontier() {
            stop_reason = StopReason::DepthLimit;
            break;
        }
    }

    let best_node = tree.best_node();
    let score = tree.simulate(best_node)?;
    Ok(SearchOutcome {
        best_strategy: tree.nodes[best_node].strategy,
        best_node,
        score,
        trace: SearchTrace {
            rollouts,
            stop_reason,
            tree_size: tree.len(),
            clamped_proposals: tree.clamped_proposals,
        },
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensation::seed_strategies;
    use crate::heatmap::Heatmap;
    use crate::model::{Detection, Frame, RadarPoint};
    use crate::agent::{NoiseMask, TokenSequence};

    fn attenuated_window() -> CloudWindow {
        let mut points = Vec::new();
        for i in 0..60 {
            let r = 0.5 + 0.03 * f64::from(i);
            let base = 40.0 + 5.0 * (f64::from(i) * 1.7).sin();
            points.push(RadarPoint::new(0.2, r, 0.0, 0.0, base / (r * r)));
        }
        let (a, b) = points.split_at(30);
        CloudWindow::new(0, 200, vec![Frame::new(0, 0, a.to_vec()), Frame::new(1, 100, b.to_vec())]).unwrap()
    }

    fn tree() -> SearchTree {
        init_root(&attenuated_window(), &SensorSetup::default(), &ScenarioDescriptor::default(), SearchConfig::default())
    }

    /// Always proposes the same fixed list.
    struct Scripted(Vec<CompensationStrategy>);

    impl Agent for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn classify_noise(&self, seq: &TokenSequence) -> Result<NoiseMask> {
            Ok(NoiseMask::all(true, seq.total_points))
        }
        fn propose_strategies(&self, _: &CompensationStateSummary, k: usize) -> Result<Vec<Proposal>> {
            Ok(self.0.iter().take(k).map(|&strategy| Proposal { strategy, clamped: false }).collect())
        }
        fn detect_crowd(&self, _: &[u8], _: &Heatmap) -> Result<Vec<Detection>> {
            Ok(Vec::new())
        }
    }

    fn node_with(visits: u64, total: f64) -> SearchNode {
        let mut n = tree().nodes[0].clone();
        n.visits = visits;
        n.total_score = total;
        n
    }

    #[test]
    fn root_only_tree() {
        let t = tree();
        assert_eq!(t.len(), 1);
        assert_eq!(t.total_visits, 0);
        assert_eq!(t.select(), 0);
        assert_eq!(tree().nodes[0].state, t.nodes[0].state);
    }

    #[test]
    fn empty_window_root_is_valid() {
        let w = CloudWindow::new(0, 200, vec![]).unwrap();
        let t = init_root(&w, &SensorSetup::default(), &ScenarioDescriptor::default(), SearchConfig::default());
        assert!(t.nodes[0].state.profile.iter().all(|&v| v == 0.0));
        assert_eq!(t.select(), 0);
    }

    #[test]
    fn ucb_examples() {
        let v = ucb(&node_with(4, 2.0), 10, 1.4142);
        assert!((v - (0.5 + 1.4142 * (10f64.ln() / 4.0).sqrt())).abs() < 1e-12);
        assert!((v - 1.5731).abs() < 5e-4);
        assert_eq!(ucb(&node_with(0, 0.0), 10, 1.4142), f64::INFINITY);
        assert_eq!(ucb(&node_with(3, 1.2), 10, 0.0), 1.2 / 3.0);
    }

    #[test]
    fn selection_prefers_unvisited_then_argmax() {
        let mut t = tree();
        t.backpropagate(0, 0.5);
        let kids = t.expand(0, &HeuristicAgent::default(), 2).unwrap();
        for _ in 0..5 {
            t.backpropagate(kids[1], 0.5);
        }
        assert_eq!(t.select(), kids[0]);

        let mut t = tree();
        t.config.exploration = 0.0;
        let kids = t.expand(0, &HeuristicAgent::default(), 2).unwrap();
        t.backpropagate(kids[0], 0.1);
        t.backpropagate(kids[1], 0.9);
        assert_eq!(t.select(), kids[1]);
    }

    #[test]
    fn expansion_uses_seed_set() {
        let mut t = tree();
        let kids = t.expand(0, &HeuristicAgent::default(), 3).unwrap();
        assert_eq!(kids.len(), 3);
        for (k, s) in kids.iter().zip(seed_strategies()) {
            assert_eq!(t.nodes[*k].strategy, Some(s));
            assert_eq!(t.nodes[*k].depth, 1);
        }
    }

    #[test]
    fn duplicate_proposals_are_dropped() {
        let s = CompensationStrategy::uniform(2.0, 20.0).unwrap();
        let mut t = tree();
        let kids = t.expand(0, &Scripted(vec![s, s]), 3).unwrap();
        assert_eq!(kids.len(), 1);
        assert!(t.expand(kids[0], &Scripted(vec![]), 3).unwrap().is_empty());
        assert!(t.nodes[kids[0]].exhausted);
    }

    #[test]
    fn expansion_at_depth_limit_fails() {
        let mut t = tree();
        t.config.max_depth = 1;
        let kids = t.expand(0, &HeuristicAgent::default(), 3).unwrap();
        assert!(matches!(t.expand(kids[0], &HeuristicAgent::default(), 3), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn deeper_children_compose_with_parent() {
        let mut t = tree();
        let kids = t.expand(0, &Scripted(vec![CompensationStrategy::uniform(1.5, 20.0).unwrap()]), 1).unwrap();
        let grand = t.expand(kids[0], &Scripted(vec![CompensationStrategy::uniform(2.8, 20.0).unwrap()]), 1).unwrap();
        assert!((t.nodes[grand[0]].strategy.unwrap().alpha - 2.0).abs() < 1e-12);
        assert_eq!(t.nodes[grand[0]].state.applied, t.nodes[grand[0]].strategy);
    }

    #[test]
    fn root_simulation_has_zero_effectiveness() {
        let t = tree();
        let s = t.simulate(0).unwrap();
        assert_eq!(s.effectiveness, 0.0);
        let w = s.weights;
        assert!((s.total - (w.accuracy * s.accuracy + w.stability * s.stability)).abs() < 1e-12);
        assert_eq!(t.simulate(0).unwrap(), s);
    }

    #[test]
    fn exact_seed_beats_root() {
        let mut t = tree();
        let kids = t.expand(0, &HeuristicAgent::default(), 3).unwrap();
        assert!(t.simulate(kids[0]).unwrap().total > t.simulate(0).unwrap().total);
    }

    #[test]
    fn backpropagation_updates_path() {
        let mut t = tree();
        let a = t.expand(0, &HeuristicAgent::default(), 1).unwrap()[0];
        let b = t.expand(a, &HeuristicAgent::default(), 1).unwrap()[0];
        t.backpropagate(b, 0.6);
        for id in [0, a, b] {
            assert_eq!(t.nodes[id].visits, 1);
            assert!((t.nodes[id].total_score - 0.6).abs() < 1e-12);
        }
        assert_eq!(t.total_visits, 1);

        let mut t = tree();
        t.backpropagate(0, 0.4);
        t.backpropagate(0, 0.8);
        assert!((t.nodes[0].mean_score() - 0.6).abs() < 1e-12);
        assert_eq!(t.total_visits, 2);
    }

    #[test]
    fn single_rollout_budget() {
        let cfg = SearchConfig { budget: 1, ..Default::default() };
        let out = run_search(&attenuated_window(), &HeuristicAgent::default(), &SensorSetup::default(), &ScenarioDescriptor::default(), cfg)
            .unwrap();
        assert_eq!(out.trace.rollouts.len(), 1);
        assert_eq!(out.best_node, 0);
        assert_eq!(out.best_strategy, None);
    }

    #[test]
    fn infinite_epsilon_stops_after_patience() {
        let cfg = SearchConfig { epsilon_stop: f64::INFINITY, patience: 3, ..Default::default() };
        let out = run_search(&attenuated_window(), &HeuristicAgent::default(), &SensorSetup::default(), &ScenarioDescriptor::default(), cfg)
            .unwrap();
        assert_eq!(out.trace.rollouts.len(), 4);
        assert_eq!(out.trace.stop_reason, StopReason::EarlyStop);
    }

    #[test]
    fn search_recovers_free_space_exponent() {
        let out = run_search(
            &attenuated_window(),
            &HeuristicAgent::default(),
            &SensorSetup::default(),
            &ScenarioDescriptor::default(),
            SearchConfig { patience: usize::MAX, ..Default::default() },
        )
        .unwrap();
        let alpha = out.best_strategy.unwrap().alpha;
        assert!((1.8..=2.2).contains(&alpha), "alpha {alpha}");
        assert_eq!(out.tree.nodes[0].visits as usize, out.trace.rollouts.len());
    }

    #[test]
    fn greedy_search_keeps_exploiting_first_best() {
        let cfg = SearchConfig { exploration: 0.0, patience: usize::MAX, budget: 16, ..Default::default() };
        let out = run_search(&attenuated_window(), &HeuristicAgent::default(), &SensorSetup::default(), &ScenarioDescriptor::default(), cfg)
            .unwrap();
        let rollouts = &out.trace.rollouts;
        // Rollouts 1..=3 visit the three seed children in id order.
        let firsts: Vec<NodeId> = rollouts[1..4].iter().map(|r| r.path[1]).collect();
        assert_eq!(firsts, vec![1, 2, 3]);
        let mut best = 1;
        for r in &rollouts[2..4] {
            if r.score.total > rollouts[best].score.total {
                best = r.path[1];
            }
        }
        assert!(rollouts[4..].iter().all(|r| r.path[1] == best));
    }

    #[test]
    fn bookkeeping_invariants_hold() {
        let cfg = SearchConfig { patience: usize::MAX, ..Default::default() };
        let out = run_search(&attenuated_window(), &HeuristicAgent::default(), &SensorSetup::default(), &ScenarioDescriptor::default(), cfg)
            .unwrap();
        let t = &out.tree;
        let r = out.trace.rollouts.len() as u64;
        assert_eq!(t.nodes[0].visits, r);
        assert_eq!(t.total_visits, r);
        for n in &t.nodes {
            let child_visits: u64 = n.children.iter().map(|&c| t.nodes[c].visits).sum();
            assert!(n.visits >= child_visits);
            if n.visits > 0 {
                assert!((0.0..=1.0).contains(&n.mean_score()));
            }
        }
    }
}
