//! Missingness graphs: which state features drive which missingness
//! indicators, and the learner assumptions that follow from the structure.
//!
//! Feature indices are zero-based in the API and one-based in the text form
//! (`S1`, `R1`, ...).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{
    constant_within_groups, indicators_independent, FeatureSpace, Indicator, MissingnessTable, ZERO_TOL,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MGraph {
    n: usize,
    always: BTreeSet<usize>,
    self_censor: BTreeSet<usize>,
    /// `(j, i)` for `S_j -> R_i`.
    state_edges: BTreeSet<(usize, usize)>,
    /// `(j, i)` for `R_j -> R_i`.
    indicator_edges: BTreeSet<(usize, usize)>,
}

/// Flags a learner reads off a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerAssumptions {
    pub indicators_independent: bool,
    pub self_censoring: Vec<usize>,
    pub simple_mar: bool,
}

impl MGraph {
    pub fn new(
        n: usize,
        always: impl IntoIterator<Item = usize>,
        self_censor: impl IntoIterator<Item = usize>,
        state_edges: impl IntoIterator<Item = (usize, usize)>,
        indicator_edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let g = Self {
            n,
            always: always.into_iter().collect(),
            self_censor: self_censor.into_iter().collect(),
            state_edges: state_edges.into_iter().collect(),
            indicator_edges: indicator_edges.into_iter().collect(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Graph without any edges: every indicator is purely stochastic.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, [], [], [], [])
    }

    /// Every `S -> R` and every forward `R -> R` edge among non-always features.
    pub fn complete(n: usize) -> Result<Self> {
        let state_edges = (0..n).flat_map(|i| (0..n).map(move |j| (j, i)));
        let indicator_edges = (0..n).flat_map(|i| (0..i).map(move |j| (j, i)));
        Self::new(n, [], 0..n, state_edges, indicator_edges)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidGraph("feature count must be positive".into()));
        }
        let check = |i: usize| {
            if i < self.n {
                Ok(())
            } else {
                Err(Error::InvalidGraph(format!("feature {} out of range 1..={}", i + 1, self.n)))
            }
        };
        for &i in self.always.iter().chain(&self.self_censor) {
            check(i)?;
        }
        for &(j, i) in &self.state_edges {
            check(j)?;
            check(i)?;
            if self.always.contains(&i) {
                return Err(Error::NoIndicatorNode(i));
            }
            if i == j && !self.self_censor.contains(&i) {
                return Err(Error::InvalidGraph(format!(
                    "edge S{0} -> R{0} requires a selfcensor {0} declaration",
                    i + 1
                )));
            }
        }
        for &(j, i) in &self.indicator_edges {
            check(j)?;
            check(i)?;
            for k in [i, j] {
                if self.always.contains(&k) {
                    return Err(Error::NoIndicatorNode(k));
                }
            }
        }
        for &i in &self.self_censor {
            if self.always.contains(&i) {
                return Err(Error::NoIndicatorNode(i));
            }
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut indegree = alloc::vec![0usize; self.n];
        for &(_, i) in &self.indicator_edges {
            indegree[i] += 1;
        }
        let mut ready: Vec<usize> = (0..self.n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(j) = ready.pop() {
            seen += 1;
            for &(_, i) in self.indicator_edges.range((j, 0)..(j + 1, 0)) {
                indegree[i] -= 1;
                if indegree[i] == 0 {
                    ready.push(i);
                }
            }
        }
        if seen == self.n {
            Ok(())
        } else {
            let on_cycle = (0..self.n).find(|&i| indegree[i] > 0).unwrap_or(0);
            Err(Error::GraphCycle(on_cycle + 1))
        }
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn always_observed(&self) -> &BTreeSet<usize> {
        &self.always
    }

    pub fn has_indicator(&self, i: usize) -> bool {
        i < self.n && !self.always.contains(&i)
    }

    pub fn state_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.state_edges
    }

    pub fn indicator_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.indicator_edges
    }

    /// S-node parents of `R_i`.
    pub fn parents_of_indicator(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.n {
            return Err(Error::InvalidGraph(format!("feature {} out of range", i + 1)));
        }
        if self.always.contains(&i) {
            return Err(Error::NoIndicatorNode(i));
        }
        Ok(self.state_edges.iter().filter(|&&(_, t)| t == i).map(|&(j, _)| j).collect())
    }

    /// `R_j` with an edge `R_j -> R_i`.
    pub fn indicator_parents(&self, i: usize) -> Vec<usize> {
        self.indicator_edges.iter().filter(|&&(_, t)| t == i).map(|&(j, _)| j).collect()
    }

    /// S-parents of `R_i` together with the S-parents of every R-ancestor of
    /// `R_i`: the state features the marginal of `R_i` may depend on.
    pub fn ancestral_state_parents(&self, i: usize) -> Result<BTreeSet<usize>> {
        let mut out: BTreeSet<usize> = self.parents_of_indicator(i)?.into_iter().collect();
        let mut stack = self.indicator_parents(i);
        let mut visited = BTreeSet::new();
        while let Some(j) = stack.pop() {
            if !visited.insert(j) {
                continue;
            }
            out.extend(self.parents_of_indicator(j)?);
            stack.extend(self.indicator_parents(j));
        }
        Ok(out)
    }

    pub fn implied_learner_assumptions(&self) -> LearnerAssumptions {
        LearnerAssumptions {
            indicators_independent: self.indicator_edges.is_empty(),
            self_censoring: self.state_edges.iter().filter(|(j, i)| i == j).map(|&(i, _)| i).collect(),
            simple_mar: self.state_edges.iter().all(|(j, _)| self.always.contains(j)),
        }
    }

    /// One-based text form accepted by [`parse_mgraph`].
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n {}", self.n);
        for i in &self.always {
            let _ = writeln!(out, "always {}", i + 1);
        }
        for i in &self.self_censor {
            let _ = writeln!(out, "selfcensor {}", i + 1);
        }
        for (j, i) in &self.state_edges {
            let _ = writeln!(out, "edge S{} R{}", j + 1, i + 1);
        }
        for (j, i) in &self.indicator_edges {
            let _ = writeln!(out, "edge R{} R{}", j + 1, i + 1);
        }
        out
    }
}

fn parse_index(token: &str, line: usize) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => Err(Error::Parse { line, message: format!("expected a feature index >= 1, got {token:?}") }),
    }
}

fn parse_node(token: &str, line: usize) -> Result<(char, usize)> {
    let mut chars = token.chars();
    match chars.next() {
        Some(kind @ ('S' | 'R')) => Ok((kind, parse_index(chars.as_str(), line)?)),
        _ => Err(Error::Parse { line, message: format!("expected S<i> or R<i>, got {token:?}") }),
    }
}

/// Parses the line-based graph format:
/// `n <count>`, `always <i>`, `selfcensor <i>`, `edge S<j> R<i>`, `edge R<j> R<i>`.
pub fn parse_mgraph(text: &str) -> Result<MGraph> {
    let mut n = None;
    let mut always = Vec::new();
    let mut self_censor = Vec::new();
    let mut state_edges = Vec::new();
    let mut indicator_edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let arity = |k: usize| {
            if tokens.len() == k {
                Ok(())
            } else {
                Err(Error::Parse { line, message: format!("{} expects {} argument(s)", tokens[0], k - 1) })
            }
        };
        match tokens[0] {
            "n" => {
                arity(2)?;
                let count = tokens[1]
                    .parse::<usize>()
                    .map_err(|_| Error::Parse { line, message: format!("bad feature count {:?}", tokens[1]) })?;
                n = Some(count);
            }
            "always" => {
                arity(2)?;
                always.push(parse_index(tokens[1], line)?);
            }
            "selfcensor" => {
                arity(2)?;
                self_censor.push(parse_index(tokens[1], line)?);
            }
            "edge" => {
                arity(3)?;
                let (from_kind, from) = parse_node(tokens[1], line)?;
                let (to_kind, to) = parse_node(tokens[2], line)?;
                if to_kind != 'R' {
                    return Err(Error::Parse { line, message: "edges must point into an R node".into() });
                }
                if from_kind == 'S' {
                    state_edges.push((from, to));
                } else {
                    indicator_edges.push((from, to));
                }
            }
            other => {
                return Err(Error::Parse { line, message: format!("unknown declaration {other:?}") });
            }
        }
    }
    let n = n.ok_or(Error::Parse { line: 0, message: "missing `n <count>` declaration".into() })?;
    MGraph::new(n, always, self_censor, state_edges, indicator_edges)
}

/// Whether an explicit table respects the graph: declared always-observed
/// features never go missing, each indicator's missing probability depends
/// only on its ancestral S-parents, and without R -> R edges the indicators
/// are independent given the state.
pub fn consistent_with(features: &FeatureSpace, table: &MissingnessTable, g: &MGraph) -> bool {
    if g.n_features() != features.len() || table.n_features() != features.len() {
        return false;
    }
    for &i in g.always_observed() {
        if table.states().any(|s| table.missing_probability(s, i) > ZERO_TOL) {
            return false;
        }
    }
    let mut parent_masks: BTreeMap<usize, Indicator> = BTreeMap::new();
    for i in (0..g.n_features()).filter(|&i| g.has_indicator(i)) {
        let Ok(parents) = g.ancestral_state_parents(i) else { return false };
        parent_masks.insert(i, Indicator::from_observed(parents));
    }
    for (&i, &mask) in &parent_masks {
        if !constant_within_groups(features, table, mask, |s| table.missing_probability(s, i)) {
            return false;
        }
    }
    !g.indicator_edges().is_empty() || indicators_independent(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parses_simple_mar_shape() {
        let g = parse_mgraph("n 2\nalways 2\nedge S2 R1").unwrap();
        assert_eq!(g.parents_of_indicator(0).unwrap(), vec![1]);
        assert!(matches!(g.parents_of_indicator(1), Err(Error::NoIndicatorNode(1))));
        assert_eq!(
            g.implied_learner_assumptions(),
            LearnerAssumptions { indicators_independent: true, self_censoring: vec![], simple_mar: true }
        );
    }

    #[test]
    fn parses_edgeless_graph() {
        let g = parse_mgraph("# nothing\nn 2\n").unwrap();
        assert!(g.parents_of_indicator(0).unwrap().is_empty());
        assert!(g.parents_of_indicator(1).unwrap().is_empty());
    }

    #[test]
    fn self_loop_needs_declaration() {
        assert!(matches!(parse_mgraph("n 2\nedge S1 R1"), Err(Error::InvalidGraph(_))));
        let g = parse_mgraph("n 2\nselfcensor 1\nedge S1 R1").unwrap();
        assert_eq!(g.implied_learner_assumptions().self_censoring, vec![0]);
    }

    #[test]
    fn rejects_cycles_and_bad_indices() {
        assert!(matches!(parse_mgraph("n 2\nedge R1 R2\nedge R2 R1"), Err(Error::GraphCycle(_))));
        assert!(matches!(parse_mgraph("n 2\nedge S3 R1"), Err(Error::InvalidGraph(_))));
        assert!(matches!(parse_mgraph("n 2\nedge S0 R1"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_mgraph("n 2\nbogus"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_mgraph("n 2\nalways 1\nedge S2 R1"), Err(Error::NoIndicatorNode(0))));
    }

    #[test]
    fn mnar_graph_parents() {
        let g = parse_mgraph("n 2\nedge S2 R1\nedge R2 R1").unwrap();
        assert_eq!(g.parents_of_indicator(0).unwrap(), vec![1]);
        assert!(g.has_indicator(1));
        let flags = g.implied_learner_assumptions();
        assert!(!flags.indicators_independent);
        assert!(!flags.simple_mar);
    }

    #[test]
    fn ancestral_parents_follow_indicator_edges() {
        let g = parse_mgraph("n 3\nedge S3 R2\nedge R2 R1").unwrap();
        assert_eq!(g.ancestral_state_parents(0).unwrap().into_iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn render_roundtrip() {
        let text = "n 3\nalways 3\nselfcensor 2\nedge S2 R2\nedge S3 R1\nedge R2 R1\n";
        let g = parse_mgraph(text).unwrap();
        assert_eq!(g.render(), text);
        assert_eq!(parse_mgraph(&g.render()).unwrap(), g);
    }

    fn fs() -> FeatureSpace {
        FeatureSpace::new(vec![2, 2]).unwrap()
    }

    fn bits(b: &str) -> Indicator {
        Indicator::parse_bits(b, 2).unwrap()
    }

    #[test]
    fn consistency_examples() {
        let fs = fs();
        let smar = MissingnessTable::from_fn(&fs, |s| {
            if fs.value(s, 1) == 0 {
                vec![(bits("11"), 1.0)]
            } else {
                vec![(bits("11"), 0.5), (bits("01"), 0.5)]
            }
        });
        let self_censoring = MissingnessTable::from_fn(&fs, |s| {
            if fs.value(s, 1) == 0 {
                vec![(bits("11"), 0.5), (bits("10"), 0.5)]
            } else {
                vec![(bits("11"), 0.1), (bits("10"), 0.9)]
            }
        });
        let g = parse_mgraph("n 2\nalways 2\nedge S2 R1").unwrap();
        assert!(consistent_with(&fs, &smar, &g));
        assert!(!consistent_with(&fs, &self_censoring, &g));
        let complete = MGraph::complete(2).unwrap();
        assert!(consistent_with(&fs, &smar, &complete));
        assert!(consistent_with(&fs, &self_censoring, &complete));
    }

    #[test]
    fn independence_is_required_without_indicator_edges() {
        let fs = fs();
        let coupled = MissingnessTable::constant(&fs, &[(bits("11"), 0.5), (bits("00"), 0.5)]);
        assert!(!consistent_with(&fs, &coupled, &MGraph::empty(2).unwrap()));
        let g = parse_mgraph("n 2\nedge R1 R2").unwrap();
        assert!(consistent_with(&fs, &coupled, &g));
    }
}
