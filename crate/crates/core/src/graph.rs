//! Communication topology and the hidden legitimate/malicious partition.
//!
//! Legitimate agents always occupy the low index range `0..n_legit` and
//! malicious agents the range `n_legit..n_agents`, so value vectors split
//! into `[x_L, x_M]` blocks without a permutation.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::trust::TrustModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("topology needs at least one legitimate agent")]
    NoLegitimateAgents,
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    OutOfRange(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("cycle recipe needs at least 3 legitimate agents, got {0}")]
    CycleTooSmall(usize),
    #[error("requested {requested} extra legitimate edges but only {available} non-cycle pairs exist")]
    InfeasibleExtraEdges { requested: usize, available: usize },
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("edge list parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Static undirected graph over `n_legit + n_malicious` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_legit: usize,
    n_malicious: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an edge list. Pairs are canonicalized to `(min, max)`;
    /// a pair given in both orientations counts as a duplicate.
    pub fn new(
        n_legit: usize,
        n_malicious: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        if n_legit == 0 {
            return Err(GraphError::NoLegitimateAgents);
        }
        let n = n_legit + n_malicious;
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::OutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
        }
        Ok(Self::from_canonical(n_legit, n_malicious, set))
    }

    fn from_canonical(n_legit: usize, n_malicious: usize, edges: BTreeSet<(usize, usize)>) -> Self {
        let n = n_legit + n_malicious;
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        Self {
            n_legit,
            n_malicious,
            edges,
            adjacency,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_legit + self.n_malicious
    }

    pub fn n_legit(&self) -> usize {
        self.n_legit
    }

    pub fn n_malicious(&self) -> usize {
        self.n_malicious
    }

    pub fn legitimate(&self) -> Range<usize> {
        0..self.n_legit
    }

    pub fn malicious(&self) -> Range<usize> {
        self.n_legit..self.n_agents()
    }

    pub fn is_legit(&self, agent: usize) -> bool {
        agent < self.n_legit
    }

    pub fn is_malicious(&self, agent: usize) -> bool {
        agent >= self.n_legit && agent < self.n_agents()
    }

    /// Sorted neighbor list `N_i`.
    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    pub fn legit_neighbors(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[agent].iter().copied().filter(|&j| j < self.n_legit)
    }

    pub fn malicious_neighbors(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[agent].iter().copied().filter(|&j| j >= self.n_legit)
    }

    /// `(|N_i^L|, |N_i^M|)`.
    pub fn neighbor_counts(&self, agent: usize) -> (usize, usize) {
        let legit = self.legit_neighbors(agent).count();
        (legit, self.adjacency[agent].len() - legit)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Canonical `(i, j)` pairs with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Breadth-first search restricted to legitimate-legitimate edges.
    pub fn legit_subgraph_connected(&self) -> bool {
        let mut seen = vec![false; self.n_legit];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.legit_neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == self.n_legit
    }

    pub fn every_legit_has_legit_neighbor(&self) -> bool {
        self.legitimate()
            .all(|i| self.legit_neighbors(i).next().is_some())
    }

    /// Plain-text edge list: a `n_legit n_malicious` header, then one
    /// canonical `i j` pair per line in sorted order.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n_legit, self.n_malicious);
        for (a, b) in self.edges() {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    /// Parses the edge-list format. Blank lines and `#` comments are skipped.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse = |f: Option<&str>| -> Result<usize, GraphError> {
                let f = f.ok_or_else(|| GraphError::Parse {
                    line: lineno + 1,
                    msg: "expected two integers".into(),
                })?;
                f.parse().map_err(|_| GraphError::Parse {
                    line: lineno + 1,
                    msg: format!("not an agent index: {f:?}"),
                })
            };
            let a = parse(fields.next())?;
            let b = parse(fields.next())?;
            if fields.next().is_some() {
                return Err(GraphError::Parse {
                    line: lineno + 1,
                    msg: "trailing fields".into(),
                });
            }
            match header {
                None => header = Some((a, b)),
                Some(_) => edges.push((a, b)),
            }
        }
        let (n_legit, n_malicious) = header.ok_or(GraphError::Parse {
            line: 0,
            msg: "missing header line".into(),
        })?;
        Self::new(n_legit, n_malicious, &edges)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_edge_list())
    }
}

/// Randomized experiment topology: a cycle over the legitimate agents plus
/// `extra_legit_edges` distinct random chords, then every malicious agent links
/// to each other agent independently with probability `malicious_edge_prob`.
/// A malicious agent left without a legitimate neighbor is wired to one
/// uniformly chosen legitimate agent.
///
/// RNG consumption order: chord sampling, then malicious agents ascending.
/// Agent `m` draws one Bernoulli per legitimate agent and per malicious agent
/// with a higher index (so every unordered pair is drawn once), followed by
/// its repair draw if needed.
pub fn generate_topology<R: Rng + ?Sized>(
    rng: &mut R,
    n_legit: usize,
    n_malicious: usize,
    extra_legit_edges: usize,
    malicious_edge_prob: f64,
) -> Result<Topology, GraphError> {
    if n_legit < 3 {
        return Err(GraphError::CycleTooSmall(n_legit));
    }
    if !(0.0..=1.0).contains(&malicious_edge_prob) {
        return Err(GraphError::BadProbability(malicious_edge_prob));
    }
    let mut edges = BTreeSet::new();
    for i in 0..n_legit {
        let j = (i + 1) % n_legit;
        edges.insert((i.min(j), i.max(j)));
    }

    let candidates: Vec<(usize, usize)> = (0..n_legit)
        .flat_map(|i| ((i + 1)..n_legit).map(move |j| (i, j)))
        .filter(|e| !edges.contains(e))
        .collect();
    if extra_legit_edges > candidates.len() {
        return Err(GraphError::InfeasibleExtraEdges {
            requested: extra_legit_edges,
            available: candidates.len(),
        });
    }
    edges.extend(candidates.choose_multiple(rng, extra_legit_edges).copied());

    let n = n_legit + n_malicious;
    for m in n_legit..n {
        for other in (0..n_legit).chain(m + 1..n) {
            if rng.random_bool(malicious_edge_prob) {
                edges.insert((m.min(other), m.max(other)));
            }
        }
        let has_legit = (0..n_legit).any(|l| edges.contains(&(l, m)));
        if !has_legit {
            let l = rng.random_range(0..n_legit);
            edges.insert((l, m));
        }
    }
    Ok(Topology::from_canonical(n_legit, n_malicious, edges))
}

/// Outcome of checking the standing assumptions on a topology/model pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub legit_subgraph_connected: bool,
    pub every_legit_has_legit_neighbor: bool,
    /// `d - c_m > 0` for every malicious agent.
    pub expectation_gap_positive: bool,
    /// `min_m (d - E[alpha_im])` using the per-step mixture expectation.
    /// `None` when the gap is not positive or there are no malicious agents.
    pub lambda: Option<f64>,
    /// `min_m (d - c_m)` using the configured attacked-step expectations.
    pub lambda_configured: Option<f64>,
    /// Malicious agents whose configured expectation violates the gap.
    pub gap_violations: Vec<usize>,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.legit_subgraph_connected
            && self.every_legit_has_legit_neighbor
            && self.expectation_gap_positive
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let yes_no = |b: bool| if b { "yes" } else { "NO" };
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.12}"));
        writeln!(f, "legit subgraph connected       {}", yes_no(self.legit_subgraph_connected))?;
        writeln!(f, "every legit has legit neighbor {}", yes_no(self.every_legit_has_legit_neighbor))?;
        writeln!(f, "expectation gap positive       {}", yes_no(self.expectation_gap_positive))?;
        if !self.gap_violations.is_empty() {
            writeln!(f, "gap violated by agents         {:?}", self.gap_violations)?;
        }
        writeln!(f, "lambda (effective)             {}", opt(self.lambda))?;
        write!(f, "lambda (configured c_m)        {}", opt(self.lambda_configured))
    }
}

pub fn check_assumptions(topology: &Topology, model: &TrustModel) -> AssumptionReport {
    let d = model.d();
    let gap_violations: Vec<usize> = topology
        .malicious()
        .filter(|&m| d - model.c(m) <= 0.0)
        .collect();
    let expectation_gap_positive = gap_violations.is_empty();
    let min_over = |f: &dyn Fn(usize) -> f64| {
        topology
            .malicious()
            .map(|m| d - f(m))
            .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))))
    };
    let (lambda, lambda_configured) = if expectation_gap_positive {
        (
            min_over(&|m| model.mixture_expectation(m)),
            min_over(&|m| model.c(m)),
        )
    } else {
        (None, None)
    };
    AssumptionReport {
        legit_subgraph_connected: topology.legit_subgraph_connected(),
        every_legit_has_legit_neighbor: topology.every_legit_has_legit_neighbor(),
        expectation_gap_positive,
        lambda,
        lambda_configured,
        gap_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_graph() {
        let t = Topology::new(2, 0, &[(0, 1)]).unwrap();
        assert_eq!(t.legitimate(), 0..2);
        assert!(t.malicious().is_empty());
        assert_eq!(t.edge_count(), 1);
    }

    #[test]
    fn path_with_malicious_endpoint() {
        let t = Topology::new(2, 1, &[(0, 1), (2, 1)]).unwrap();
        assert!(t.is_malicious(2));
        assert_eq!(t.neighbors(1), &[0, 2]);
        assert_eq!(t.neighbor_counts(1), (1, 1));
        assert_eq!(t.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(Topology::new(3, 0, &[(0, 0)]), Err(GraphError::SelfLoop(0)));
        assert_eq!(
            Topology::new(2, 0, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert!(matches!(
            Topology::new(2, 0, &[(0, 2)]),
            Err(GraphError::OutOfRange(0, 2, 2))
        ));
        assert_eq!(Topology::new(0, 2, &[]), Err(GraphError::NoLegitimateAgents));
    }

    #[test]
    fn pure_cycle_without_randomness() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = generate_topology(&mut rng, 3, 0, 0, 0.0).unwrap();
        assert_eq!(t.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn repair_rule_gives_exactly_one_legit_link() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = generate_topology(&mut rng, 4, 1, 0, 0.0).unwrap();
            assert_eq!(t.neighbors(4).len(), 1);
            assert!(t.is_legit(t.neighbors(4)[0]));
            assert_eq!(t.edge_count(), 5);
        }
    }

    #[test]
    fn study_recipe_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = generate_topology(&mut rng, 10, 15, 10, 0.2).unwrap();
        let legit_edges = t.edges().filter(|&(a, b)| b < 10 && a < 10).count();
        assert_eq!(legit_edges, 20);
        for m in t.malicious() {
            assert!(t.legit_neighbors(m).next().is_some());
        }
        for i in t.legitimate() {
            assert!(t.legit_neighbors(i).count() >= 2);
        }
    }

    #[test]
    fn infeasible_extra_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // K4 has 6 pairs, the cycle uses 4.
        assert_eq!(
            generate_topology(&mut rng, 4, 0, 3, 0.0),
            Err(GraphError::InfeasibleExtraEdges {
                requested: 3,
                available: 2
            })
        );
    }

    #[test]
    fn edge_list_round_trip() {
        let t = Topology::new(3, 2, &[(4, 0), (0, 1), (1, 2), (3, 4)]).unwrap();
        let text = t.to_edge_list();
        assert_eq!(text, "3 2\n0 1\n0 4\n1 2\n3 4\n");
        assert_eq!(Topology::from_edge_list(&text).unwrap(), t);
        assert!(matches!(
            Topology::from_edge_list("3 0\n0 x\n"),
            Err(GraphError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn disconnected_legit_pair() {
        let t = Topology::new(2, 0, &[]).unwrap();
        let model = TrustModel::uniform(2, (0.3, 1.0), vec![], 1.0).unwrap();
        let report = check_assumptions(&t, &model);
        assert!(!report.legit_subgraph_connected);
        assert!(!report.holds());
    }

    #[test]
    fn lambda_from_study_model() {
        let t = Topology::new(3, 2, &[(0, 1), (1, 2), (0, 3), (2, 4)]).unwrap();
        let model = TrustModel::uniform(3, (0.3, 1.0), vec![0.1, 0.45], 1.0).unwrap();
        let r = check_assumptions(&t, &model);
        assert!(r.expectation_gap_positive && r.holds());
        approx::assert_abs_diff_eq!(r.lambda.unwrap(), 0.65 - 0.45, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(r.lambda_configured.unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn zero_gap_is_flagged() {
        let t = Topology::new(2, 1, &[(0, 1), (1, 2)]).unwrap();
        let model = TrustModel::uniform(2, (0.0, 1.0), vec![0.5], 1.0).unwrap();
        let r = check_assumptions(&t, &model);
        assert!(!r.expectation_gap_positive);
        assert_eq!(r.gap_violations, vec![2]);
        assert_eq!(r.lambda, None);
    }
}
