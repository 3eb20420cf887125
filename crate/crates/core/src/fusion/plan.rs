use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Number of residual blocks in the domain branch.
pub const DOMAIN_LAYERS: usize = 8;
/// Domain layers that receive RFIN injections, in order.
pub const RFIN_TARGETS: [usize; 3] = [3, 4, 5];
/// Domain layers that emit DKIN sources, in order.
pub const DKIN_SOURCES: [usize; 3] = [6, 7, 8];

/// One step of the interleaved two-branch execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// Run prior layers `from..=to` (1-based), applying any pending DKIN
    /// injections inside the range.
    PriorSegment { from: usize, to: usize },
    /// Run one domain layer, adding a pending RFIN injection if any.
    DomainLayer(usize),
    /// Project the output of prior layer `source` for domain layer `target`.
    Rfin { source: usize, target: usize },
    /// Project the output of domain layer `source` for prior layer `target`.
    Dkin { source: usize, target: usize },
    /// Neck, domain output projection and element-wise sum.
    FinalFuse,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Step::PriorSegment { from, to } => write!(f, "prior {from}..{to}"),
            Step::DomainLayer(j) => write!(f, "domain {j}"),
            Step::Rfin { source, target } => write!(f, "rfin prior {source} -> domain {target}"),
            Step::Dkin { source, target } => write!(f, "dkin domain {source} -> prior {target}"),
            Step::FinalFuse => write!(f, "final-fuse"),
        }
    }
}

/// Global-attention prior layers, which double as RFIN sources.
pub fn global_layers(m: usize) -> [usize; 3] {
    [m, 2 * m, 3 * m]
}

/// The first `count` of `(m,3), (2m,4), (3m,5)` as (prior source, domain target).
pub fn rfin_pairs(m: usize, count: usize) -> Result<Vec<(usize, usize)>> {
    if count > RFIN_TARGETS.len() {
        return Err(Error::Config(format!("at most {} RFIN modules exist, asked for {count}", RFIN_TARGETS.len())));
    }
    Ok(global_layers(m).into_iter().zip(RFIN_TARGETS).take(count).collect())
}

/// (domain source, prior target) pairs for the last `count` prior layers,
/// ascending by target. Sources cycle 8, 7, 6, 8, … from the last target
/// backwards.
pub fn dkin_pairs(m: usize, count: usize) -> Result<Vec<(usize, usize)>> {
    let layers = 4 * m;
    if count > layers {
        return Err(Error::Config(format!("{count} DKIN modules exceed the {layers} prior layers")));
    }
    let mut pairs: Vec<(usize, usize)> = (0..count)
        .map(|k| (DKIN_SOURCES[DKIN_SOURCES.len() - 1 - k % DKIN_SOURCES.len()], layers - k))
        .collect();
    pairs.reverse();
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Prior(usize),
    Domain(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Prior(i) => write!(f, "prior layer {i}"),
            Node::Domain(j) => write!(f, "domain layer {j}"),
        }
    }
}

/// Dependency edges: both layer chains plus every cross-branch connection.
fn edges(m: usize, rfin: &[(usize, usize)], dkin: &[(usize, usize)]) -> Vec<(Node, Node)> {
    let mut e = Vec::new();
    e.extend((1..4 * m).map(|i| (Node::Prior(i), Node::Prior(i + 1))));
    e.extend((1..DOMAIN_LAYERS).map(|j| (Node::Domain(j), Node::Domain(j + 1))));
    e.extend(rfin.iter().map(|&(i, j)| (Node::Prior(i), Node::Domain(j))));
    e.extend(dkin.iter().map(|&(j, i)| (Node::Domain(j), Node::Prior(i))));
    e
}

/// Returns a cycle as a node path if the dependency graph has one.
fn find_cycle(m: usize, rfin: &[(usize, usize)], dkin: &[(usize, usize)]) -> Option<Vec<Node>> {
    let edges = edges(m, rfin, dkin);
    let nodes: Vec<Node> = (1..=4 * m).map(Node::Prior).chain((1..=DOMAIN_LAYERS).map(Node::Domain)).collect();
    let succ = |n: Node| edges.iter().filter(move |(a, _)| *a == n).map(|&(_, b)| b);

    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = std::collections::BTreeMap::new();
    let mut stack: Vec<Node> = Vec::new();
    fn dfs<I: Iterator<Item = Node>>(
        n: Node,
        succ: &dyn Fn(Node) -> I,
        state: &mut std::collections::BTreeMap<Node, u8>,
        stack: &mut Vec<Node>,
    ) -> Option<Vec<Node>> {
        state.insert(n, 1);
        stack.push(n);
        for s in succ(n) {
            match state.get(&s).copied().unwrap_or(0) {
                1 => {
                    let start = stack.iter().position(|&x| x == s).unwrap();
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(s);
                    return Some(cycle);
                }
                0 => {
                    if let Some(c) = dfs(s, succ, state, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        state.insert(n, 2);
        None
    }
    for n in nodes {
        if state.get(&n).copied().unwrap_or(0) == 0 {
            if let Some(c) = dfs(n, &succ, &mut state, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Immutable execution schedule for a given `(m, rfin_count, dkin_count)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionPlan {
    pub m: usize,
    /// (prior source, domain target)
    pub rfin: Vec<(usize, usize)>,
    /// (domain source, prior target), ascending by target
    pub dkin: Vec<(usize, usize)>,
    pub steps: Vec<Step>,
}

struct Scheduler<'a> {
    rfin_targets: BTreeSet<usize>,
    dkin_targets: BTreeSet<usize>,
    rfin_done: BTreeSet<usize>,
    dkin_done: BTreeSet<usize>,
    prior_done: usize,
    domain_done: usize,
    steps: &'a mut Vec<Step>,
}

impl Scheduler<'_> {
    fn prior_to(&mut self, to: usize) -> Result<()> {
        if to <= self.prior_done {
            return Ok(());
        }
        let from = self.prior_done + 1;
        if let Some(k) = (from..=to).find(|k| self.dkin_targets.contains(k) && !self.dkin_done.contains(k)) {
            return Err(Error::Cycle(format!("prior layer {k} would run before its DKIN source is available")));
        }
        self.steps.push(Step::PriorSegment { from, to });
        self.prior_done = to;
        Ok(())
    }

    fn domain_to(&mut self, to: usize) -> Result<()> {
        while self.domain_done < to {
            let j = self.domain_done + 1;
            if self.rfin_targets.contains(&j) && !self.rfin_done.contains(&j) {
                return Err(Error::Cycle(format!("domain layer {j} would run before its RFIN source is available")));
            }
            self.steps.push(Step::DomainLayer(j));
            self.domain_done = j;
        }
        Ok(())
    }
}

impl FusionPlan {
    /// Canonical interleaving: each RFIN in order (prior up to the source,
    /// project, domain up to the target), then each DKIN by ascending target
    /// (domain up to the source, project, prior up to the target), then the
    /// remaining layers and the final fuse.
    pub fn build(m: usize, rfin_count: usize, dkin_count: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        let rfin = rfin_pairs(m, rfin_count)?;
        let dkin = dkin_pairs(m, dkin_count)?;
        if let Some(cycle) = find_cycle(m, &rfin, &dkin) {
            let path: Vec<String> = cycle.iter().map(Node::to_string).collect();
            return Err(Error::Cycle(format!(
                "m={m}, rfin={rfin_count}, dkin={dkin_count}: {}",
                path.join(" -> ")
            )));
        }
        let mut steps = Vec::new();
        let mut s = Scheduler {
            rfin_targets: rfin.iter().map(|p| p.1).collect(),
            dkin_targets: dkin.iter().map(|p| p.1).collect(),
            rfin_done: BTreeSet::new(),
            dkin_done: BTreeSet::new(),
            prior_done: 0,
            domain_done: 0,
            steps: &mut steps,
        };
        for &(source, target) in &rfin {
            s.prior_to(source)?;
            s.steps.push(Step::Rfin { source, target });
            s.rfin_done.insert(target);
            s.domain_to(target)?;
        }
        for &(source, target) in &dkin {
            s.domain_to(source)?;
            s.steps.push(Step::Dkin { source, target });
            s.dkin_done.insert(target);
            s.prior_to(target)?;
        }
        s.prior_to(4 * m)?;
        s.domain_to(DOMAIN_LAYERS)?;
        steps.push(Step::FinalFuse);
        let plan = Self { m, rfin, dkin, steps };
        plan.validate()?;
        Ok(plan)
    }

    /// Replay the steps tracking which outputs exist; any read of a missing
    /// output is an error.
    pub fn validate(&self) -> Result<()> {
        let mut prior_done = 0;
        let mut domain_done = 0;
        let mut rfin_ready = BTreeSet::new();
        let mut dkin_ready = BTreeSet::new();
        let missing = |what: String| Err(Error::Cycle(format!("plan reads {what} before it is produced")));
        for step in &self.steps {
            match *step {
                Step::PriorSegment { from, to } => {
                    if from != prior_done + 1 || to < from || to > 4 * self.m {
                        return missing(format!("prior segment {from}..{to} out of order"));
                    }
                    for &(_, target) in &self.dkin {
                        if (from..=to).contains(&target) && !dkin_ready.contains(&target) {
                            return missing(format!("DKIN injection for prior layer {target}"));
                        }
                    }
                    prior_done = to;
                }
                Step::DomainLayer(j) => {
                    if j != domain_done + 1 || j > DOMAIN_LAYERS {
                        return missing(format!("domain layer {j} out of order"));
                    }
                    if self.rfin.iter().any(|&(_, t)| t == j) && !rfin_ready.contains(&j) {
                        return missing(format!("RFIN injection for domain layer {j}"));
                    }
                    domain_done = j;
                }
                Step::Rfin { source, target } => {
                    if source > prior_done {
                        return missing(format!("prior layer {source} output"));
                    }
                    if target <= domain_done {
                        return missing(format!("RFIN for domain layer {target} after it ran"));
                    }
                    rfin_ready.insert(target);
                }
                Step::Dkin { source, target } => {
                    if source > domain_done {
                        return missing(format!("domain layer {source} output"));
                    }
                    if target <= prior_done {
                        return missing(format!("DKIN for prior layer {target} after it ran"));
                    }
                    dkin_ready.insert(target);
                }
                Step::FinalFuse => {
                    if prior_done != 4 * self.m || domain_done != DOMAIN_LAYERS {
                        return missing("final branch outputs".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// Prior layers that receive a DKIN injection.
    pub fn dkin_targets(&self) -> Vec<usize> {
        self.dkin.iter().map(|p| p.1).collect()
    }

    /// One step per line.
    pub fn trace(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&step.to_string());
            out.push('\n');
        }
        out
    }
}
