//! Dyadic designs: who acts towards whom.
//!
//! A design is a set of individuals and a set of directed dyads `(actor,
//! partner)`. Each directed dyad belongs to an undirected pair; within a pair,
//! slot 0 is the direction in which the lower-indexed individual acts.

mod covariance;
mod identify;
pub(crate) mod io;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use covariance::{solve_hyperparameters, theoretical_covariance, Correlation, ReducedForm, Relation, SolvedHyperparameters};
pub use identify::{check_identification, IdentificationReport, ParameterStatus, PatternCounts};
pub use io::{read_design_csv, write_design_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn is_male(self) -> bool {
        self == Gender::Male
    }

    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" | "1" => Some(Gender::Male),
            "f" | "female" | "0" => Some(Gender::Female),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub group: Option<u32>,
    /// Block within the group for block designs.
    pub block: Option<u32>,
    pub gender: Option<Gender>,
    pub cluster: Option<u32>,
}

impl Individual {
    pub fn new(id: impl Into<String>) -> Self {
        Individual {
            id: id.into(),
            group: None,
            block: None,
            gender: None,
            cluster: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedDyad {
    pub actor: usize,
    pub partner: usize,
    pub pair: usize,
    /// 0 when `actor < partner`, 1 otherwise.
    pub slot: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    RoundRobin,
    Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadDesign {
    individuals: Vec<Individual>,
    dyads: Vec<DirectedDyad>,
    pairs: Vec<[usize; 2]>,
    pair_dyads: Vec<[Option<usize>; 2]>,
    dyad_index: HashMap<(usize, usize), usize>,
    id_index: HashMap<String, usize>,
}

impl DyadDesign {
    /// Builds a design from individuals and `(actor, partner)` index pairs.
    pub fn new(individuals: Vec<Individual>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut id_index = HashMap::with_capacity(individuals.len());
        for (i, ind) in individuals.iter().enumerate() {
            if id_index.insert(ind.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate individual id {}", ind.id)));
            }
        }
        let mut design = DyadDesign {
            individuals,
            dyads: Vec::with_capacity(edges.len()),
            pairs: Vec::new(),
            pair_dyads: Vec::new(),
            dyad_index: HashMap::with_capacity(edges.len()),
            id_index,
        };
        let mut pair_index: HashMap<(usize, usize), usize> = HashMap::new();
        for &(a, p) in edges {
            design.push_dyad(a, p, &mut pair_index)?;
        }
        Ok(design)
    }

    fn push_dyad(
        &mut self,
        actor: usize,
        partner: usize,
        pair_index: &mut HashMap<(usize, usize), usize>,
    ) -> Result<()> {
        let n = self.individuals.len();
        if actor >= n || partner >= n {
            return Err(Error::invalid(format!(
                "dyad ({actor}, {partner}) refers to an unknown individual"
            )));
        }
        if actor == partner {
            return Err(Error::invalid(format!(
                "individual {} cannot be paired with itself",
                self.individuals[actor].id
            )));
        }
        if self.dyad_index.contains_key(&(actor, partner)) {
            return Err(Error::invalid(format!(
                "duplicate directed dyad ({}, {})",
                self.individuals[actor].id, self.individuals[partner].id
            )));
        }
        let key = (actor.min(partner), actor.max(partner));
        let pair = *pair_index.entry(key).or_insert_with(|| {
            self.pairs.push([key.0, key.1]);
            self.pair_dyads.push([None, None]);
            self.pairs.len() - 1
        });
        let slot = u8::from(actor > partner);
        let index = self.dyads.len();
        self.dyads.push(DirectedDyad {
            actor,
            partner,
            pair,
            slot,
        });
        self.pair_dyads[pair][slot as usize] = Some(index);
        self.dyad_index.insert((actor, partner), index);
        Ok(())
    }

    /// Builds a design from external ids, creating individuals on first sight.
    pub fn from_id_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self> {
        let mut individuals = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut idx = Vec::with_capacity(edges.len());
        for (a, p) in edges {
            let mut get = |id: &str| {
                *seen.entry(id.to_string()).or_insert_with(|| {
                    individuals.push(Individual::new(id));
                    individuals.len() - 1
                })
            };
            let ai = get(a.as_ref());
            let pi = get(p.as_ref());
            idx.push((ai, pi));
        }
        DyadDesign::new(individuals, &idx)
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn individuals_mut(&mut self) -> &mut [Individual] {
        &mut self.individuals
    }

    pub fn dyads(&self) -> &[DirectedDyad] {
        &self.dyads
    }

    /// Undirected pairs as `[lower index, higher index]`.
    pub fn pairs(&self) -> &[[usize; 2]] {
        &self.pairs
    }

    /// Directed dyad indices of each pair by slot.
    pub fn pair_dyads(&self) -> &[[Option<usize>; 2]] {
        &self.pair_dyads
    }

    pub fn num_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn num_dyads(&self) -> usize {
        self.dyads.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn dyad_index(&self, actor: usize, partner: usize) -> Option<usize> {
        self.dyad_index.get(&(actor, partner)).copied()
    }

    /// Directed dyad in the opposite direction, if it exists.
    pub fn reverse_of(&self, dyad: usize) -> Option<usize> {
        let d = &self.dyads[dyad];
        self.pair_dyads[d.pair][1 - d.slot as usize]
    }

    pub fn individual_index(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    /// True when any individual carries a block label.
    pub fn has_blocks(&self) -> bool {
        self.individuals.iter().any(|i| i.block.is_some())
    }

    pub fn has_genders(&self) -> bool {
        !self.individuals.is_empty() && self.individuals.iter().all(|i| i.gender.is_some())
    }

    pub fn has_clusters(&self) -> bool {
        !self.individuals.is_empty() && self.individuals.iter().all(|i| i.cluster.is_some())
    }

    /// Distinct cluster labels, sorted, and the position of each individual's
    /// cluster in that list.
    pub fn cluster_index(&self) -> Option<(Vec<u32>, Vec<usize>)> {
        if !self.has_clusters() {
            return None;
        }
        let mut labels: Vec<u32> = self.individuals.iter().filter_map(|i| i.cluster).collect();
        labels.sort_unstable();
        labels.dedup();
        let pos = self
            .individuals
            .iter()
            .map(|i| labels.binary_search(&i.cluster.unwrap()).unwrap())
            .collect();
        Some((labels, pos))
    }

    /// Labels block 1 as male and block 0 as female, as in opposite-gender
    /// block designs.
    pub fn with_block_genders(mut self) -> Self {
        for ind in &mut self.individuals {
            ind.gender = ind.block.map(|b| if b == 1 { Gender::Male } else { Gender::Female });
        }
        self
    }

    /// Uses group labels as cluster labels.
    pub fn with_group_clusters(mut self) -> Self {
        for ind in &mut self.individuals {
            ind.cluster = ind.group;
        }
        self
    }

    /// Out- and in-neighbour lists per individual.
    pub(crate) fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let n = self.individuals.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for d in &self.dyads {
            out[d.actor].push(d.partner);
            inc[d.partner].push(d.actor);
        }
        (out, inc)
    }
}

fn numbered(range: std::ops::Range<usize>) -> Vec<Individual> {
    range.map(|i| Individual::new((i + 1).to_string())).collect()
}

/// Complete directed graph on `n` individuals.
pub fn make_round_robin(n: usize) -> Result<DyadDesign> {
    if n < 2 {
        return Err(Error::invalid("round-robin design needs at least 2 individuals"));
    }
    let mut edges = Vec::with_capacity(n * (n - 1));
    for a in 0..n {
        for p in 0..n {
            if a != p {
                edges.push((a, p));
            }
        }
    }
    DyadDesign::new(numbered(0..n), &edges)
}

/// Complete bipartite design between a block of `p` and a block of `q`.
pub fn make_block(p: usize, q: usize) -> Result<DyadDesign> {
    if p == 0 || q == 0 {
        return Err(Error::invalid("block design needs two non-empty blocks"));
    }
    let mut individuals = numbered(0..p + q);
    for (i, ind) in individuals.iter_mut().enumerate() {
        ind.block = Some(u32::from(i >= p));
    }
    let mut edges = Vec::with_capacity(2 * p * q);
    for a in 0..p {
        for b in p..p + q {
            edges.push((a, b));
            edges.push((b, a));
        }
    }
    DyadDesign::new(individuals, &edges)
}

/// Size of one group in a k-group design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupSize {
    RoundRobin(usize),
    Block(usize, usize),
}

/// Union of independent per-group designs, with group labels.
pub fn make_k_group(kind: DesignKind, sizes: &[GroupSize]) -> Result<DyadDesign> {
    if sizes.is_empty() {
        return Err(Error::invalid("k-group design needs at least one group"));
    }
    let mut individuals = Vec::new();
    let mut edges = Vec::new();
    for (g, size) in sizes.iter().enumerate() {
        let group = match (kind, *size) {
            (DesignKind::RoundRobin, GroupSize::RoundRobin(n)) => make_round_robin(n),
            (DesignKind::Block, GroupSize::Block(p, q)) => make_block(p, q),
            _ => Err(Error::invalid(format!(
                "group {} size {size:?} does not match design kind {kind:?}",
                g + 1
            ))),
        }
        .map_err(|e| Error::invalid(format!("group {}: {e}", g + 1)))?;
        let offset = individuals.len();
        for ind in group.individuals() {
            let mut ind = ind.clone();
            ind.id = (individuals.len() + 1).to_string();
            ind.group = Some(g as u32 + 1);
            individuals.push(ind);
        }
        edges.extend(group.dyads().iter().map(|d| (d.actor + offset, d.partner + offset)));
    }
    DyadDesign::new(individuals, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_counts() {
        for (n, d, u) in [(2, 2, 1), (4, 12, 6), (10, 90, 45)] {
            let design = make_round_robin(n).unwrap();
            assert_eq!(design.num_dyads(), d);
            assert_eq!(design.num_pairs(), u);
        }
        assert!(make_round_robin(1).is_err());
    }

    #[test]
    fn block_counts() {
        for (p, q) in [(5, 5), (1, 1), (3, 2)] {
            let design = make_block(p, q).unwrap();
            assert_eq!(design.num_pairs(), p * q);
            assert_eq!(design.num_dyads(), 2 * p * q);
            for d in design.dyads() {
                let ba = design.individuals()[d.actor].block;
                let bp = design.individuals()[d.partner].block;
                assert_ne!(ba, bp);
            }
        }
        assert!(make_block(0, 3).is_err());
    }

    #[test]
    fn k_group_designs() {
        let rr = make_k_group(DesignKind::RoundRobin, &[GroupSize::RoundRobin(3); 2]).unwrap();
        assert_eq!(rr.num_dyads(), 12);
        for d in rr.dyads() {
            assert_eq!(rr.individuals()[d.actor].group, rr.individuals()[d.partner].group);
        }
        let one = make_k_group(DesignKind::Block, &[GroupSize::Block(5, 5)]).unwrap();
        let plain = make_block(5, 5).unwrap();
        assert_eq!(one.num_dyads(), plain.num_dyads());
        assert_eq!(one.num_pairs(), plain.num_pairs());
        let sessions = make_k_group(DesignKind::Block, &[GroupSize::Block(5, 6); 21]).unwrap();
        assert_eq!(sessions.num_pairs(), 21 * 30);
        assert!(make_k_group(DesignKind::Block, &[GroupSize::RoundRobin(4)]).is_err());
        assert!(make_k_group(DesignKind::Block, &[]).is_err());
    }

    #[test]
    fn pair_bookkeeping() {
        let design = make_round_robin(3).unwrap();
        for (k, d) in design.dyads().iter().enumerate() {
            let rev = design.reverse_of(k).unwrap();
            let r = design.dyads()[rev];
            assert_eq!((r.actor, r.partner), (d.partner, d.actor));
            assert_eq!(r.pair, d.pair);
            assert_ne!(r.slot, d.slot);
        }
    }

    #[test]
    fn rejects_invalid_edges() {
        let ind = numbered(0..3);
        assert!(DyadDesign::new(ind.clone(), &[(0, 0)]).is_err());
        assert!(DyadDesign::new(ind.clone(), &[(0, 1), (0, 1)]).is_err());
        assert!(DyadDesign::new(ind, &[(0, 7)]).is_err());
    }
}
