//! Lattice geometry, role assignment, spin configurations and the classical
//! Ising energy.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest lattice the exact engines will enumerate unless told otherwise.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// Spin on `site` in the configuration with the given index.
///
/// Bit `site` set means spin up.
#[inline]
pub fn spin_at(index: u64, site: usize) -> i8 {
    if (index >> site) & 1 == 1 {
        1
    } else {
        -1
    }
}

/// One assignment of ±1 to every site, stored as its index in `[0, 2^N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfiguration {
    n_sites: usize,
    index: u64,
}

impl SpinConfiguration {
    pub fn from_index(n_sites: usize, index: u64) -> Result<Self> {
        if n_sites > 63 {
            return Err(Error::InvalidAssignment(format!("{n_sites} sites do not fit a 64-bit index")));
        }
        if index >> n_sites != 0 {
            return Err(Error::InvalidAssignment(format!("index {index} out of range for {n_sites} sites")));
        }
        Ok(Self { n_sites, index })
    }

    pub fn from_values(values: &[i8]) -> Result<Self> {
        let mut index = 0u64;
        for (site, &v) in values.iter().enumerate() {
            match v {
                1 => index |= 1 << site,
                -1 => {}
                other => return Err(Error::InvalidAssignment(format!("spin value {other} at site {site} is not ±1"))),
            }
        }
        Self::from_index(values.len(), index)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn spin(&self, site: usize) -> i8 {
        debug_assert!(site < self.n_sites);
        spin_at(self.index, site)
    }

    pub fn values(&self) -> Vec<i8> {
        (0..self.n_sites).map(|s| self.spin(s)).collect()
    }

    /// Every spin reversed.
    pub fn flipped(&self) -> Self {
        let mask = if self.n_sites == 64 { u64::MAX } else { (1u64 << self.n_sites) - 1 };
        Self { n_sites: self.n_sites, index: !self.index & mask }
    }

    pub fn with_site_flipped(&self, site: usize) -> Self {
        Self { n_sites: self.n_sites, index: self.index ^ (1 << site) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub coupling: T,
}

impl<T> Edge<T> {
    pub fn new(i: usize, j: usize, coupling: T) -> Self {
        Self { i, j, coupling }
    }

    fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// Which site plays which part in the Bell-type experiment.
///
/// The left party owns `outcome1` and `setting_a`, the right party owns
/// `outcome2` and `setting_b`; every other site is hidden.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleAssignment {
    pub outcome1: usize,
    pub outcome2: usize,
    pub setting_a: usize,
    pub setting_b: usize,
    pub hidden: Vec<usize>,
}

impl RoleAssignment {
    pub fn new(outcome1: usize, outcome2: usize, setting_a: usize, setting_b: usize, hidden: Vec<usize>) -> Self {
        Self { outcome1, outcome2, setting_a, setting_b, hidden }
    }

    /// Roles for the given four sites with every remaining site hidden,
    /// in ascending order.
    pub fn with_remaining_hidden(
        n_sites: usize,
        outcome1: usize,
        outcome2: usize,
        setting_a: usize,
        setting_b: usize,
    ) -> Self {
        let named = [outcome1, outcome2, setting_a, setting_b];
        let hidden = (0..n_sites).filter(|s| !named.contains(s)).collect();
        Self::new(outcome1, outcome2, setting_a, setting_b, hidden)
    }

    pub fn left_group(&self) -> [usize; 2] {
        [self.outcome1, self.setting_a]
    }

    pub fn right_group(&self) -> [usize; 2] {
        [self.outcome2, self.setting_b]
    }

    fn check(&self, n_sites: usize) -> Result<()> {
        let mut seen = vec![false; n_sites];
        let all = [self.outcome1, self.outcome2, self.setting_a, self.setting_b]
            .into_iter()
            .chain(self.hidden.iter().copied());
        for site in all {
            if site >= n_sites {
                return Err(Error::InvalidSpec(format!("role site {site} out of range for {n_sites} sites")));
            }
            if seen[site] {
                return Err(Error::RoleOverlap { site });
            }
            seen[site] = true;
        }
        if let Some(site) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidSpec(format!("site {site} has no role")));
        }
        Ok(())
    }
}

/// A finite Ising lattice together with its role assignment.
///
/// Structural invariants are checked on construction, so every value of
/// this type describes a well-formed lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec<T> {
    n_sites: usize,
    edges: Vec<Edge<T>>,
    fields: Vec<T>,
    beta: T,
    roles: Option<RoleAssignment>,
    mirror_map: Option<Vec<usize>>,
    labels: Option<Vec<String>>,
    neighbors: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> LatticeSpec<T> {
    /// A lattice without a role assignment; see [`Self::with_roles`].
    pub fn new(n_sites: usize, edges: Vec<Edge<T>>, fields: Vec<T>, beta: T) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidSpec("a lattice needs at least one site".into()));
        }
        if n_sites > 63 {
            return Err(Error::InvalidSpec(format!("{n_sites} sites exceeds 63")));
        }
        if fields.len() != n_sites {
            return Err(Error::InvalidSpec(format!("{} fields given for {n_sites} sites", fields.len())));
        }
        if let Some(site) = fields.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidSpec(format!("field at site {site} is not finite")));
        }
        if !(beta.is_finite() && beta > T::zero()) {
            return Err(Error::InvalidSpec(format!("beta must be positive and finite, got {beta}")));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.i >= n_sites || e.j >= n_sites {
                return Err(Error::InvalidSpec(format!(
                    "edge ({}, {}) has an endpoint outside [0, {n_sites})",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidSpec(format!("self-loop at site {}", e.i)));
            }
            if !e.coupling.is_finite() {
                return Err(Error::InvalidSpec(format!("coupling on edge ({}, {}) is not finite", e.i, e.j)));
            }
            if !seen.insert(e.key()) {
                return Err(Error::InvalidSpec(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        let mut neighbors = vec![Vec::new(); n_sites];
        for e in &edges {
            neighbors[e.i].push((e.j, e.coupling));
            neighbors[e.j].push((e.i, e.coupling));
        }
        Ok(Self { n_sites, edges, fields, beta, roles: None, mirror_map: None, labels: None, neighbors })
    }

    pub fn with_roles(mut self, roles: RoleAssignment) -> Result<Self> {
        roles.check(self.n_sites)?;
        self.roles = Some(roles);
        Ok(self)
    }

    /// Attaches a left-right mirror map; it must be an involution on the sites.
    pub fn with_mirror_map(mut self, map: Vec<usize>) -> Result<Self> {
        if map.len() != self.n_sites {
            return Err(Error::InvalidSpec(format!("mirror map has {} entries for {} sites", map.len(), self.n_sites)));
        }
        for (site, &image) in map.iter().enumerate() {
            if image >= self.n_sites || map[image] != site {
                return Err(Error::InvalidSpec(format!("mirror map is not an involution at site {site}")));
            }
        }
        self.mirror_map = Some(map);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_sites {
            return Err(Error::InvalidSpec(format!("{} labels for {} sites", labels.len(), self.n_sites)));
        }
        let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if distinct.len() != labels.len() {
            return Err(Error::InvalidSpec("site labels must be distinct".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_beta(&self, beta: T) -> Result<Self> {
        self.rebuild(self.edges.clone(), self.fields.clone(), beta)
    }

    pub fn with_fields(&self, fields: Vec<T>) -> Result<Self> {
        self.rebuild(self.edges.clone(), fields, self.beta)
    }

    pub fn with_field_at(&self, site: usize, h: T) -> Result<Self> {
        let mut fields = self.fields.clone();
        *fields.get_mut(site).ok_or_else(|| Error::InvalidSpec(format!("no site {site}")))? = h;
        self.with_fields(fields)
    }

    /// Same geometry with every coupling set to `coupling`.
    pub fn with_uniform_coupling(&self, coupling: T) -> Result<Self> {
        let edges = self.edges.iter().map(|e| Edge::new(e.i, e.j, coupling)).collect();
        self.rebuild(edges, self.fields.clone(), self.beta)
    }

    pub fn with_edge(&self, i: usize, j: usize, coupling: T) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.push(Edge::new(i, j, coupling));
        self.rebuild(edges, self.fields.clone(), self.beta)
    }

    fn rebuild(&self, edges: Vec<Edge<T>>, fields: Vec<T>, beta: T) -> Result<Self> {
        let mut spec = Self::new(self.n_sites, edges, fields, beta)?;
        spec.roles = self.roles.clone();
        spec.mirror_map = self.mirror_map.clone();
        spec.labels = self.labels.clone();
        Ok(spec)
    }

    /// Converts every real to another scalar type.
    pub fn cast<U: Scalar>(&self) -> LatticeSpec<U> {
        let conv = |x: T| U::lit(x.as_f64());
        let edges = self.edges.iter().map(|e| Edge::new(e.i, e.j, conv(e.coupling))).collect();
        let fields = self.fields.iter().map(|&h| conv(h)).collect();
        let mut spec =
            LatticeSpec::new(self.n_sites, edges, fields, conv(self.beta)).expect("casting preserves structure");
        spec.roles = self.roles.clone();
        spec.mirror_map = self.mirror_map.clone();
        spec.labels = self.labels.clone();
        spec
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn fields(&self) -> &[T] {
        &self.fields
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn roles(&self) -> Option<&RoleAssignment> {
        self.roles.as_ref()
    }

    /// The role assignment, or an error for a lattice without one.
    pub fn require_roles(&self) -> Result<&RoleAssignment> {
        self.roles.as_ref().ok_or_else(|| Error::InvalidSpec("operation needs a role assignment".into()))
    }

    pub fn mirror_map(&self) -> Option<&[usize]> {
        self.mirror_map.as_deref()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Neighbors of `site` with the coupling on the connecting edge.
    pub fn neighbors(&self, site: usize) -> &[(usize, T)] {
        &self.neighbors[site]
    }

    /// Display name of a site: its label when present, otherwise its index.
    pub fn label(&self, site: usize) -> String {
        match &self.labels {
            Some(labels) => labels[site].clone(),
            None => site.to_string(),
        }
    }

    /// Resolves a label, falling back to a plain index when the spec is unlabelled.
    pub fn resolve_site(&self, name: &str) -> Option<usize> {
        match &self.labels {
            Some(labels) => labels.iter().position(|l| l == name),
            None => name.parse().ok().filter(|&s| s < self.n_sites),
        }
    }

    /// `-Σ J_ij σ_i σ_j - Σ h_i σ_i`.
    pub fn energy(&self, config: &SpinConfiguration) -> T {
        debug_assert_eq!(config.n_sites(), self.n_sites);
        self.energy_of_index(config.index())
    }

    pub fn energy_of_index(&self, index: u64) -> T {
        let mut e = T::zero();
        for edge in &self.edges {
            let s = spin_at(index, edge.i) * spin_at(index, edge.j);
            e = e - edge.coupling * T::spin(s);
        }
        for (site, &h) in self.fields.iter().enumerate() {
            e = e - h * T::spin(spin_at(index, site));
        }
        e
    }

    /// `Σ_j J_ij σ_j + h_i`, the effective field felt by `site`.
    pub fn local_field(&self, index: u64, site: usize) -> T {
        self.neighbors[site]
            .iter()
            .fold(self.fields[site], |acc, &(j, coupling)| acc + coupling * T::spin(spin_at(index, j)))
    }

    /// Energy change from flipping `site`, using only its neighborhood.
    pub fn flip_delta(&self, index: u64, site: usize) -> T {
        T::lit(2.0) * T::spin(spin_at(index, site)) * self.local_field(index, site)
    }

    /// All `2^N` configurations in ascending index order.
    pub fn enumerate(&self, cap: usize) -> Result<impl Iterator<Item = SpinConfiguration>> {
        if self.n_sites > cap {
            return Err(Error::CapExceeded { n_sites: self.n_sites, cap });
        }
        let n = self.n_sites;
        Ok((0..1u64 << n).map(move |index| SpinConfiguration { n_sites: n, index }))
    }

    /// Edges with one endpoint in the left group and the other in the right
    /// group. Empty for a lattice without roles.
    pub fn left_right_edges(&self) -> Vec<(usize, usize)> {
        let Some(roles) = &self.roles else { return Vec::new() };
        let left = roles.left_group();
        let right = roles.right_group();
        self.edges
            .iter()
            .filter(|e| (left.contains(&e.i) && right.contains(&e.j)) || (right.contains(&e.i) && left.contains(&e.j)))
            .map(|e| (e.i, e.j))
            .collect()
    }

    /// Whether removing `cut` disconnects the left group from the right
    /// group. Vacuously true without roles.
    pub fn separates(&self, cut: &[usize]) -> bool {
        let Some(roles) = &self.roles else { return true };
        let mut blocked = vec![false; self.n_sites];
        for &s in cut {
            blocked[s] = true;
        }
        let left = roles.left_group();
        let right = roles.right_group();
        let mut seen = vec![false; self.n_sites];
        let mut queue: VecDeque<usize> = left.iter().copied().filter(|&s| !blocked[s]).collect();
        for &s in &queue {
            seen[s] = true;
        }
        while let Some(u) = queue.pop_front() {
            if right.contains(&u) {
                return false;
            }
            for &(v, _) in &self.neighbors[u] {
                if !seen[v] && !blocked[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        true
    }

    /// Whether couplings and fields are invariant under the mirror map.
    /// `None` when no map is attached.
    pub fn is_mirror_symmetric(&self) -> Option<bool> {
        let map = self.mirror_map.as_ref()?;
        let couplings: HashMap<(usize, usize), T> = self.edges.iter().map(|e| (e.key(), e.coupling)).collect();
        let edges_ok = self.edges.iter().all(|e| {
            let image = Edge::new(map[e.i], map[e.j], e.coupling).key();
            couplings.get(&image) == Some(&e.coupling)
        });
        let fields_ok = (0..self.n_sites).all(|s| self.fields[s] == self.fields[map[s]]);
        Some(edges_ok && fields_ok)
    }

    /// Checks the enumeration cap and reports the locality structure.
    pub fn validate(&self, cap: usize) -> Result<ValidationReport> {
        if self.n_sites > cap {
            return Err(Error::CapExceeded { n_sites: self.n_sites, cap });
        }
        let locality = self.roles.as_ref().map(|roles| {
            let left_right_edges = self.left_right_edges();
            LocalityReport {
                bell_local: left_right_edges.is_empty(),
                hidden_separates: self.separates(&roles.hidden),
                left_right_edges,
                roles_mirrored: self
                    .mirror_map
                    .as_ref()
                    .map(|m| m[roles.outcome1] == roles.outcome2 && m[roles.setting_a] == roles.setting_b),
            }
        });
        Ok(ValidationReport { n_sites: self.n_sites, locality, mirror_symmetric: self.is_mirror_symmetric() })
    }
}

/// Outcome of [`LatticeSpec::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub n_sites: usize,
    /// Present when the spec carries a role assignment.
    pub locality: Option<LocalityReport>,
    pub mirror_symmetric: Option<bool>,
}

impl ValidationReport {
    pub fn is_bell_local(&self) -> bool {
        self.locality.as_ref().is_some_and(|l| l.bell_local)
    }

    pub fn hidden_separates(&self) -> bool {
        self.locality.as_ref().is_some_and(|l| l.hidden_separates)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalityReport {
    /// No edge joins the left group to the right group.
    pub bell_local: bool,
    /// The hidden sites form a cut between the left and right groups.
    pub hidden_separates: bool,
    pub left_right_edges: Vec<(usize, usize)>,
    pub roles_mirrored: Option<bool>,
}
