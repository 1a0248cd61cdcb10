//! TOML lattice spec files.
//!
//! ```toml
//! n_sites = 3
//! labels = ["1", "2", "x"]        # optional; sites may then be named by label
//! beta = 1.0
//! fields = [1.0, 1.0, 0.5]
//! edges = [[0, 2, 1.4], ["2", "x", 1.4]]
//! mirror_map = [1, 0, 2]          # optional
//!
//! [roles]                         # optional
//! outcome1 = "1"
//! outcome2 = "2"
//! settingA = 3
//! settingB = 4
//! hidden = ["x"]
//!
//! [quantum]                       # optional
//! coupling = 1.0
//! transverse = 0.5
//! beta = 1.0                      # defaults to the top-level beta
//! longitudinal = false            # add the per-site fields as a Z field
//! ```
//!
//! Reals are written with Rust's shortest round-trip formatting, so a
//! written spec parses back bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Edge, LatticeSpec, RoleAssignment};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum SiteRef {
    Index(usize),
    Label(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolesFile {
    outcome1: SiteRef,
    outcome2: SiteRef,
    #[serde(rename = "settingA", alias = "setting_a")]
    setting_a: SiteRef,
    #[serde(rename = "settingB", alias = "setting_b")]
    setting_b: SiteRef,
    hidden: Vec<SiteRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    n_sites: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    beta: f64,
    fields: Vec<f64>,
    edges: Vec<(SiteRef, SiteRef, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mirror_map: Option<Vec<SiteRef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roles: Option<RolesFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantum: Option<QuantumBlock>,
}

/// Parameters of the transverse-field model attached to a spec file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumBlock {
    #[serde(alias = "J")]
    pub coupling: f64,
    #[serde(alias = "h")]
    pub transverse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub longitudinal: bool,
}

/// A parsed spec file.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecDocument {
    pub spec: LatticeSpec<f64>,
    pub quantum: Option<QuantumBlock>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

pub fn parse_spec(text: &str) -> Result<SpecDocument> {
    let file: SpecFile = toml::from_str(text).map_err(|e| {
        let msg = e.message().trim().to_string();
        match e.span() {
            Some(span) => {
                let (line, col) = line_col(text, span.start);
                Error::Parse(format!("line {line}, column {col}: {msg}"))
            }
            None => Error::Parse(msg),
        }
    })?;
    let n = file.n_sites;
    let labels = file.labels.clone();
    let resolve = |r: &SiteRef| -> Result<usize> {
        match r {
            SiteRef::Index(i) if *i < n => Ok(*i),
            SiteRef::Index(i) => Err(Error::InvalidSpec(format!("site {i} out of range for {n} sites"))),
            SiteRef::Label(l) => labels
                .as_ref()
                .and_then(|ls| ls.iter().position(|x| x == l))
                .ok_or_else(|| Error::InvalidSpec(format!("unknown site label {l:?}"))),
        }
    };
    let edges =
        file.edges.iter().map(|(i, j, c)| Ok(Edge::new(resolve(i)?, resolve(j)?, *c))).collect::<Result<Vec<_>>>()?;
    let mut spec = LatticeSpec::new(n, edges, file.fields, file.beta)?;
    if let Some(ls) = file.labels {
        spec = spec.with_labels(ls)?;
    }
    if let Some(r) = &file.roles {
        let hidden = r.hidden.iter().map(&resolve).collect::<Result<Vec<_>>>()?;
        let roles = RoleAssignment::new(
            resolve(&r.outcome1)?,
            resolve(&r.outcome2)?,
            resolve(&r.setting_a)?,
            resolve(&r.setting_b)?,
            hidden,
        );
        spec = spec.with_roles(roles)?;
    }
    if let Some(m) = &file.mirror_map {
        spec = spec.with_mirror_map(m.iter().map(&resolve).collect::<Result<_>>()?)?;
    }
    if let Some(q) = &file.quantum {
        if !q.coupling.is_finite() || !q.transverse.is_finite() {
            return Err(Error::InvalidSpec("quantum couplings must be finite".into()));
        }
        if q.beta.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
            return Err(Error::InvalidSpec("quantum beta must be positive and finite".into()));
        }
    }
    Ok(SpecDocument { spec, quantum: file.quantum })
}

/// Serialises a spec; sites are written as indices.
pub fn write_spec(spec: &LatticeSpec<f64>, quantum: Option<&QuantumBlock>) -> String {
    let file = SpecFile {
        n_sites: spec.n_sites(),
        labels: spec.labels().map(<[String]>::to_vec),
        beta: spec.beta(),
        fields: spec.fields().to_vec(),
        edges: spec.edges().iter().map(|e| (SiteRef::Index(e.i), SiteRef::Index(e.j), e.coupling)).collect(),
        mirror_map: spec.mirror_map().map(|m| m.iter().map(|&s| SiteRef::Index(s)).collect()),
        roles: spec.roles().map(|r| RolesFile {
            outcome1: SiteRef::Index(r.outcome1),
            outcome2: SiteRef::Index(r.outcome2),
            setting_a: SiteRef::Index(r.setting_a),
            setting_b: SiteRef::Index(r.setting_b),
            hidden: r.hidden.iter().map(|&s| SiteRef::Index(s)).collect(),
        }),
        quantum: quantum.copied(),
    };
    toml::to_string(&file).expect("spec serialises")
}

/// Example specs shipped with the crate, by name.
pub const BUNDLED_SPECS: &[(&str, &str)] = &[
    ("fig1-default", include_str!("../specs/fig1-default.toml")),
    ("fig1-point-two", include_str!("../specs/fig1-point-two.toml")),
    ("fig1-j0-control", include_str!("../specs/fig1-j0-control.toml")),
    ("fig1-broken-1-2", include_str!("../specs/fig1-broken-1-2.toml")),
    ("fig1-broken-1-b", include_str!("../specs/fig1-broken-1-b.toml")),
    ("chain4-quantum", include_str!("../specs/chain4-quantum.toml")),
];

pub fn bundled_spec(name: &str) -> Option<&'static str> {
    BUNDLED_SPECS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
