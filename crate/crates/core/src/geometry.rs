//! Square-lattice geometries: the ten-site default, the published
//! parameter points, and the family of admissible candidate embeddings.

use std::collections::BTreeSet;

use crate::lattice::{Edge, LatticeSpec, RoleAssignment};
use crate::scalar::Scalar;

/// Row/column position of a site on the embedding grid.
pub type Cell = (usize, usize);

/// A set of grid cells with nearest-neighbor bonds and a role assignment.
///
/// Sites are numbered in row-major order of their cells. The mirror is the
/// reflection `col -> cols - 1 - col`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    pub roles: RoleAssignment,
    pub labels: Vec<String>,
}

impl Geometry {
    /// Builds a geometry from its cells and the cells holding `outcome1` and
    /// `setting_a`; the right party sits on their mirror images.
    ///
    /// Returns `None` when a role cell is missing or the mirror images collide.
    pub fn from_cells(
        id: impl Into<String>,
        rows: usize,
        cols: usize,
        cells: &[Cell],
        outcome1: Cell,
        setting_a: Cell,
    ) -> Option<Self> {
        let mut cells: Vec<Cell> = cells.to_vec();
        cells.sort_unstable();
        cells.dedup();
        let mirror = |(r, c): Cell| (r, cols - 1 - c);
        let site = |cell: Cell| cells.iter().position(|&x| x == cell);
        let o1 = site(outcome1)?;
        let sa = site(setting_a)?;
        let o2 = site(mirror(outcome1))?;
        let sb = site(mirror(setting_a))?;
        let named = [o1, o2, sa, sb];
        if named.iter().collect::<BTreeSet<_>>().len() != 4 {
            return None;
        }
        let roles = RoleAssignment::with_remaining_hidden(cells.len(), o1, o2, sa, sb);
        let mut labels = vec![String::new(); cells.len()];
        labels[o1] = "1".into();
        labels[o2] = "2".into();
        labels[sa] = "a".into();
        labels[sb] = "b".into();
        for (k, &h) in roles.hidden.iter().enumerate() {
            labels[h] = (k + 3).to_string();
        }
        Some(Self { id: id.into(), rows, cols, cells, roles, labels })
    }

    pub fn n_sites(&self) -> usize {
        self.cells.len()
    }

    /// Nearest-neighbor pairs `(i, j)` with `i < j`.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut bonds = Vec::new();
        for (i, &(ri, ci)) in self.cells.iter().enumerate() {
            for (j, &(rj, cj)) in self.cells.iter().enumerate().skip(i + 1) {
                if ri.abs_diff(rj) + ci.abs_diff(cj) == 1 {
                    bonds.push((i, j));
                }
            }
        }
        bonds
    }

    /// Site index of the mirror image of every site.
    ///
    /// # Panics
    ///
    /// If the cell set is not mirror symmetric.
    pub fn mirror_map(&self) -> Vec<usize> {
        self.cells
            .iter()
            .map(|&(r, c)| {
                self.cells.iter().position(|&x| x == (r, self.cols - 1 - c)).expect("mirror-symmetric cell set")
            })
            .collect()
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        let set: BTreeSet<Cell> = self.cells.iter().copied().collect();
        self.cells.iter().all(|&(r, c)| set.contains(&(r, self.cols - 1 - c)))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_sites();
        let bonds = self.bonds();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(i, j) in &bonds {
                let v = if i == u {
                    j
                } else if j == u {
                    i
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn site_of_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Uniform coupling on every bond with the given per-site fields.
    pub fn spec<T: Scalar>(&self, coupling: T, fields: Vec<T>, beta: T) -> LatticeSpec<T> {
        let edges = self.bonds().into_iter().map(|(i, j)| Edge::new(i, j, coupling)).collect();
        let mut spec = LatticeSpec::new(self.n_sites(), edges, fields, beta)
            .and_then(|s| s.with_roles(self.roles.clone()))
            .and_then(|s| s.with_labels(self.labels.clone()))
            .expect("geometry produces a well-formed lattice");
        if self.is_mirror_symmetric() {
            spec = spec.with_mirror_map(self.mirror_map()).expect("reflection is an involution");
        }
        spec
    }
}

/// Name of the bundled ten-site geometry.
pub const FIG1_DEFAULT: &str = "fig1-default";

/// The ten-site default geometry, a full 2×5 grid:
///
/// ```text
/// 1 - 3 - 4 - 5 - 2
/// |   |   |   |   |
/// 6 - a - 7 - b - 8
/// ```
///
/// Hidden sites 3..8 separate the left party {1, a} from the right party
/// {2, b}; the layout is mirror symmetric about the 4-7 column.
pub fn fig1_geometry() -> Geometry {
    let cells: Vec<Cell> = (0..2).flat_map(|r| (0..5).map(move |c| (r, c))).collect();
    let mut g = Geometry::from_cells(FIG1_DEFAULT, 2, 5, &cells, (0, 0), (1, 1)).expect("valid layout");
    g.labels = ["1", "3", "4", "5", "2", "6", "a", "7", "b", "8"].map(String::from).to_vec();
    g
}

/// The default geometry with uniform coupling and uniform field, β = 1.
pub fn fig1_default<T: Scalar>(coupling: f64, field: f64) -> LatticeSpec<T> {
    let g = fig1_geometry();
    g.spec(T::lit(coupling), vec![T::lit(field); g.n_sites()], T::one())
}

/// First published point: every field 1, coupling 1.4, β = 1.
pub const PUBLISHED_POINT_ONE: PublishedPoint = PublishedPoint { coupling: 1.4, target: 2.24 };
/// Second published point: coupling 2.0, fields per [`point_two_fields`].
pub const PUBLISHED_POINT_TWO: PublishedPoint = PublishedPoint { coupling: 2.0, target: 2.883 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedPoint {
    pub coupling: f64,
    pub target: f64,
}

/// Fields of the second published point keyed by site label. Site 7 is not
/// given a value in the source and is passed in as `h7`.
pub fn point_two_field(label: &str, h7: f64) -> Option<f64> {
    match label {
        "1" | "2" | "6" | "8" => Some(1.9),
        "3" | "4" | "5" | "a" | "b" => Some(0.4),
        "7" => Some(h7),
        _ => None,
    }
}

/// Field vector of the second published point on a geometry labelled with
/// 1, 2, a, b, 3..8.
pub fn point_two_fields(g: &Geometry, h7: f64) -> Option<Vec<f64>> {
    g.labels.iter().map(|l| point_two_field(l, h7)).collect()
}

/// Every way of attaching the hidden labels 3..8 to the hidden sites of `g`
/// that keeps the second point's fields mirror symmetric, deduplicated by
/// the resulting field vector. The first entry is `g`'s own labelling when
/// that labelling is admissible.
pub fn symmetric_relabelings(g: &Geometry, h7: f64) -> Vec<Geometry> {
    let hidden = &g.roles.hidden;
    if hidden.len() != 6 || !g.is_mirror_symmetric() {
        return Vec::new();
    }
    let mirror = g.mirror_map();
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut out = Vec::new();
    let mut consider = |labels: Vec<String>| {
        let candidate = Geometry { labels, ..g.clone() };
        let Some(fields) = point_two_fields(&candidate, h7) else { return };
        if (0..fields.len()).any(|s| fields[s] != fields[mirror[s]]) {
            return;
        }
        if seen.insert(fields.iter().map(|h| h.to_bits()).collect()) {
            out.push(candidate);
        }
    };
    consider(g.labels.clone());
    for perm in permutations(6) {
        let mut labels = g.labels.clone();
        for (k, &p) in perm.iter().enumerate() {
            labels[hidden[p]] = (k + 3).to_string();
        }
        consider(labels);
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                go(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Candidate ten-site geometries: mirror-symmetric connected embeddings in a
/// full 2×5 grid or a 3×4 grid with one mirrored pair of cells removed, with
/// the left party in the left half and the hidden sites separating the two
/// parties.
pub fn geometry_family() -> Vec<Geometry> {
    let mut family = vec![fig1_geometry()];
    for (rows, cols) in [(2, 5), (3, 4)] {
        let all: Vec<Cell> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
        let left: Vec<Cell> = all.iter().copied().filter(|&(_, c)| 2 * c + 1 < cols).collect();
        let removable: Vec<Option<Cell>> =
            if all.len() == 10 { vec![None] } else { left.iter().copied().map(Some).collect() };
        for removed in removable {
            let cells: Vec<Cell> = all
                .iter()
                .copied()
                .filter(|&(r, c)| removed.is_none_or(|(rr, rc)| !(r == rr && (c == rc || c == cols - 1 - rc))))
                .collect();
            if cells.len() != 10 {
                continue;
            }
            for &o1 in &left {
                for &sa in &left {
                    if o1 == sa {
                        continue;
                    }
                    let id = format!(
                        "grid{rows}x{cols}{}:o1=r{}c{}:a=r{}c{}",
                        removed.map(|(r, c)| format!("-r{r}c{c}")).unwrap_or_default(),
                        o1.0,
                        o1.1,
                        sa.0,
                        sa.1
                    );
                    let Some(g) = Geometry::from_cells(id, rows, cols, &cells, o1, sa) else {
                        continue;
                    };
                    if !g.is_connected() {
                        continue;
                    }
                    let spec = g.spec(1.0f64, vec![0.0; 10], 1.0);
                    if !spec.left_right_edges().is_empty() || !spec.separates(&g.roles.hidden) {
                        continue;
                    }
                    if family.iter().any(|f| f.cells == g.cells && f.roles == g.roles) {
                        continue;
                    }
                    family.push(g);
                }
            }
        }
    }
    family
}
