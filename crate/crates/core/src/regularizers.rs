//! Group-decomposable norms `Ω(β) = Σ_g Ω_g(β_g)` with their group dual
//! norms and proximal operators.
//!
//! Two kinds are supported: `ℓ1` (every group a singleton) and the group
//! `ℓ1,2` norm (Euclidean norm per group, summed over groups).

use std::fmt;
use std::str::FromStr;

use crate::dataio::SparseRow;
use crate::error::{Error, Result};

/// Partition of `{0, ..., n-1}` into groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupStructure {
    offsets: Vec<usize>,
    members: Vec<usize>,
    group_of: Vec<usize>,
}

impl GroupStructure {
    pub fn singletons(n: usize) -> Self {
        Self {
            offsets: (0..=n).collect(),
            members: (0..n).collect(),
            group_of: (0..n).collect(),
        }
    }

    /// Contiguous groups of the given sizes, in order.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidGroups("group sizes must be >= 1".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut group_of = Vec::new();
        for (g, &s) in sizes.iter().enumerate() {
            offsets.push(offsets[g] + s);
            group_of.extend(std::iter::repeat_n(g, s));
        }
        let n = *offsets.last().unwrap();
        Ok(Self {
            offsets,
            members: (0..n).collect(),
            group_of,
        })
    }

    /// Arbitrary (listed) groups; they must partition `{0, ..., n-1}`.
    pub fn from_lists(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut group_of = vec![usize::MAX; n];
        let mut offsets = vec![0];
        let mut members = Vec::with_capacity(n);
        for (g, list) in groups.into_iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidGroups(format!("group {g} is empty")));
            }
            for j in list {
                if j >= n {
                    return Err(Error::InvalidGroups(format!("index {j} out of range {n}")));
                }
                if group_of[j] != usize::MAX {
                    return Err(Error::InvalidGroups(format!("index {j} in two groups")));
                }
                group_of[j] = g;
                members.push(j);
            }
            offsets.push(members.len());
        }
        if members.len() != n {
            return Err(Error::InvalidGroups(format!(
                "groups cover {} of {n} features",
                members.len()
            )));
        }
        Ok(Self {
            offsets,
            members,
            group_of,
        })
    }

    /// Parse a whitespace-separated list of group sizes that must sum to `n`.
    pub fn parse_sizes(text: &str, n: usize) -> Result<Self> {
        let sizes = text
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::InvalidGroups(format!("bad group size {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let total: usize = sizes.iter().sum();
        if total != n {
            return Err(Error::InvalidGroups(format!(
                "group sizes sum to {total}, expected {n}"
            )));
        }
        Self::from_sizes(&sizes)
    }

    pub fn n_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.members[self.offsets[g]..self.offsets[g + 1]]
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.group_of[j]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn is_singletons(&self) -> bool {
        self.n_groups() == self.dim()
    }

    /// Keep the listed groups, laid out contiguously in the given order.
    ///
    /// Returns the new structure and, for each new position, the index it
    /// had in `self`.
    pub fn restrict(&self, keep: &[usize]) -> (GroupStructure, Vec<usize>) {
        let mut sizes = Vec::with_capacity(keep.len());
        let mut old_index = Vec::new();
        for &g in keep {
            let members = self.group(g);
            sizes.push(members.len());
            old_index.extend_from_slice(members);
        }
        let s = Self::from_sizes(&sizes).expect("restricted groups are nonempty");
        (s, old_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    L1,
    GroupL12,
}

impl RegKind {
    pub fn name(self) -> &'static str {
        match self {
            RegKind::L1 => "l1",
            RegKind::GroupL12 => "group-l12",
        }
    }
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(RegKind::L1),
            "group-l12" | "group_l12" => Ok(RegKind::GroupL12),
            other => Err(Error::InvalidParameter(format!(
                "unknown regularizer {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRegularizer {
    kind: RegKind,
    groups: GroupStructure,
}

fn soft_threshold(v: f64, tau: f64) -> f64 {
    let a = v.abs() - tau;
    if a > 0.0 {
        a.copysign(v)
    } else {
        0.0
    }
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

impl GroupRegularizer {
    pub fn new(kind: RegKind, groups: GroupStructure) -> Result<Self> {
        if kind == RegKind::L1 && !groups.is_singletons() {
            return Err(Error::InvalidGroups(
                "the l1 norm requires singleton groups".into(),
            ));
        }
        Ok(Self { kind, groups })
    }

    pub fn l1(n: usize) -> Self {
        Self {
            kind: RegKind::L1,
            groups: GroupStructure::singletons(n),
        }
    }

    pub fn group_l12(groups: GroupStructure) -> Self {
        Self {
            kind: RegKind::GroupL12,
            groups,
        }
    }

    pub fn kind(&self) -> RegKind {
        self.kind
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.groups.dim()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.n_groups()
    }

    /// `Ω_g(β_g)`, reading the group's coordinates out of the full vector.
    pub fn omega_group(&self, g: usize, beta: &[f64]) -> f64 {
        let idx = self.groups.group(g);
        match self.kind {
            RegKind::L1 => idx.iter().map(|&j| beta[j].abs()).sum(),
            RegKind::GroupL12 => l2(idx.iter().map(|&j| beta[j])),
        }
    }

    pub fn omega(&self, beta: &[f64]) -> f64 {
        (0..self.n_groups())
            .map(|g| self.omega_group(g, beta))
            .sum()
    }

    /// Dual of `Ω_g`, evaluated on a vector already restricted to group `g`.
    pub fn omega_dual_group(&self, v_g: &[f64]) -> f64 {
        match self.kind {
            RegKind::L1 => v_g.iter().fold(0.0, |m, x| m.max(x.abs())),
            RegKind::GroupL12 => l2(v_g.iter().copied()),
        }
    }

    /// `Ω_g^D(v_g)` for a full-length `v`.
    pub fn group_dual(&self, g: usize, v: &[f64]) -> f64 {
        let idx = self.groups.group(g);
        match self.kind {
            RegKind::L1 => idx.iter().fold(0.0, |m, &j| m.max(v[j].abs())),
            RegKind::GroupL12 => l2(idx.iter().map(|&j| v[j])),
        }
    }

    /// `Ω^D(v) = max_g Ω_g^D(v_g)`.
    pub fn omega_dual(&self, v: &[f64]) -> f64 {
        (0..self.n_groups())
            .map(|g| self.group_dual(g, v))
            .fold(0.0, f64::max)
    }

    /// `prox_{τΩ}(z)`: soft thresholding for `ℓ1`, block soft thresholding
    /// for groups.
    pub fn prox(&self, z: &[f64], tau: f64) -> Result<Vec<f64>> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox threshold must be >= 0, got {tau}"
            )));
        }
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let mut out = z.to_vec();
        self.prox_in_place(&mut out, tau);
        Ok(out)
    }

    /// In-place prox; `tau` must be nonnegative.
    pub fn prox_in_place(&self, z: &mut [f64], tau: f64) {
        debug_assert!(tau >= 0.0);
        if tau == 0.0 {
            return;
        }
        match self.kind {
            RegKind::L1 => z.iter_mut().for_each(|v| *v = soft_threshold(*v, tau)),
            RegKind::GroupL12 => {
                for g in 0..self.n_groups() {
                    let idx = self.groups.group(g);
                    if let [j] = idx {
                        z[*j] = soft_threshold(z[*j], tau);
                        continue;
                    }
                    let norm = l2(idx.iter().map(|&j| z[j]));
                    let scale = if norm > tau { 1.0 - tau / norm } else { 0.0 };
                    for &j in idx {
                        z[j] *= scale;
                    }
                }
            }
        }
    }

    /// Minimal-norm subgradient: `sign(β)` for `ℓ1`, `β_g/‖β_g‖` for
    /// groups, zero on zero blocks.
    pub fn subgradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; beta.len()];
        match self.kind {
            RegKind::L1 => {
                for (o, &b) in out.iter_mut().zip(beta) {
                    if b != 0.0 {
                        *o = b.signum();
                    }
                }
            }
            RegKind::GroupL12 => {
                for g in 0..self.n_groups() {
                    let idx = self.groups.group(g);
                    let norm = l2(idx.iter().map(|&j| beta[j]));
                    if norm > 0.0 {
                        for &j in idx {
                            out[j] = beta[j] / norm;
                        }
                    }
                }
            }
        }
        out
    }

    /// `(g, Ω_g^D(x_g))` for every group touched by a sparse row, in
    /// ascending group order.
    pub fn row_group_duals(&self, row: &SparseRow, out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self.kind {
            RegKind::L1 => {
                out.extend(row.iter().map(|(j, v)| (self.groups.group_of(j), v.abs())));
                if out.windows(2).any(|w| w[0].0 > w[1].0) {
                    out.sort_by_key(|p| p.0);
                }
            }
            RegKind::GroupL12 => {
                out.extend(row.iter().map(|(j, v)| (self.groups.group_of(j), v * v)));
                if out.windows(2).any(|w| w[0].0 > w[1].0) {
                    out.sort_by_key(|p| p.0);
                }
                // fold squared entries of each group, then take roots
                let mut w = 0;
                for r in 0..out.len() {
                    if w > 0 && out[w - 1].0 == out[r].0 {
                        out[w - 1].1 += out[r].1;
                    } else {
                        out[w] = out[r];
                        w += 1;
                    }
                }
                out.truncate(w);
                for p in out.iter_mut() {
                    p.1 = p.1.sqrt();
                }
            }
        }
    }

    /// Regularizer over the kept groups only, in compact coordinates.
    /// Also returns the old index of every new position.
    pub fn restrict(&self, keep: &[usize]) -> (GroupRegularizer, Vec<usize>) {
        let (groups, old_index) = self.groups.restrict(keep);
        (
            GroupRegularizer {
                kind: self.kind,
                groups,
            },
            old_index,
        )
    }
}
