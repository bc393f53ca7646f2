//! The registered randomization mechanism and design-respecting draws.
//!
//! A [`Design`] declares how treatment was (or will be) assigned: Bernoulli
//! coin flips, a fixed treated count, fixed counts within blocks, or any of
//! those applied at the cluster level. The engine resamples assignment
//! vectors from the design, computes per-unit baseline treatment
//! probabilities, pairs draws with blockwise complements where the design
//! permits, and enumerates small designs exhaustively for exact reference
//! distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::rng::AuditRng;
use crate::table::{TableBuilder, UnitTable};

/// Randomization mechanism variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DesignVariant {
    /// Independent coin flips at a fixed rate.
    Bernoulli { rate: f64 },
    /// Exactly `m` of the `n` bound units treated, uniformly over subsets.
    Complete { m: usize },
    /// Independent fixed-count draws within each block.
    Stratified { per_block: BTreeMap<String, usize> },
    /// Inner design applied to the distinct clusters; all units in a cluster
    /// share the cluster's label.
    Cluster { inner: Box<Design> },
}

/// A declared randomization mechanism plus a free-text label for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    #[serde(flatten)]
    pub variant: DesignVariant,
    #[serde(default)]
    pub label: String,
}

impl Design {
    pub fn bernoulli(rate: f64) -> Design {
        Design {
            variant: DesignVariant::Bernoulli { rate },
            label: String::new(),
        }
    }

    pub fn complete(m: usize) -> Design {
        Design {
            variant: DesignVariant::Complete { m },
            label: String::new(),
        }
    }

    pub fn stratified(per_block: BTreeMap<String, usize>) -> Design {
        Design {
            variant: DesignVariant::Stratified { per_block },
            label: String::new(),
        }
    }

    pub fn cluster(inner: Design) -> Design {
        Design {
            variant: DesignVariant::Cluster {
                inner: Box::new(inner),
            },
            label: String::new(),
        }
    }

    /// Short human-readable description used in summaries.
    pub fn describe(&self) -> String {
        match &self.variant {
            DesignVariant::Bernoulli { rate } => format!("bernoulli(rate={rate})"),
            DesignVariant::Complete { m } => format!("complete(m={m})"),
            DesignVariant::Stratified { per_block } => {
                let parts: Vec<String> =
                    per_block.iter().map(|(b, m)| format!("{b}:{m}")).collect();
                format!("stratified({})", parts.join(","))
            }
            DesignVariant::Cluster { inner } => format!("cluster({})", inner.describe()),
        }
    }
}

/// A binary assignment aligned to unit order, with the seed that produced it
/// (absent for the observed assignment and for enumerated vectors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentVector {
    pub values: Vec<u8>,
    pub seed: Option<u64>,
}

impl AssignmentVector {
    pub fn treated_count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }
}

/// Check every design invariant against the bound unit table.
///
/// Violations are data, not faults: the empty vector means the design binds.
pub fn validate_design(design: &Design, units: &UnitTable) -> Vec<String> {
    let mut v = Vec::new();
    validate_into(design, units, &mut v, false);
    v
}

fn validate_into(design: &Design, units: &UnitTable, out: &mut Vec<String>, at_cluster_level: bool) {
    let n = units.n();
    match &design.variant {
        DesignVariant::Bernoulli { rate } => {
            if !(*rate > 0.0 && *rate < 1.0) {
                out.push(format!("bernoulli rate {rate} not strictly inside (0,1)"));
            }
        }
        DesignVariant::Complete { m } => {
            if *m == 0 {
                out.push("complete design has m = 0".into());
            }
            if *m >= n {
                out.push(format!("complete design has m = {m} >= n = {n}"));
            }
        }
        DesignVariant::Stratified { per_block } => {
            let mut block_sizes: BTreeMap<&str, usize> = BTreeMap::new();
            for (i, b) in units.blocks().iter().enumerate() {
                match b {
                    Some(b) => *block_sizes.entry(b.as_str()).or_insert(0) += 1,
                    None => out.push(format!(
                        "unit {} has no block-id under a stratified design",
                        units.id(i)
                    )),
                }
            }
            for (block, n_b) in &block_sizes {
                match per_block.get(*block) {
                    None => out.push(format!("block {block:?} has no per_block entry")),
                    Some(m_b) => {
                        if *m_b > *n_b {
                            out.push(format!(
                                "block {block:?} has m_b = {m_b} > n_b = {n_b}"
                            ));
                        }
                    }
                }
            }
            for block in per_block.keys() {
                if !block_sizes.contains_key(block.as_str()) {
                    out.push(format!("per_block entry {block:?} matches no unit"));
                }
            }
            let any_interior = block_sizes.iter().any(|(block, n_b)| {
                per_block
                    .get(*block)
                    .is_some_and(|m_b| *m_b > 0 && m_b < n_b)
            });
            if !any_interior && out.is_empty() {
                out.push("no block has 0 < m_b < n_b; the design is degenerate".into());
            }
        }
        DesignVariant::Cluster { inner } => {
            if at_cluster_level {
                out.push("cluster designs cannot nest: a unit has one cluster-id".into());
                return;
            }
            let mut missing = false;
            for (i, c) in units.clusters().iter().enumerate() {
                if c.is_none() {
                    out.push(format!(
                        "unit {} has no cluster-id under a cluster design",
                        units.id(i)
                    ));
                    missing = true;
                }
            }
            if missing {
                return;
            }
            // Blocks must be constant within a cluster for stratified inners.
            let mut cluster_block: BTreeMap<&str, &Option<String>> = BTreeMap::new();
            for i in 0..n {
                let c = units.clusters()[i].as_deref().unwrap();
                let b = &units.blocks()[i];
                match cluster_block.get(c) {
                    None => {
                        cluster_block.insert(c, b);
                    }
                    Some(prev) if *prev != b => {
                        out.push(format!("cluster {c:?} spans more than one block"));
                    }
                    _ => {}
                }
            }
            match cluster_table(units) {
                Ok(ct) => validate_into(inner, &ct, out, true),
                Err(e) => out.push(e.to_string()),
            }
        }
    }
}

/// One row per distinct cluster (first-appearance order): features are
/// per-cluster means, the block is the cluster's block, and labels are the
/// cluster's shared labels.
pub fn cluster_table(units: &UnitTable) -> Result<UnitTable> {
    let ids = units.cluster_ids();
    if ids.is_empty() {
        return Err(AuditError::Data("no cluster ids present".into()));
    }
    let d = units.d();
    let mut b = TableBuilder::default();
    let treated_in = units.treated();
    let mut treated: Vec<u8> = Vec::new();
    for cid in &ids {
        let members: Vec<usize> = (0..units.n())
            .filter(|&i| units.clusters()[i].as_deref() == Some(cid.as_str()))
            .collect();
        let mut mean = vec![0.0; d];
        for &i in &members {
            for (j, v) in units.feature_row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= members.len() as f64;
        }
        b.ids.push(cid.clone());
        b.blocks.push(units.blocks()[members[0]].clone());
        b.clusters.push(None);
        b.locations.push(units.locations()[members[0]]);
        b.features.push(mean);
        if let Some(t) = treated_in {
            let first = t[members[0]];
            for &i in &members {
                if t[i] != first {
                    return Err(AuditError::Data(format!(
                        "cluster {cid:?} mixes treated and control units"
                    )));
                }
            }
            treated.push(first);
        }
    }
    b.feature_names = units.feature_names().to_vec();
    b.treated = treated_in.map(|_| treated);
    b.build()
}

fn ensure_valid(design: &Design, units: &UnitTable) -> Result<()> {
    let violations = validate_design(design, units);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(AuditError::InvalidDesign(violations.join("; ")))
    }
}

/// Draw one assignment from the design. Deterministic in
/// `(design, units, seed)` and guaranteed to satisfy the design constraints.
pub fn draw_assignment(design: &Design, units: &UnitTable, seed: u64) -> Result<AssignmentVector> {
    ensure_valid(design, units)?;
    let values = draw_unchecked(design, units, seed);
    Ok(AssignmentVector {
        values,
        seed: Some(seed),
    })
}

fn draw_unchecked(design: &Design, units: &UnitTable, seed: u64) -> Vec<u8> {
    let n = units.n();
    let mut rng = AuditRng::new(seed);
    match &design.variant {
        DesignVariant::Bernoulli { rate } => (0..n)
            .map(|_| if rng.bernoulli(*rate) { 1 } else { 0 })
            .collect(),
        DesignVariant::Complete { m } => {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let mut values = vec![0u8; n];
            for &i in idx.iter().take(*m) {
                values[i] = 1;
            }
            values
        }
        DesignVariant::Stratified { per_block } => {
            let mut values = vec![0u8; n];
            // Blocks in sorted order so the stream layout is reproducible.
            for (block, m_b) in per_block {
                let mut members: Vec<usize> = (0..n)
                    .filter(|&i| units.blocks()[i].as_deref() == Some(block.as_str()))
                    .collect();
                rng.shuffle(&mut members);
                for &i in members.iter().take(*m_b) {
                    values[i] = 1;
                }
            }
            values
        }
        DesignVariant::Cluster { inner } => {
            let ct = cluster_table(units).expect("validated cluster design");
            let cluster_values = draw_unchecked(inner, &ct, seed);
            expand_cluster_values(units, &ct, &cluster_values)
        }
    }
}

fn expand_cluster_values(units: &UnitTable, ct: &UnitTable, cluster_values: &[u8]) -> Vec<u8> {
    let lookup: BTreeMap<&str, u8> = ct
        .ids()
        .iter()
        .zip(cluster_values)
        .map(|(id, &v)| (id.as_str(), v))
        .collect();
    units
        .clusters()
        .iter()
        .map(|c| lookup[c.as_deref().expect("validated cluster design")])
        .collect()
}

/// Per-unit baseline treatment probabilities q_i implied by the design.
pub fn baseline_probabilities(design: &Design, units: &UnitTable) -> Result<Vec<f64>> {
    ensure_valid(design, units)?;
    Ok(baseline_unchecked(design, units))
}

fn baseline_unchecked(design: &Design, units: &UnitTable) -> Vec<f64> {
    let n = units.n();
    match &design.variant {
        DesignVariant::Bernoulli { rate } => vec![*rate; n],
        DesignVariant::Complete { m } => vec![*m as f64 / n as f64; n],
        DesignVariant::Stratified { per_block } => {
            let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
            for b in units.blocks().iter().flatten() {
                *sizes.entry(b.as_str()).or_insert(0) += 1;
            }
            units
                .blocks()
                .iter()
                .map(|b| {
                    let b = b.as_deref().expect("validated stratified design");
                    per_block[b] as f64 / sizes[b] as f64
                })
                .collect()
        }
        DesignVariant::Cluster { inner } => {
            let ct = cluster_table(units).expect("validated cluster design");
            let q_c = baseline_unchecked(inner, &ct);
            let lookup: BTreeMap<&str, f64> = ct
                .ids()
                .iter()
                .zip(&q_c)
                .map(|(id, &q)| (id.as_str(), q))
                .collect();
            units
                .clusters()
                .iter()
                .map(|c| lookup[c.as_deref().expect("validated cluster design")])
                .collect()
        }
    }
}

/// Indices of units whose baseline probability is exactly 0 or 1. Their
/// log-likelihood terms are constant on both sides of the statistic, so the
/// scoring module drops them.
pub fn degenerate_units(q: &[f64]) -> Vec<usize> {
    q.iter()
        .enumerate()
        .filter(|(_, &qi)| qi == 0.0 || qi == 1.0)
        .map(|(i, _)| i)
        .collect()
}

/// Whether the blockwise complement map preserves the design's law, i.e.
/// every block treats exactly half its units (rate 1/2 for Bernoulli).
/// `Err` names the first violating block.
pub fn antithetic_applicable(design: &Design, units: &UnitTable) -> std::result::Result<(), String> {
    match &design.variant {
        DesignVariant::Bernoulli { rate } => {
            if *rate == 0.5 {
                Ok(())
            } else {
                Err(format!(
                    "bernoulli rate {rate} != 0.5, complement changes the law"
                ))
            }
        }
        DesignVariant::Complete { m } => {
            let n = units.n();
            if n == 2 * m {
                Ok(())
            } else {
                Err(format!("complete design treats {m} of {n}, not half"))
            }
        }
        DesignVariant::Stratified { per_block } => {
            let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
            for b in units.blocks().iter().flatten() {
                *sizes.entry(b.as_str()).or_insert(0) += 1;
            }
            for (block, m_b) in per_block {
                let n_b = sizes.get(block.as_str()).copied().unwrap_or(0);
                if n_b != 2 * m_b {
                    return Err(format!(
                        "block {block:?} treats {m_b} of {n_b}, not half"
                    ));
                }
            }
            Ok(())
        }
        DesignVariant::Cluster { inner } => {
            let ct = cluster_table(units).map_err(|e| e.to_string())?;
            antithetic_applicable(inner, &ct)
        }
    }
}

/// The blockwise complement (1 - A_i) of a design-respecting assignment, or
/// `None` when the complement would not itself satisfy the design.
pub fn antithetic_complement(
    design: &Design,
    units: &UnitTable,
    a: &AssignmentVector,
) -> Option<AssignmentVector> {
    if antithetic_applicable(design, units).is_err() {
        return None;
    }
    Some(AssignmentVector {
        values: a.values.iter().map(|&v| 1 - v).collect(),
        seed: a.seed,
    })
}

/// Result of exhaustive enumeration: either every assignment with positive
/// probability under the design, or the total count when it exceeds the cap.
#[derive(Debug, Clone, PartialEq)]
pub enum Enumeration {
    All(Vec<AssignmentVector>),
    TooLarge { total: u128 },
}

/// Number of assignments with positive probability, or `None` on overflow.
pub fn assignment_count(design: &Design, units: &UnitTable) -> Option<u128> {
    match &design.variant {
        DesignVariant::Bernoulli { .. } => {
            let n = units.n() as u32;
            if n >= 128 {
                None
            } else {
                Some(1u128 << n)
            }
        }
        DesignVariant::Complete { m } => binomial(units.n(), *m),
        DesignVariant::Stratified { per_block } => {
            let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
            for b in units.blocks().iter().flatten() {
                *sizes.entry(b.as_str()).or_insert(0) += 1;
            }
            let mut total: u128 = 1;
            for (block, m_b) in per_block {
                let c = binomial(sizes[block.as_str()], *m_b)?;
                total = total.checked_mul(c)?;
            }
            Some(total)
        }
        DesignVariant::Cluster { inner } => {
            let ct = cluster_table(units).ok()?;
            assignment_count(inner, &ct)
        }
    }
}

pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Exhaustive, duplicate-free enumeration of the design's support, capped.
pub fn enumerate_assignments(design: &Design, units: &UnitTable, cap: usize) -> Result<Enumeration> {
    ensure_valid(design, units)?;
    let total = assignment_count(design, units).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Ok(Enumeration::TooLarge { total });
    }
    let vectors = enumerate_unchecked(design, units);
    debug_assert_eq!(vectors.len() as u128, total);
    Ok(Enumeration::All(
        vectors
            .into_iter()
            .map(|values| AssignmentVector { values, seed: None })
            .collect(),
    ))
}

fn enumerate_unchecked(design: &Design, units: &UnitTable) -> Vec<Vec<u8>> {
    let n = units.n();
    match &design.variant {
        DesignVariant::Bernoulli { .. } => (0..(1u128 << n))
            .map(|mask| (0..n).map(|i| ((mask >> i) & 1) as u8).collect())
            .collect(),
        DesignVariant::Complete { m } => {
            let all: Vec<usize> = (0..n).collect();
            combinations(&all, *m)
                .into_iter()
                .map(|subset| {
                    let mut v = vec![0u8; n];
                    for i in subset {
                        v[i] = 1;
                    }
                    v
                })
                .collect()
        }
        DesignVariant::Stratified { per_block } => {
            let mut out: Vec<Vec<u8>> = vec![vec![0u8; n]];
            for (block, m_b) in per_block {
                let members: Vec<usize> = (0..n)
                    .filter(|&i| units.blocks()[i].as_deref() == Some(block.as_str()))
                    .collect();
                let choices = combinations(&members, *m_b);
                let mut next = Vec::with_capacity(out.len() * choices.len());
                for base in &out {
                    for choice in &choices {
                        let mut v = base.clone();
                        for &i in choice {
                            v[i] = 1;
                        }
                        next.push(v);
                    }
                }
                out = next;
            }
            out
        }
        DesignVariant::Cluster { inner } => {
            let ct = cluster_table(units).expect("validated cluster design");
            enumerate_unchecked(inner, &ct)
                .into_iter()
                .map(|cv| expand_cluster_values(units, &ct, &cv))
                .collect()
        }
    }
}

/// All k-subsets of `items`, lexicographic by position.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // Rightmost position that can still advance.
        let mut i = k as isize - 1;
        while i >= 0 && idx[i as usize] == i as usize + n - k {
            i -= 1;
        }
        if i < 0 {
            return out;
        }
        let i = i as usize;
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Check that an assignment satisfies every count constraint of the design.
pub fn satisfies_design(design: &Design, units: &UnitTable, values: &[u8]) -> bool {
    if values.len() != units.n() {
        return false;
    }
    match &design.variant {
        DesignVariant::Bernoulli { .. } => true,
        DesignVariant::Complete { m } => {
            values.iter().map(|&v| v as usize).sum::<usize>() == *m
        }
        DesignVariant::Stratified { per_block } => per_block.iter().all(|(block, m_b)| {
            let count: usize = (0..units.n())
                .filter(|&i| units.blocks()[i].as_deref() == Some(block.as_str()))
                .map(|i| values[i] as usize)
                .sum();
            count == *m_b
        }),
        DesignVariant::Cluster { inner } => {
            let ct = match cluster_table(units) {
                Ok(ct) => ct,
                Err(_) => return false,
            };
            // Per-cluster constancy plus the inner constraint at cluster level.
            let mut cluster_values = Vec::with_capacity(ct.n());
            for cid in ct.ids() {
                let mut first: Option<u8> = None;
                for i in 0..units.n() {
                    if units.clusters()[i].as_deref() == Some(cid.as_str()) {
                        match first {
                            None => first = Some(values[i]),
                            Some(f) if f != values[i] => return false,
                            _ => {}
                        }
                    }
                }
                cluster_values.push(first.unwrap_or(0));
            }
            satisfies_design(inner, &ct, &cluster_values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    pub(crate) fn plain_table(n: usize) -> UnitTable {
        TableBuilder {
            ids: (0..n).map(|i| format!("u{i}")).collect(),
            features: (0..n).map(|i| vec![i as f64]).collect(),
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn blocked_table(blocks: &[(&str, usize)]) -> UnitTable {
        let mut ids = Vec::new();
        let mut bcol = Vec::new();
        for (b, n_b) in blocks {
            for i in 0..*n_b {
                ids.push(format!("{b}_{i}"));
                bcol.push(Some(b.to_string()));
            }
        }
        let n = ids.len();
        TableBuilder {
            ids,
            blocks: bcol,
            features: (0..n).map(|i| vec![i as f64]).collect(),
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn clustered_table(clusters: &[(&str, usize)]) -> UnitTable {
        let mut ids = Vec::new();
        let mut ccol = Vec::new();
        for (c, n_c) in clusters {
            for i in 0..*n_c {
                ids.push(format!("{c}_{i}"));
                ccol.push(Some(c.to_string()));
            }
        }
        let n = ids.len();
        TableBuilder {
            ids,
            clusters: ccol,
            features: (0..n).map(|i| vec![i as f64]).collect(),
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn validate_complete_ok_and_violations() {
        let t = plain_table(4);
        assert!(validate_design(&Design::complete(2), &t).is_empty());
        let v = validate_design(&Design::complete(5), &t);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("m = 5 >= n = 4"), "{v:?}");
    }

    #[test]
    fn validate_stratified_missing_block() {
        let t = blocked_table(&[("B1", 2), ("B2", 2)]);
        let design = Design::stratified(BTreeMap::from([("B1".into(), 1)]));
        let v = validate_design(&design, &t);
        assert!(v.iter().any(|m| m.contains("B2")), "{v:?}");
    }

    #[test]
    fn validate_bernoulli_rate_bounds() {
        let t = plain_table(4);
        assert!(!validate_design(&Design::bernoulli(0.0), &t).is_empty());
        assert!(!validate_design(&Design::bernoulli(1.0), &t).is_empty());
        assert!(validate_design(&Design::bernoulli(0.5), &t).is_empty());
    }

    #[test]
    fn draw_complete_count_and_determinism() {
        let t = plain_table(4);
        let d = Design::complete(2);
        for seed in 0..50 {
            let a = draw_assignment(&d, &t, seed).unwrap();
            assert_eq!(a.treated_count(), 2);
        }
        let a = draw_assignment(&d, &t, 123).unwrap();
        let b = draw_assignment(&d, &t, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn draw_complete_uniform_over_subsets() {
        // 60,000 draws over the C(4,2)=6 vectors; each frequency within 1/6 +- 0.01.
        let t = plain_table(4);
        let d = Design::complete(2);
        let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        let draws = 60_000;
        for seed in 0..draws {
            let a = draw_assignment(&d, &t, derive_seed(97, seed)).unwrap();
            *counts.entry(a.values).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (_, c) in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn draw_cluster_treats_whole_clusters() {
        let t = clustered_table(&[("c1", 2), ("c2", 3), ("c3", 1)]);
        let d = Design::cluster(Design::complete(1));
        for seed in 0..20 {
            let a = draw_assignment(&d, &t, seed).unwrap();
            assert!(satisfies_design(&d, &t, &a.values));
            // Exactly one cluster fully treated.
            let treated_units = a.treated_count();
            assert!([1, 2, 3].contains(&treated_units));
        }
    }

    #[test]
    fn baseline_matches_paper_fraction() {
        let t = plain_table(55);
        let q = baseline_probabilities(&Design::complete(26), &t).unwrap();
        for qi in &q {
            assert!((qi - 26.0 / 55.0).abs() < 1e-15);
            assert!((qi - 0.4727).abs() < 1e-4);
        }
    }

    #[test]
    fn baseline_bernoulli_is_rate() {
        let t = plain_table(8);
        let q = baseline_probabilities(&Design::bernoulli(0.5), &t).unwrap();
        assert_eq!(q, vec![0.5; 8]);
    }

    #[test]
    fn baseline_degenerate_block_flagged() {
        let t = blocked_table(&[("B1", 2), ("B2", 2)]);
        let design = Design::stratified(BTreeMap::from([
            ("B1".to_string(), 1usize),
            ("B2".to_string(), 2usize),
        ]));
        let q = baseline_probabilities(&design, &t).unwrap();
        assert_eq!(q, vec![0.5, 0.5, 1.0, 1.0]);
        assert_eq!(degenerate_units(&q), vec![2, 3]);
    }

    #[test]
    fn complement_flip_and_involution() {
        let t = plain_table(4);
        let d = Design::complete(2);
        let a = AssignmentVector {
            values: vec![1, 1, 0, 0],
            seed: None,
        };
        let c = antithetic_complement(&d, &t, &a).unwrap();
        assert_eq!(c.values, vec![0, 0, 1, 1]);
        let cc = antithetic_complement(&d, &t, &c).unwrap();
        assert_eq!(cc, a);
    }

    #[test]
    fn complement_not_applicable_off_half() {
        let t = plain_table(4);
        let d = Design::complete(1);
        let a = draw_assignment(&d, &t, 1).unwrap();
        assert!(antithetic_complement(&d, &t, &a).is_none());
        assert!(antithetic_applicable(&d, &t).is_err());
    }

    #[test]
    fn complement_names_violating_block() {
        let t = blocked_table(&[("B1", 4), ("B2", 3)]);
        let design = Design::stratified(BTreeMap::from([
            ("B1".to_string(), 2usize),
            ("B2".to_string(), 1usize),
        ]));
        let err = antithetic_applicable(&design, &t).unwrap_err();
        assert!(err.contains("B2"), "{err}");
    }

    #[test]
    fn enumerate_complete_4_choose_2() {
        let t = plain_table(4);
        match enumerate_assignments(&Design::complete(2), &t, 100).unwrap() {
            Enumeration::All(v) => {
                assert_eq!(v.len(), 6);
                let mut distinct: Vec<_> = v.iter().map(|a| a.values.clone()).collect();
                distinct.sort();
                distinct.dedup();
                assert_eq!(distinct.len(), 6);
            }
            Enumeration::TooLarge { .. } => panic!("C(4,2) fits under cap"),
        }
    }

    #[test]
    fn enumerate_stratified_product() {
        let t = blocked_table(&[("B1", 2), ("B2", 2)]);
        let design = Design::stratified(BTreeMap::from([
            ("B1".to_string(), 1usize),
            ("B2".to_string(), 1usize),
        ]));
        match enumerate_assignments(&design, &t, 100).unwrap() {
            Enumeration::All(v) => assert_eq!(v.len(), 4),
            Enumeration::TooLarge { .. } => panic!("2x2 fits under cap"),
        }
    }

    #[test]
    fn enumerate_too_large() {
        let t = plain_table(10);
        match enumerate_assignments(&Design::complete(5), &t, 100).unwrap() {
            Enumeration::TooLarge { total } => assert_eq!(total, 252),
            Enumeration::All(_) => panic!("C(10,5)=252 exceeds cap 100"),
        }
    }

    #[test]
    fn baseline_equals_enumeration_frequency_exactly() {
        // Rational check: per-unit treated count over the enumeration equals
        // q_i * total without remainder.
        let t = blocked_table(&[("B1", 3), ("B2", 4)]);
        let design = Design::stratified(BTreeMap::from([
            ("B1".to_string(), 1usize),
            ("B2".to_string(), 2usize),
        ]));
        let q = baseline_probabilities(&design, &t).unwrap();
        let all = match enumerate_assignments(&design, &t, 10_000).unwrap() {
            Enumeration::All(v) => v,
            _ => panic!(),
        };
        let total = all.len();
        for i in 0..t.n() {
            let count: usize = all.iter().map(|a| a.values[i] as usize).sum();
            // q_i = count/total exactly: compare as integers.
            let m_b = (q[i] * if i < 3 { 3.0 } else { 4.0 }).round() as usize;
            let n_b = if i < 3 { 3 } else { 4 };
            assert_eq!(count * n_b, total * m_b);
        }
    }

    #[test]
    fn drawn_assignments_always_satisfy_their_design() {
        let designs: Vec<(Design, UnitTable)> = vec![
            (Design::bernoulli(0.3), plain_table(9)),
            (Design::complete(3), plain_table(9)),
            (
                Design::stratified(BTreeMap::from([
                    ("B1".to_string(), 1usize),
                    ("B2".to_string(), 2usize),
                ])),
                blocked_table(&[("B1", 3), ("B2", 5)]),
            ),
            (
                Design::cluster(Design::complete(2)),
                clustered_table(&[("c1", 2), ("c2", 1), ("c3", 3), ("c4", 2)]),
            ),
        ];
        for (design, table) in &designs {
            for seed in 0..1000 {
                let a = draw_assignment(design, table, seed).unwrap();
                assert!(
                    satisfies_design(design, table, &a.values),
                    "seed {seed} violates {:?}",
                    design.describe()
                );
            }
        }
    }

    #[test]
    fn design_json_round_trip() {
        let json = r#"{"variant":"complete","m":26,"label":"lottery"}"#;
        let d: Design = serde_json::from_str(json).unwrap();
        assert_eq!(d, {
            let mut c = Design::complete(26);
            c.label = "lottery".into();
            c
        });
        let back = serde_json::to_string(&d).unwrap();
        let d2: Design = serde_json::from_str(&back).unwrap();
        assert_eq!(d, d2);

        let nested = r#"{"variant":"cluster","inner":{"variant":"bernoulli","rate":0.5},"label":"village"}"#;
        let d3: Design = serde_json::from_str(nested).unwrap();
        assert!(matches!(d3.variant, DesignVariant::Cluster { .. }));
    }
}
