//! Seeded generators for the four benchmark families, at desk scale.
//!
//! Every `≥` row and every equality is written in `≤` form, so all
//! instances share the canonical `Ax ≤ b` layout.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::MilpInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GenSpec {
    SetCover {
        rows: usize,
        cols: usize,
        density: f64,
        seed: u64,
    },
    CombAuction {
        items: usize,
        bids: usize,
        seed: u64,
    },
    FacilityLocation {
        facilities: usize,
        customers: usize,
        seed: u64,
    },
    MaxIndepSet {
        nodes: usize,
        edge_prob: f64,
        seed: u64,
    },
}

impl GenSpec {
    pub fn set_cover(seed: u64) -> Self {
        GenSpec::SetCover {
            rows: 30,
            cols: 40,
            density: 0.15,
            seed,
        }
    }

    pub fn comb_auction(seed: u64) -> Self {
        GenSpec::CombAuction {
            items: 20,
            bids: 40,
            seed,
        }
    }

    pub fn facility_location(seed: u64) -> Self {
        GenSpec::FacilityLocation {
            facilities: 5,
            customers: 10,
            seed,
        }
    }

    pub fn max_indep_set(seed: u64) -> Self {
        GenSpec::MaxIndepSet {
            nodes: 25,
            edge_prob: 0.15,
            seed,
        }
    }

    /// Desk-scale default for a family name (`setcover`, `cauctions`,
    /// `facilities`, `indset`).
    pub fn default_for(family: &str, seed: u64) -> Result<Self> {
        match family {
            "setcover" | "set_cover" => Ok(Self::set_cover(seed)),
            "cauctions" | "comb_auction" => Ok(Self::comb_auction(seed)),
            "facilities" | "facility_location" => Ok(Self::facility_location(seed)),
            "indset" | "max_indep_set" => Ok(Self::max_indep_set(seed)),
            other => Err(Error::Config(format!("unknown problem family '{other}'"))),
        }
    }

    pub fn generate(&self) -> Result<MilpInstance> {
        match *self {
            GenSpec::SetCover {
                rows,
                cols,
                density,
                seed,
            } => gen_set_cover(rows, cols, density, seed),
            GenSpec::CombAuction { items, bids, seed } => gen_comb_auction(items, bids, seed),
            GenSpec::FacilityLocation {
                facilities,
                customers,
                seed,
            } => gen_cap_facility(facilities, customers, seed),
            GenSpec::MaxIndepSet {
                nodes,
                edge_prob,
                seed,
            } => gen_max_ind_set(nodes, edge_prob, seed),
        }
    }
}

pub fn gen_set_cover(rows: usize, cols: usize, density: f64, seed: u64) -> Result<MilpInstance> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("set cover needs rows, cols >= 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density {density} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = MilpInstance::new(cols, rows);
    inst.objective = vec![1.0; cols];
    inst.upper = vec![1.0; cols];
    inst.integer_mask = vec![true; cols];
    inst.rhs = vec![-1.0; rows];
    for i in 0..rows {
        let mut members: Vec<usize> = (0..cols).filter(|_| rng.random_bool(density)).collect();
        if members.is_empty() {
            members.push(rng.random_range(0..cols));
        }
        for j in members {
            inst.matrix.push((i, j, -1.0));
        }
    }
    inst.label = format!("setcover-r{rows}-c{cols}-d{density}-s{seed}");
    Ok(inst)
}

pub fn gen_comb_auction(items: usize, bids: usize, seed: u64) -> Result<MilpInstance> {
    if items == 0 || bids == 0 {
        return Err(Error::Config("auction needs items, bids >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_bundle = items.min(4);
    let mut bundles = Vec::with_capacity(bids);
    let mut prices = Vec::with_capacity(bids);
    for _ in 0..bids {
        let size = rng.random_range(1..=max_bundle);
        let mut bundle = sample(&mut rng, items, size).into_vec();
        bundle.sort_unstable();
        prices.push(size as f64 * rng.random_range(0.5..1.5));
        bundles.push(bundle);
    }
    // one conflict row per item that appears in some bundle
    let mut bidders: Vec<Vec<usize>> = vec![Vec::new(); items];
    for (b, bundle) in bundles.iter().enumerate() {
        for &it in bundle {
            bidders[it].push(b);
        }
    }
    let used: Vec<&Vec<usize>> = bidders.iter().filter(|v| !v.is_empty()).collect();
    let mut inst = MilpInstance::new(bids, used.len());
    inst.objective = prices.iter().map(|p| -p).collect();
    inst.upper = vec![1.0; bids];
    inst.integer_mask = vec![true; bids];
    inst.rhs = vec![1.0; used.len()];
    for (row, bs) in used.iter().enumerate() {
        for &b in bs.iter() {
            inst.matrix.push((row, b, 1.0));
        }
    }
    inst.label = format!("cauctions-i{items}-b{bids}-s{seed}");
    Ok(inst)
}

/// Variables: `x_i` (open facility `i`, binary) first, then `y_ij` (fraction
/// of customer `j` served by `i`) at index `m + i·n + j`.
pub fn gen_cap_facility(facilities: usize, customers: usize, seed: u64) -> Result<MilpInstance> {
    if facilities == 0 || customers == 0 {
        return Err(Error::Config("facility location needs sizes >= 1".into()));
    }
    let (m, n) = (facilities, customers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cust: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let fac: Vec<(f64, f64)> = (0..m).map(|_| (rng.random(), rng.random())).collect();
    let demand: Vec<f64> = (0..n).map(|_| rng.random_range(5..=35) as f64).collect();
    let mut capacity: Vec<f64> = (0..m).map(|_| rng.random_range(10..=160) as f64).collect();
    let fixed: Vec<f64> = capacity
        .iter()
        .map(|u| rng.random_range(100.0..110.0) * u.sqrt() + rng.random_range(0.0..90.0))
        .collect();
    let total_demand: f64 = demand.iter().sum();
    let total_capacity: f64 = capacity.iter().sum();
    if total_capacity < total_demand {
        let scale = total_demand / total_capacity;
        for u in &mut capacity {
            *u = (*u * scale).ceil();
        }
    }

    let n_vars = m + m * n;
    let n_cons = 2 * n + m;
    let mut inst = MilpInstance::new(n_vars, n_cons);
    inst.upper = vec![1.0; n_vars];
    for i in 0..m {
        inst.integer_mask[i] = true;
        inst.objective[i] = fixed[i];
    }
    let y = |i: usize, j: usize| m + i * n + j;
    for i in 0..m {
        for j in 0..n {
            let d = ((fac[i].0 - cust[j].0).powi(2) + (fac[i].1 - cust[j].1).powi(2)).sqrt();
            inst.objective[y(i, j)] = d * 10.0 * demand[j];
        }
    }
    // Σ_i y_ij = 1 as a pair of ≤ rows
    for j in 0..n {
        inst.rhs[2 * j] = 1.0;
        inst.rhs[2 * j + 1] = -1.0;
        for i in 0..m {
            inst.matrix.push((2 * j, y(i, j), 1.0));
            inst.matrix.push((2 * j + 1, y(i, j), -1.0));
        }
    }
    // Σ_j d_j y_ij − u_i x_i ≤ 0
    for i in 0..m {
        let row = 2 * n + i;
        inst.rhs[row] = 0.0;
        inst.matrix.push((row, i, -capacity[i]));
        for j in 0..n {
            inst.matrix.push((row, y(i, j), demand[j]));
        }
    }
    inst.label = format!("facilities-f{m}-c{n}-s{seed}");
    Ok(inst)
}

pub fn gen_max_ind_set(nodes: usize, edge_prob: f64, seed: u64) -> Result<MilpInstance> {
    if nodes == 0 {
        return Err(Error::Config("independent set needs nodes >= 1".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in u + 1..nodes {
            if rng.random_bool(edge_prob) {
                edges.push((u, v));
            }
        }
    }
    let mut inst = MilpInstance::new(nodes, edges.len());
    inst.objective = vec![-1.0; nodes];
    inst.upper = vec![1.0; nodes];
    inst.integer_mask = vec![true; nodes];
    inst.rhs = vec![1.0; edges.len()];
    for (row, &(u, v)) in edges.iter().enumerate() {
        inst.matrix.push((row, u, 1.0));
        inst.matrix.push((row, v, 1.0));
    }
    inst.label = format!("indset-n{nodes}-p{edge_prob}-s{seed}");
    Ok(inst)
}

/// A point that satisfies every constraint of a generated instance, built
/// from the family structure rather than by solving.
pub fn constructive_feasible_point(spec: &GenSpec, inst: &MilpInstance) -> Vec<f64> {
    match *spec {
        GenSpec::SetCover { .. } => vec![1.0; inst.n_vars],
        GenSpec::CombAuction { .. } | GenSpec::MaxIndepSet { .. } => vec![0.0; inst.n_vars],
        GenSpec::FacilityLocation {
            facilities,
            customers,
            ..
        } => {
            // open everything, split each customer proportionally to capacity
            let caps: Vec<f64> = (0..facilities)
                .map(|i| {
                    let row = 2 * customers + i;
                    inst.matrix
                        .iter()
                        .find(|&&(r, c, _)| r == row && c == i)
                        .map(|e| -e.2)
                        .unwrap_or(0.0)
                })
                .collect();
            let total: f64 = caps.iter().sum();
            let mut x = vec![1.0; inst.n_vars];
            for i in 0..facilities {
                for j in 0..customers {
                    x[facilities + i * customers + j] = caps[i] / total;
                }
            }
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_specs(seed: u64) -> Vec<GenSpec> {
        vec![
            GenSpec::set_cover(seed),
            GenSpec::comb_auction(seed),
            GenSpec::facility_location(seed),
            GenSpec::max_indep_set(seed),
        ]
    }

    #[test]
    fn generated_instances_validate_and_are_feasible() {
        for seed in 0..20 {
            for spec in all_specs(seed) {
                let inst = spec.generate().unwrap();
                assert!(inst.validate().passed(), "{}", inst.label);
                let x = constructive_feasible_point(&spec, &inst);
                assert!(inst.max_violation(&x) <= 1e-9, "{}", inst.label);
            }
        }
    }

    #[test]
    fn identical_specs_give_identical_bytes() {
        for spec in all_specs(11) {
            let a = spec.generate().unwrap().to_json().unwrap();
            let b = spec.generate().unwrap().to_json().unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(
            GenSpec::set_cover(1).generate().unwrap(),
            GenSpec::set_cover(2).generate().unwrap()
        );
    }

    #[test]
    fn small_set_cover_structure() {
        let inst = gen_set_cover(3, 4, 0.5, 1).unwrap();
        assert_eq!(inst.n_vars, 4);
        assert_eq!(inst.n_cons, 3);
        assert!(inst.integer_mask.iter().all(|&b| b));
        assert!((0..4).all(|j| inst.is_binary(j)));
        for row in inst.rows() {
            assert!(!row.is_empty());
        }
        assert!(inst.label.contains("s1"));
    }

    #[test]
    fn full_density_rows_contain_every_column() {
        let inst = gen_set_cover(5, 6, 1.0, 3).unwrap();
        assert_eq!(inst.matrix.len(), 30);
    }

    #[test]
    fn auction_bundles_are_bounded() {
        let inst = gen_comb_auction(3, 10, 5).unwrap();
        assert!(inst.n_cons <= 3);
        let mut per_bid = vec![0usize; 10];
        for &(_, b, _) in &inst.matrix {
            per_bid[b] += 1;
        }
        assert!(per_bid.iter().all(|&k| (1..=3).contains(&k)));
        for j in 0..10 {
            let price = -inst.objective[j];
            let size = per_bid[j] as f64;
            assert!(price >= 0.5 * size && price <= 1.5 * size);
        }
    }

    #[test]
    fn independent_set_extremes() {
        let empty = gen_max_ind_set(6, 0.0, 1).unwrap();
        assert_eq!(empty.n_cons, 0);
        let complete = gen_max_ind_set(6, 1.0, 1).unwrap();
        assert_eq!(complete.n_cons, 15);
    }

    #[test]
    fn facility_layout() {
        let inst = gen_cap_facility(2, 3, 9).unwrap();
        assert_eq!(inst.n_vars, 2 + 6);
        assert_eq!(inst.n_cons, 2 * 3 + 2);
        assert!(inst.integer_mask[..2].iter().all(|&b| b));
        assert!(inst.integer_mask[2..].iter().all(|&b| !b));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(gen_set_cover(0, 3, 0.5, 0).is_err());
        assert!(gen_set_cover(3, 3, 0.0, 0).is_err());
        assert!(gen_max_ind_set(3, 1.5, 0).is_err());
        assert!(GenSpec::default_for("tsp", 0).is_err());
    }
}
