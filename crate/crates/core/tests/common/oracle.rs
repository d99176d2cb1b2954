//! Brute-force reference solvers used only by tests.
#![allow(dead_code)]

/// Dense problem data decoupled from the crate's own types.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl DenseProblem {
    pub fn from_triplets(
        c: &[f64],
        triplets: &[(usize, usize, f64)],
        b: &[f64],
        l: &[f64],
        u: &[f64],
    ) -> Self {
        let mut a = vec![vec![0.0; c.len()]; b.len()];
        for &(i, j, v) in triplets {
            a[i][j] = v;
        }
        DenseProblem { c: c.to_vec(), a, b: b.to_vec(), l: l.to_vec(), u: u.to_vec() }
    }
}

/// Solves `M x = rhs` by Gaussian elimination with partial pivoting.
pub fn solve_square(mut mat: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| mat[a][c].abs().total_cmp(&mat[b][c].abs()))?;
        if mat[p][c].abs() < 1e-12 {
            return None;
        }
        mat.swap(c, p);
        rhs.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = mat[r][c] / mat[c][c];
                for k in c..n {
                    mat[r][k] -= f * mat[c][k];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / mat[i][i]).collect())
}

/// LP optimum by enumerating every vertex of `{Ax ≤ b, l ≤ x ≤ u}`.
/// Bounds must be finite. Returns `None` when the polytope is empty.
pub fn lp_vertex_enum(p: &DenseProblem) -> Option<(f64, Vec<f64>)> {
    let n = p.c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = p.a.iter().cloned().zip(p.b.iter().cloned()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), p.u[j]));
        e[j] = -1.0;
        rows.push((e, -p.l[j]));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mat: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(mat, rhs) {
            let feasible = rows
                .iter()
                .all(|(a, b)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
            if feasible {
                let obj: f64 = p.c.iter().zip(&x).map(|(c, v)| c * v).sum();
                if best.as_ref().map_or(true, |(o, _)| obj < *o - 1e-12) {
                    best = Some((obj, x));
                }
            }
        }
        // next combination
        let k = rows.len();
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - n + i {
                idx[i] += 1;
                for t in i + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exhaustive optimum of a pure binary program `min cᵀx, Ax ≤ b, x ∈ {0,1}ⁿ`.
pub fn binary_enum(p: &DenseProblem) -> Option<(f64, Vec<f64>)> {
    let n = p.c.len();
    assert!(n <= 22);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        let ok = p
            .a
            .iter()
            .zip(&p.b)
            .all(|(a, b)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
        if ok {
            let mut obj = 0.0;
            for (c, v) in p.c.iter().zip(&x) {
                obj += c * v;
            }
            if best.as_ref().map_or(true, |(o, _)| obj < *o) {
                best = Some((obj, x));
            }
        }
    }
    best
}
