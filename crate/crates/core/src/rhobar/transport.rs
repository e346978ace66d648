//! Transportation simplex for small optimal-transport problems.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynsys::{format_word, Symbol};
use crate::error::{Error, Result};
use crate::measures::EmpiricalBlockMeasure;

/// Largest number of positive-mass atoms per side solved exactly.
pub const SUPPORT_CAP: usize = 512;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 32;
const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportSolution {
    pub value: f64,
    /// Positive entries `(i, j, weight)` of the optimal plan, row-major.
    pub plan: Vec<(usize, usize, f64)>,
    /// Dual potentials: `cost[i][j] >= u[i] + v[j]`, with equality on the plan.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `|primal - dual|`.
    pub duality_gap: f64,
    /// Smallest reduced cost `cost[i][j] - u[i] - v[j]`.
    pub min_reduced_cost: f64,
    /// Largest deviation of the plan marginals from `mu` and `nu`.
    pub marginal_residuals: (f64, f64),
    pub pivots: usize,
}

fn check_vector(name: &str, w: &[f64]) -> Result<f64> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::argument(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > MASS_TOL {
        return Err(Error::argument(format!("{name} sums to {s}, not 1")));
    }
    Ok(s)
}

/// Optimal transport between `mu` and `nu` under `cost`.
pub fn transport_lp(cost: &[Vec<f64>], mu: &[f64], nu: &[f64]) -> Result<TransportSolution> {
    if cost.len() != mu.len() || cost.iter().any(|row| row.len() != nu.len()) {
        return Err(Error::argument(format!(
            "cost matrix does not match marginals of sizes {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::argument("marginals are empty"));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::argument("cost has negative or non-finite entries"));
    }
    let smu = check_vector("mu", mu)?;
    let snu = check_vector("nu", nu)?;
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu[j] > 0.0).collect();
    if rows.len() > SUPPORT_CAP || cols.len() > SUPPORT_CAP {
        return Err(Error::Capacity(format!(
            "supports of sizes {} and {} exceed the cap {SUPPORT_CAP}",
            rows.len(),
            cols.len()
        )));
    }
    let a: Vec<f64> = rows.iter().map(|&i| mu[i] / smu).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu[j] / snu).collect();
    let c: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect();
    let scale = c.iter().flatten().copied().fold(1.0, f64::max);

    let mut simplex = Simplex::northwest(&a, &b);
    let pivots = simplex.optimize(&c, scale)?;
    let (ur, vr) = simplex.duals(&c);

    // Duals on zero-mass atoms: the largest feasible values.
    let mut v = vec![0.0; nu.len()];
    let mut u = vec![0.0; mu.len()];
    for (jj, &j) in cols.iter().enumerate() {
        v[j] = vr[jj];
    }
    for (ii, &i) in rows.iter().enumerate() {
        u[i] = ur[ii];
    }
    for j in (0..nu.len()).filter(|&j| nu[j] == 0.0) {
        v[j] = rows.iter().map(|&i| cost[i][j] - u[i]).fold(f64::INFINITY, f64::min);
    }
    for i in (0..mu.len()).filter(|&i| mu[i] == 0.0) {
        u[i] = (0..nu.len()).map(|j| cost[i][j] - v[j]).fold(f64::INFINITY, f64::min);
    }

    let mut plan = Vec::new();
    let mut row_mass = vec![0.0; mu.len()];
    let mut col_mass = vec![0.0; nu.len()];
    for (ii, &i) in rows.iter().enumerate() {
        for (jj, &j) in cols.iter().enumerate() {
            let x = simplex.x[ii][jj];
            if x > 0.0 {
                plan.push((i, j, x));
                row_mass[i] += x;
                col_mass[j] += x;
            }
        }
    }
    let value: f64 = plan.iter().map(|&(i, j, x)| cost[i][j] * x).sum();
    let dual: f64 =
        (0..mu.len()).map(|i| mu[i] * u[i]).sum::<f64>() + (0..nu.len()).map(|j| nu[j] * v[j]).sum::<f64>();
    let min_reduced_cost = (0..mu.len())
        .flat_map(|i| (0..nu.len()).map(move |j| (i, j)))
        .map(|(i, j)| cost[i][j] - u[i] - v[j])
        .fold(f64::INFINITY, f64::min);
    let residual =
        |target: &[f64], got: &[f64]| target.iter().zip(got).map(|(t, g)| (t - g).abs()).fold(0.0, f64::max);
    let solution = TransportSolution {
        value,
        duality_gap: (value - dual).abs(),
        min_reduced_cost,
        marginal_residuals: (residual(mu, &row_mass), residual(nu, &col_mass)),
        plan,
        u,
        v,
        pivots,
    };
    let tol = 1e-9 * scale;
    if solution.min_reduced_cost < -tol || solution.duality_gap > tol {
        return Err(Error::DataQuality(format!(
            "transport optimality not certified: min reduced cost {}, duality gap {}",
            solution.min_reduced_cost, solution.duality_gap
        )));
    }
    Ok(solution)
}

/// A basic feasible solution with its spanning-tree basis.
struct Simplex {
    x: Vec<Vec<f64>>,
    basic: Vec<Vec<bool>>,
    m: usize,
    n: usize,
}

impl Simplex {
    /// Northwest-corner start with exactly `m + n - 1` basic cells.
    fn northwest(a: &[f64], b: &[f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut x = vec![vec![0.0; n]; m];
        let mut basic = vec![vec![false; n]; m];
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let q = ra[i].min(rb[j]);
            x[i][j] = q;
            basic[i][j] = true;
            ra[i] -= q;
            rb[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { x, basic, m, n }
    }

    fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut row_cells = vec![Vec::new(); self.m];
        let mut col_cells = vec![Vec::new(); self.n];
        for (i, row) in self.basic.iter().enumerate() {
            for (j, _) in row.iter().enumerate().filter(|(_, &b)| b) {
                row_cells[i].push(j);
                col_cells[j].push(i);
            }
        }
        (row_cells, col_cells)
    }

    /// Potentials with `u[0] = 0` and zero reduced cost on basic cells.
    fn duals(&self, c: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (row_cells, col_cells) = self.adjacency();
        let mut u = vec![f64::NAN; self.m];
        let mut v = vec![f64::NAN; self.n];
        u[0] = 0.0;
        // Nodes: rows 0..m, columns m..m+n.
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            if node < self.m {
                for &j in &row_cells[node] {
                    if v[j].is_nan() {
                        v[j] = c[node][j] - u[node];
                        queue.push_back(self.m + j);
                    }
                }
            } else {
                let j = node - self.m;
                for &i in &col_cells[j] {
                    if u[i].is_nan() {
                        u[i] = c[i][j] - v[j];
                        queue.push_back(i);
                    }
                }
            }
        }
        (u, v)
    }

    /// Basic cells on the tree path from row `i` to column `j`, starting at row `i`.
    fn path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let (row_cells, col_cells) = self.adjacency();
        let total = self.m + self.n;
        let mut parent = vec![usize::MAX; total];
        parent[i] = i;
        let mut queue = VecDeque::from([i]);
        let target = self.m + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            let next: Vec<usize> = if node < self.m {
                row_cells[node].iter().map(|&jj| self.m + jj).collect()
            } else {
                col_cells[node - self.m].clone()
            };
            for nb in next {
                if parent[nb] == usize::MAX {
                    parent[nb] = node;
                    queue.push_back(nb);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != i {
            let p = parent[node];
            let cell = if node < self.m { (node, p - self.m) } else { (p, node - self.m) };
            cells.push(cell);
            node = p;
        }
        // Cells from the column-j end back to row i.
        cells
    }

    fn optimize(&mut self, c: &[Vec<f64>], scale: f64) -> Result<usize> {
        let eps = 1e-12 * scale;
        let limit = 50 * (self.m + self.n).pow(2) + 1000;
        let mut degenerate = 0;
        for pivots in 0..limit {
            let (u, v) = self.duals(c);
            let bland = degenerate >= DEGENERATE_LIMIT;
            let mut entering = None;
            let mut best = -eps;
            'scan: for i in 0..self.m {
                for j in 0..self.n {
                    if self.basic[i][j] {
                        continue;
                    }
                    let r = c[i][j] - u[i] - v[j];
                    if r < best {
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = r;
                    }
                }
            }
            let Some((ei, ej)) = entering else {
                return Ok(pivots);
            };
            let path = self.path(ei, ej);
            // Signs alternate -, +, -, ... starting next to the entering cell.
            let minus = path.iter().step_by(2);
            let (li, lj) = *minus
                .min_by(|p, q| self.x[p.0][p.1].total_cmp(&self.x[q.0][q.1]).then(p.cmp(q)))
                .expect("cycle has a leaving cell");
            let theta = self.x[li][lj];
            for (t, &(pi, pj)) in path.iter().enumerate() {
                if t % 2 == 0 {
                    self.x[pi][pj] -= theta;
                } else {
                    self.x[pi][pj] += theta;
                }
            }
            self.x[ei][ej] = theta;
            self.x[li][lj] = 0.0;
            self.basic[ei][ej] = true;
            self.basic[li][lj] = false;
            degenerate = if theta == 0.0 { degenerate + 1 } else { 0 };
        }
        Err(Error::Capacity(format!("transport simplex exceeded {limit} pivots")))
    }
}

/// Weighted blocks on one side of a transport problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Atoms {
    pub blocks: Vec<Vec<Symbol>>,
    pub weights: Vec<f64>,
}

impl Atoms {
    pub fn from_measure(m: &EmpiricalBlockMeasure) -> Self {
        let (blocks, weights) = m.atoms().into_iter().unzip();
        Self { blocks, weights }
    }
}

/// Finite projection of a joining: block pairs with their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    pub support: Vec<(String, String, f64)>,
    pub marginal_residuals: (f64, f64),
    /// Whether low-probability blocks were merged into an `*` atom.
    pub coarsened: bool,
}

impl CouplingPlan {
    pub fn total_weight(&self) -> f64 {
        self.support.iter().map(|s| s.2).sum()
    }
}

const OTHER: &str = "*";

/// Keeps the `SUPPORT_CAP - 1` heaviest atoms and merges the rest.
fn coarsen(atoms: &Atoms) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..atoms.blocks.len()).collect();
    order.sort_by(|&p, &q| {
        atoms.weights[q].total_cmp(&atoms.weights[p]).then(atoms.blocks[p].cmp(&atoms.blocks[q]))
    });
    let rest = order.split_off(SUPPORT_CAP - 1);
    order.sort_unstable();
    (order, rest)
}

/// Transport value between two block distributions. Supports beyond the cap
/// are coarsened with the cheapest member cost for the merged atom, so the
/// result stays a lower bound of the exact value.
pub fn transport_lower_bound(
    a: &Atoms,
    b: &Atoms,
    cost: &dyn Fn(&[Symbol], &[Symbol]) -> f64,
) -> Result<(f64, CouplingPlan)> {
    let split = |atoms: &Atoms| {
        if atoms.blocks.len() > SUPPORT_CAP {
            let (keep, rest) = coarsen(atoms);
            (keep, Some(rest))
        } else {
            ((0..atoms.blocks.len()).collect(), None)
        }
    };
    let (keep_a, rest_a) = split(a);
    let (keep_b, rest_b) = split(b);
    let coarsened = rest_a.is_some() || rest_b.is_some();

    // Side entries: Ok(index) for a kept atom, Err(merged indices) for the rest.
    let side = |atoms: &Atoms, keep: &[usize], rest: &Option<Vec<usize>>| {
        let mut entries: Vec<std::result::Result<usize, Vec<usize>>> = keep.iter().map(|&i| Ok(i)).collect();
        let mut weights: Vec<f64> = keep.iter().map(|&i| atoms.weights[i]).collect();
        if let Some(rest) = rest {
            weights.push(rest.iter().map(|&i| atoms.weights[i]).sum());
            entries.push(Err(rest.clone()));
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        (entries, weights)
    };
    let (ea, mu) = side(a, &keep_a, &rest_a);
    let (eb, nu) = side(b, &keep_b, &rest_b);
    let members = |e: &std::result::Result<usize, Vec<usize>>| match e {
        Ok(i) => vec![*i],
        Err(v) => v.clone(),
    };
    let matrix: Vec<Vec<f64>> = ea
        .iter()
        .map(|x| {
            eb.iter()
                .map(|y| {
                    let mut best = f64::INFINITY;
                    for i in members(x) {
                        for j in members(y) {
                            best = best.min(cost(&a.blocks[i], &b.blocks[j]));
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    let sol = transport_lp(&matrix, &mu, &nu)?;
    let label = |atoms: &Atoms, e: &std::result::Result<usize, Vec<usize>>| match e {
        Ok(i) => format_word(&atoms.blocks[*i]),
        Err(_) => OTHER.to_string(),
    };
    let support = sol.plan.iter().map(|&(i, j, w)| (label(a, &ea[i]), label(b, &eb[j]), w)).collect();
    Ok((sol.value, CouplingPlan { support, marginal_residuals: sol.marginal_residuals, coarsened }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identity_and_swap() {
        let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let s = transport_lp(&c, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.plan, vec![(0, 0, 0.3), (1, 1, 0.7)]);
        let c = vec![vec![0.0, 0.4], vec![0.4, 0.0]];
        let s = transport_lp(&c, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(s.value, 0.4);
        assert_eq!(s.plan, vec![(0, 1, 1.0)]);
        assert!(s.min_reduced_cost >= -1e-12 && s.duality_gap < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let c = vec![vec![0.0, 1.0]];
        assert!(transport_lp(&c, &[1.0], &[1.0]).is_err());
        assert!(transport_lp(&c, &[1.0], &[0.5, 0.6]).is_err());
        assert!(transport_lp(&[vec![-1.0]], &[1.0], &[1.0]).is_err());
        assert!(transport_lp(&c, &[1.0], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn assignment_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let perms = permutations(8);
        for _ in 0..20 {
            let c: Vec<Vec<f64>> =
                (0..8).map(|_| (0..8).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let best = perms
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| c[i][j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                / 8.0;
            let s = transport_lp(&c, &[0.125; 8], &[0.125; 8]).unwrap();
            assert!((s.value - best).abs() < 1e-12, "{} vs {best}", s.value);
            assert!(s.marginal_residuals.0 < 1e-12 && s.marginal_residuals.1 < 1e-12);
        }
    }

    #[test]
    fn degenerate_instances_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.gen_range(1..12);
            let n = rng.gen_range(1..12);
            let mut mu: Vec<f64> = (0..m).map(|_| f64::from(rng.gen_range(0..4u8))).collect();
            let mut nu: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..4u8))).collect();
            mu[0] += 1.0;
            nu[0] += 1.0;
            let (sm, sn): (f64, f64) = (mu.iter().sum(), nu.iter().sum());
            mu.iter_mut().for_each(|x| *x /= sm);
            nu.iter_mut().for_each(|x| *x /= sn);
            let c: Vec<Vec<f64>> =
                (0..m).map(|_| (0..n).map(|_| f64::from(rng.gen_range(0..3u8))).collect()).collect();
            let s = transport_lp(&c, &mu, &nu).unwrap();
            let total: f64 = s.plan.iter().map(|p| p.2).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(s.marginal_residuals.0 < 1e-9 && s.marginal_residuals.1 < 1e-9);
        }
    }

    #[test]
    fn coarsening_gives_a_lower_bound() {
        let blocks: Vec<Vec<Symbol>> =
            (0..600u32).map(|i| (0..10).map(|b| ((i >> b) & 1) as u8).collect()).collect();
        let a = Atoms { blocks: blocks.clone(), weights: vec![1.0 / 600.0; 600] };
        let shifted: Vec<Vec<Symbol>> = blocks.iter().map(|b| b.iter().map(|s| 1 - s).collect()).collect();
        let b = Atoms { blocks: shifted, weights: vec![1.0 / 600.0; 600] };
        let ham = |x: &[Symbol], y: &[Symbol]| crate::measures::hamming(x, y);
        let (value, plan) = transport_lower_bound(&a, &b, &ham).unwrap();
        assert!(plan.coarsened);
        assert!(value <= 1.0 + 1e-12);
        assert!((plan.total_weight() - 1.0).abs() < 1e-9);
    }
}
