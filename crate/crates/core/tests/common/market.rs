//! Random small markets and a grid-search positioning oracle that shares no
//! code with the crate's program assembly.

use ppz_core::escrow::BonusBounds;
use ppz_core::market::{ConversionModel, MarketState};
use ppz_core::positioning::{AllocationPlan, Objective, PositioningConfig, TransitionModel};
use ppz_core::spatial::CityGraph;
use rand::Rng;

use super::dense::gauss_solve;

#[derive(Clone, Debug)]
pub struct Instance {
    pub n: usize,
    pub state: MarketState,
    pub graph: CityGraph,
    pub conv: ConversionModel,
    pub trans: TransitionModel,
    pub cfg: PositioningConfig,
    pub dispatch: Vec<Vec<bool>>,
    pub alloc: Vec<(usize, usize)>,
    pub contrib: Vec<Vec<bool>>,
    pub p_stay: f64,
    pub p_comply: f64,
    pub p_fail_stay: f64,
}

pub fn random_instance(rng: &mut impl Rng, n: usize, max_pairs: usize) -> Instance {
    let mut dispatch = vec![vec![false; n]; n];
    let mut contrib = vec![vec![false; n]; n];
    for i in 0..n {
        dispatch[i][i] = true;
        contrib[i][i] = true;
        for j in i + 1..n {
            if rng.gen_bool(0.4) {
                dispatch[i][j] = true;
                dispatch[j][i] = true;
            }
        }
        for j in 0..n {
            if rng.gen_bool(0.5) {
                contrib[i][j] = true;
            }
        }
    }
    let mut alloc = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && alloc.len() < max_pairs && rng.gen_bool(0.5) {
                alloc.push((i, j));
            }
        }
    }
    let vec_of = |rng: &mut dyn FnMut() -> f64| (0..n).map(|_| rng()).collect::<Vec<f64>>();
    let d = vec_of(&mut || if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(1.0..10.0) });
    let s0 = vec_of(&mut || rng.gen_range(0..8) as f64);
    let s_bar = vec_of(&mut || rng.gen_range(0..3) as f64);
    let r = vec_of(&mut || if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..2.0) });
    let f = vec_of(&mut || rng.gen_range(0.5..2.0));
    let e = vec_of(&mut || if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..20.0) });
    let beta = vec_of(&mut || rng.gen_range(0.3..1.5));
    let x_max = if rng.gen_bool(0.5) { 5.0 } else { f64::INFINITY };
    let p_stay = rng.gen_range(0.7..1.0);
    let p_comply: f64 = rng.gen_range(0.3..0.9);
    let p_fail_stay = rng.gen_range(0.0..(1.0 - p_comply).min(p_stay));
    let objective = if rng.gen_bool(0.5) { Objective::Bookings } else { Objective::Conversion };
    let b_min = rng.gen_range(0.5..2.0);

    let pairs = |m: &Vec<Vec<bool>>| -> Vec<(usize, usize)> {
        (0..n).flat_map(|i| (0..n).filter(move |&j| m[i][j]).map(move |j| (i, j))).collect()
    };
    let graph = CityGraph::from_pairs(n, &pairs(&dispatch), &alloc, &pairs(&contrib), &[]).unwrap();
    Instance {
        n,
        state: MarketState::new(d, s0, s_bar, r, f, e).unwrap(),
        graph,
        conv: ConversionModel::new(beta, x_max).unwrap(),
        trans: TransitionModel::uniform(p_stay, p_comply, p_fail_stay).unwrap(),
        cfg: PositioningConfig::new(objective, BonusBounds::new(b_min, b_min + 3.0).unwrap()),
        dispatch,
        alloc,
        contrib,
        p_stay,
        p_comply,
        p_fail_stay,
    }
}

impl Instance {
    fn weight(&self, k: usize) -> f64 {
        match self.cfg.objective {
            Objective::Bookings => self.state.f[k],
            Objective::Conversion => 1.0,
        }
    }

    fn y_min(&self, k: usize) -> f64 {
        let x_max = self.conv.x_max();
        if x_max.is_infinite() {
            0.0
        } else {
            (-self.conv.beta()[k] * (x_max - 1.0)).exp()
        }
    }

    /// Expected supply from the per-pair fractions `a` (aligned with `alloc`).
    pub fn supply(&self, a: &[f64]) -> Vec<f64> {
        let st = &self.state;
        let mut out_frac = vec![0.0; self.n];
        let mut s = vec![0.0; self.n];
        for (p, &(o, j)) in self.alloc.iter().enumerate() {
            out_frac[o] += a[p];
            s[j] += a[p] * st.s0[o] * self.p_comply;
            s[o] += a[p] * st.s0[o] * self.p_fail_stay;
        }
        for k in 0..self.n {
            s[k] += self.p_stay * (1.0 - out_frac[k]) * st.s0[k];
        }
        s
    }

    /// Variance of the realized driver count at each location when every
    /// driver lands independently.
    pub fn supply_variance(&self, a: &[f64]) -> Vec<f64> {
        let mut var = vec![0.0; self.n];
        for o in 0..self.n {
            let mut q = vec![0.0; self.n];
            let mut out = 0.0;
            for (p, &(from, j)) in self.alloc.iter().enumerate() {
                if from == o {
                    out += a[p];
                    q[j] += a[p] * self.p_comply;
                    q[o] += a[p] * self.p_fail_stay;
                }
            }
            q[o] += self.p_stay * (1.0 - out);
            for k in 0..self.n {
                var[k] += self.state.s0[o] * q[k] * (1.0 - q[k]);
            }
        }
        var
    }

    fn demand_row(&self, i: usize) -> bool {
        (0..self.n).any(|k| self.dispatch[i][k] && self.state.d[k] > 0.0)
    }

    /// Market-balance capacities `Σ_{N(i)} (s + s̄) − r` for rows with demand.
    fn caps(&self, s: &[f64]) -> Vec<(usize, f64)> {
        (0..self.n)
            .filter(|&i| self.demand_row(i))
            .map(|i| {
                let cap: f64 = (0..self.n)
                    .filter(|&k| self.dispatch[i][k])
                    .map(|k| s[k] + self.state.s_bar[k])
                    .sum();
                (i, cap - self.state.r[i])
            })
            .collect()
    }

    /// Whether some contribution matrix funds `b_min` for every expected
    /// responder: a bipartite supply check over all destination subsets.
    pub fn fundable(&self, a: &[f64], slack: f64) -> bool {
        let mut need = vec![0.0; self.n];
        for (p, &(o, j)) in self.alloc.iter().enumerate() {
            need[j] += self.cfg.bounds.min * self.p_comply * a[p] * self.state.s0[o];
        }
        for subset in 1u32..(1 << self.n) {
            let in_s = |j: usize| subset >> j & 1 == 1;
            let wanted: f64 = (0..self.n).filter(|&j| in_s(j)).map(|j| need[j]).sum();
            let available: f64 = (0..self.n)
                .filter(|&i| (0..self.n).any(|j| in_s(j) && self.contrib[i][j]))
                .map(|i| self.state.e[i])
                .sum();
            if wanted > available + slack {
                return false;
            }
        }
        true
    }

    /// Best market objective with the allocation fixed, by enumerating the
    /// vertices of the quantile LP. `None` if no quantile is feasible.
    pub fn best_given_allocation(&self, a: &[f64]) -> Option<f64> {
        let s = self.supply(a);
        let caps = self.caps(&s);
        let vars: Vec<usize> = (0..self.n).filter(|&k| self.state.d[k] > 0.0).collect();
        let m = vars.len();
        // rows a·y ≤ b over the demand locations; fixed demand moves right
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for &(i, cap) in &caps {
            let coeffs: Vec<f64> = vars
                .iter()
                .map(|&k| if self.dispatch[i][k] { self.state.d[k] } else { 0.0 })
                .collect();
            rows.push((coeffs, cap));
        }
        for (c, &k) in vars.iter().enumerate() {
            let mut up = vec![0.0; m];
            up[c] = 1.0;
            rows.push((up, 1.0));
            let mut down = vec![0.0; m];
            down[c] = -1.0;
            rows.push((down, -self.y_min(k)));
        }
        let value = |y: &[f64]| -> f64 {
            vars.iter().enumerate().map(|(c, &k)| self.weight(k) * self.state.d[k] * y[c]).sum()
        };
        let feasible = |y: &[f64]| {
            rows.iter().all(|(a, b)| a.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9)
        };
        if m == 0 {
            return rows.iter().all(|(_, b)| *b >= -1e-9).then_some(0.0);
        }
        let mut best: Option<f64> = None;
        let k = rows.len();
        let mut pick = vec![0usize; m];
        fn next(pick: &mut [usize], k: usize) -> bool {
            let m = pick.len();
            let mut i = m;
            while i > 0 {
                i -= 1;
                if pick[i] < k - m + i {
                    pick[i] += 1;
                    for t in i + 1..m {
                        pick[t] = pick[t - 1] + 1;
                    }
                    return true;
                }
            }
            false
        }
        for (t, p) in pick.iter_mut().enumerate() {
            *p = t;
        }
        loop {
            let mat: Vec<Vec<f64>> = pick.iter().map(|&r| rows[r].0.clone()).collect();
            let rhs: Vec<f64> = pick.iter().map(|&r| rows[r].1).collect();
            if let Some(y) = gauss_solve(mat, rhs) {
                if feasible(&y) {
                    let v = value(&y);
                    if best.map_or(true, |b| v > b) {
                        best = Some(v);
                    }
                }
            }
            if !next(&mut pick, k) {
                break;
            }
        }
        best
    }

    /// Exhaustive search over allocation fractions on a grid with spacing
    /// `1/steps`, quantiles optimized exactly at each grid point.
    pub fn grid_optimum(&self, steps: usize) -> Option<f64> {
        let np = self.alloc.len();
        let mut a = vec![0.0; np];
        let mut idx = vec![0usize; np];
        let mut best: Option<f64> = None;
        loop {
            for p in 0..np {
                a[p] = idx[p] as f64 / steps as f64;
            }
            let mut rows = vec![0.0; self.n];
            for (p, &(o, _)) in self.alloc.iter().enumerate() {
                rows[o] += a[p];
            }
            if rows.iter().all(|&r| r <= 1.0 + 1e-12) && self.fundable(&a, 1e-9) {
                if let Some(v) = self.best_given_allocation(&a) {
                    if best.map_or(true, |b| v > b) {
                        best = Some(v);
                    }
                }
            }
            let mut p = 0;
            while p < np {
                idx[p] += 1;
                if idx[p] <= steps {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
            if p == np {
                break;
            }
        }
        best
    }

    /// Checks a plan against this instance's constraints with its own
    /// arithmetic: allocation rows, quantile bounds, balance rows, budget rows.
    pub fn plan_violation(&self, plan: &AllocationPlan) -> f64 {
        let mut worst = 0.0f64;
        let a: Vec<f64> = self
            .alloc
            .iter()
            .map(|&(o, j)| {
                plan.allocation
                    .iter()
                    .find(|e| e.origin == o && e.destination == j)
                    .map_or(0.0, |e| e.fraction)
            })
            .collect();
        let mut rows = vec![0.0; self.n];
        for (p, &(o, _)) in self.alloc.iter().enumerate() {
            worst = worst.max(-a[p]).max(a[p] - 1.0);
            rows[o] += a[p];
        }
        for r in rows {
            worst = worst.max(r - 1.0);
        }
        for k in 0..self.n {
            worst = worst.max(self.y_min(k) - plan.y[k]).max(plan.y[k] - 1.0);
        }
        let s = self.supply(&a);
        for (i, cap) in self.caps(&s) {
            let load: f64 = (0..self.n)
                .filter(|&k| self.dispatch[i][k])
                .map(|k| self.state.d[k] * plan.y[k])
                .sum();
            worst = worst.max(load - cap);
        }
        let mut funded = vec![0.0; self.n];
        let mut acct = vec![0.0; self.n];
        for c in &plan.contributions {
            assert!(self.contrib[c.account][c.destination], "contribution outside the mask");
            funded[c.destination] += c.fraction * self.state.e[c.account];
            acct[c.account] += c.fraction;
        }
        for v in acct {
            worst = worst.max(v - 1.0);
        }
        let mut need = vec![0.0; self.n];
        for (p, &(o, j)) in self.alloc.iter().enumerate() {
            need[j] += self.cfg.bounds.min * self.p_comply * a[p] * self.state.s0[o];
        }
        for j in 0..self.n {
            worst = worst.max(need[j] - funded[j]);
        }
        worst
    }

    pub fn market_value(&self, y: &[f64]) -> f64 {
        (0..self.n).map(|k| self.weight(k) * self.state.d[k] * y[k]).sum()
    }
}
