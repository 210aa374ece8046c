//! Exact evaluation on the product process (S_t, Z_t).
//!
//! Under a stationary agent-state policy the pair (S_t, Z_t) is a Markov
//! chain with kernel
//!
//! ```text
//! P_prod(s', z' | s, z, a) = Σ_y' P(s', y' | s, a) · 1{z' = φ(z, y', a)}
//! ```
//!
//! so values, action values and discounted occupancies come from linear
//! solves on |S|·|Z| unknowns.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::caps::{self, Caps};
use crate::designer::{xi_init, xi_reward, xi_update, JointXi};
use crate::error::{Error, Result};
use crate::linalg::{self, SparseRows};
use crate::machine::AgentStateMachine;
use crate::model::PomdpModel;
use crate::policy::{DecisionRule, Policy};

#[derive(Debug, Clone, PartialEq)]
pub struct ProductChain {
    n_states: usize,
    n_agent_states: usize,
    n_actions: usize,
    /// Row (s·|Z| + z)·|A| + a, sparse over s'·|Z| + z'.
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    gamma: f64,
}

impl ProductChain {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_agent_states(&self) -> usize {
        self.n_agent_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_product(&self) -> usize {
        self.n_states * self.n_agent_states
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Sparse row P_prod(·, · | s, z, a) over product indices s'·|Z| + z'.
    pub fn row(&self, s: usize, z: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[(s * self.n_agent_states + z) * self.n_actions + a]
    }

    /// Dense value P_prod(s', z' | s, z, a).
    pub fn prob(&self, s: usize, z: usize, a: usize, s_next: usize, z_next: usize) -> f64 {
        let target = s_next * self.n_agent_states + z_next;
        self.row(s, z, a)
            .iter()
            .filter(|(j, _)| *j == target)
            .map(|(_, p)| p)
            .sum()
    }

    /// P^π_prod and r^π_prod for a stationary rule.
    pub fn induced(&self, rule: &DecisionRule) -> (SparseRows, Vec<f64>) {
        let (nz, na) = (self.n_agent_states, self.n_actions);
        let mut rows = Vec::with_capacity(self.n_product());
        let mut r = Vec::with_capacity(self.n_product());
        for s in 0..self.n_states {
            for z in 0..nz {
                let mut acc: HashMap<usize, f64> = HashMap::new();
                let mut rz = 0.0;
                for a in 0..na {
                    let pa = rule.prob(z, a);
                    if pa == 0.0 {
                        continue;
                    }
                    rz += pa * self.reward(s, a);
                    for (j, p) in self.row(s, z, a) {
                        *acc.entry(*j).or_insert(0.0) += pa * p;
                    }
                }
                let mut row: Vec<(usize, f64)> = acc.into_iter().collect();
                row.sort_by_key(|(j, _)| *j);
                rows.push(row);
                r.push(rz);
            }
        }
        (SparseRows { rows }, r)
    }
}

/// Builds P_prod for a model and machine.
pub fn build_product_chain(model: &PomdpModel, machine: &AgentStateMachine) -> Result<ProductChain> {
    machine.check_model(model)?;
    let (ns, na, ny, nz) = (
        model.n_states(),
        model.n_actions(),
        model.n_obs(),
        machine.n_agent_states(),
    );
    caps::check(
        "product states |S|·|Z|",
        ns as u128 * nz as u128,
        Caps::from_env().product_states,
    )?;
    let mut rows = Vec::with_capacity(ns * nz * na);
    for s in 0..ns {
        for z in 0..nz {
            for a in 0..na {
                let kernel = model.kernel_row(s, a);
                let mut acc: Vec<(usize, f64)> = Vec::new();
                for sn in 0..ns {
                    for y in 0..ny {
                        let p = kernel[sn * ny + y];
                        if p == 0.0 {
                            continue;
                        }
                        let j = sn * nz + machine.step(z, y, a);
                        match acc.iter_mut().find(|(k, _)| *k == j) {
                            Some(e) => e.1 += p,
                            None => acc.push((j, p)),
                        }
                    }
                }
                acc.sort_by_key(|(j, _)| *j);
                rows.push(acc);
            }
        }
    }
    Ok(ProductChain {
        n_states: ns,
        n_agent_states: nz,
        n_actions: na,
        rows,
        reward: model.reward_table().to_vec(),
        gamma: model.gamma(),
    })
}

/// Value, action value and discounted occupancy of a stationary rule.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBundle {
    pub n_states: usize,
    pub n_agent_states: usize,
    pub n_actions: usize,
    /// V(s, z), indexed s·|Z| + z.
    pub v: Vec<f64>,
    /// Q(s, z, a), indexed (s·|Z| + z)·|A| + a.
    pub q: Vec<f64>,
    /// Unnormalized occupancy d(s, z, a), same layout as `q`.
    pub d: Vec<f64>,
    pub j: f64,
}

impl EvalBundle {
    pub fn value(&self, s: usize, z: usize) -> f64 {
        self.v[s * self.n_agent_states + z]
    }

    pub fn q_value(&self, s: usize, z: usize, a: usize) -> f64 {
        self.q[(s * self.n_agent_states + z) * self.n_actions + a]
    }

    pub fn occupancy(&self, s: usize, z: usize, a: usize) -> f64 {
        self.d[(s * self.n_agent_states + z) * self.n_actions + a]
    }

    /// CSV with columns `s,z,a,V,Q,d`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,z,a,V,Q,d\n");
        for s in 0..self.n_states {
            for z in 0..self.n_agent_states {
                for a in 0..self.n_actions {
                    let _ = writeln!(
                        out,
                        "{s},{z},{a},{:e},{:e},{:e}",
                        self.value(s, z),
                        self.q_value(s, z, a),
                        self.occupancy(s, z, a)
                    );
                }
            }
        }
        out
    }
}

/// Solves V = r^π + γ P^π V and derives Q, d and J = Σ ξ₁ V.
pub fn policy_evaluate(
    chain: &ProductChain,
    rule: &DecisionRule,
    xi1: &JointXi,
    tol: f64,
) -> Result<EvalBundle> {
    rule.check_dims(chain.n_agent_states, chain.n_actions)?;
    if xi1.n_states() != chain.n_states || xi1.n_agent_states() != chain.n_agent_states {
        return Err(Error::contract("initial distribution does not match the product chain"));
    }
    let gamma = chain.gamma;
    let (p, r) = chain.induced(rule);
    let v = linalg::solve_discounted(&p, &r, gamma, tol)?;
    let d_sz = linalg::solve_discounted_transposed(&p, xi1.as_slice(), gamma, tol)?;
    let (ns, nz, na) = (chain.n_states, chain.n_agent_states, chain.n_actions);
    let mut q = vec![0.0; ns * nz * na];
    let mut d = vec![0.0; ns * nz * na];
    for s in 0..ns {
        for z in 0..nz {
            for a in 0..na {
                let idx = (s * nz + z) * na + a;
                let cont: f64 = chain.row(s, z, a).iter().map(|(j, pj)| pj * v[*j]).sum();
                q[idx] = chain.reward(s, a) + gamma * cont;
                d[idx] = d_sz[s * nz + z] * rule.prob(z, a);
            }
        }
    }
    let j = xi1.as_slice().iter().zip(&v).map(|(x, vv)| x * vv).sum();
    Ok(EvalBundle {
        n_states: ns,
        n_agent_states: nz,
        n_actions: na,
        v,
        q,
        d,
        j,
    })
}

/// Performance with a certified radius: the true J lies in
/// `[value − radius, value + radius]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub value: f64,
    pub radius: f64,
}

/// J^π for any policy kind.
///
/// Stationary policies are evaluated exactly on the product chain.
/// Non-stationary policies roll ξ_t forward through their explicit rules and
/// close the remaining infinite tail with an exact evaluation of the tail
/// rule, so the radius only carries the linear-solver tolerance.
pub fn performance(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    policy: &Policy,
    horizon_tol: f64,
) -> Result<Performance> {
    let chain = build_product_chain(model, machine)?;
    policy.check_dims(machine.n_agent_states(), model.n_actions())?;
    let xi1 = xi_init(model, machine)?;
    let solver_tol = 1e-12f64.min(horizon_tol);
    match policy {
        Policy::Stationary(rule) => {
            let b = policy_evaluate(&chain, rule, &xi1, solver_tol)?;
            Ok(Performance {
                value: b.j,
                radius: 0.0,
            })
        }
        Policy::NonStationary { rules, tail } => {
            let mut xi = xi1;
            let mut disc = 1.0;
            let mut acc = 0.0;
            for rule in rules {
                acc += disc * xi_reward(&xi, rule, model);
                xi = xi_update(&chain, &xi, rule);
                disc *= model.gamma();
            }
            let b = policy_evaluate(&chain, tail, &xi, solver_tol)?;
            Ok(Performance {
                value: acc + disc * b.j,
                radius: 0.0,
            })
        }
    }
}

/// Stationary law of (S_t, Y_t, Z_t, A_t) under a stationary rule.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    n_states: usize,
    n_obs: usize,
    n_agent_states: usize,
    n_actions: usize,
    /// ζ(s, y, z, a), indexed ((s·|Y| + y)·|Z| + z)·|A| + a.
    zeta: Vec<f64>,
    /// The reachable set forms a single communicating class.
    pub irreducible: bool,
    /// Period of the recurrent class (1 = aperiodic).
    pub period: usize,
    /// Size of the recurrent class.
    pub class_size: usize,
    /// ℓ₁ residual ‖ζP − ζ‖₁ of the returned distribution.
    pub residual: f64,
}

impl StationaryDist {
    #[inline]
    fn idx(&self, s: usize, y: usize, z: usize, a: usize) -> usize {
        ((s * self.n_obs + y) * self.n_agent_states + z) * self.n_actions + a
    }

    pub fn prob(&self, s: usize, y: usize, z: usize, a: usize) -> f64 {
        self.zeta[self.idx(s, y, z, a)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.zeta
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n_states, self.n_obs, self.n_agent_states, self.n_actions)
    }

    /// Whether the behavior chain meets what the ASQL limit needs: a single
    /// irreducible, aperiodic class.
    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.period == 1
    }

    /// ζ(s, z, a).
    pub fn marginal_sza(&self, s: usize, z: usize, a: usize) -> f64 {
        (0..self.n_obs).map(|y| self.prob(s, y, z, a)).sum()
    }

    /// ζ(z, a).
    pub fn marginal_za(&self, z: usize, a: usize) -> f64 {
        (0..self.n_states).map(|s| self.marginal_sza(s, z, a)).sum()
    }

    /// ζ(· | z, a) over S, or `None` when (z, a) has no mass.
    pub fn state_given_za(&self, z: usize, a: usize) -> Option<Vec<f64>> {
        let m = self.marginal_za(z, a);
        if m <= 0.0 {
            return None;
        }
        Some((0..self.n_states).map(|s| self.marginal_sza(s, z, a) / m).collect())
    }
}

struct ExtendedChain {
    dims: (usize, usize, usize, usize),
    initial: Vec<(usize, f64)>,
}

impl ExtendedChain {
    fn new(model: &PomdpModel, machine: &AgentStateMachine, rule: &DecisionRule) -> Self {
        let dims = (
            model.n_states(),
            model.n_obs(),
            machine.n_agent_states(),
            model.n_actions(),
        );
        let mut initial = Vec::new();
        for s in 0..dims.0 {
            let ps = model.init_state()[s];
            if ps == 0.0 {
                continue;
            }
            for y in 0..dims.1 {
                let py = model.init_obs(s, y);
                if py == 0.0 {
                    continue;
                }
                let z = machine.init(y);
                for a in 0..dims.3 {
                    let pa = rule.prob(z, a);
                    if pa > 0.0 {
                        initial.push((((s * dims.1 + y) * dims.2 + z) * dims.3 + a, ps * py * pa));
                    }
                }
            }
        }
        ExtendedChain { dims, initial }
    }

    fn decode(&self, idx: usize) -> (usize, usize, usize, usize) {
        let (_, ny, nz, na) = self.dims;
        let a = idx % na;
        let z = (idx / na) % nz;
        let y = (idx / (na * nz)) % ny;
        let s = idx / (na * nz * ny);
        (s, y, z, a)
    }

    fn successors(
        &self,
        model: &PomdpModel,
        machine: &AgentStateMachine,
        rule: &DecisionRule,
        idx: usize,
    ) -> Vec<(usize, f64)> {
        let (_, ny, nz, na) = self.dims;
        let (s, _, z, a) = self.decode(idx);
        let kernel = model.kernel_row(s, a);
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (k, &p) in kernel.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (sn, yn) = (k / ny, k % ny);
            let zn = machine.step(z, yn, a);
            for an in 0..na {
                let pa = rule.prob(zn, an);
                if pa > 0.0 {
                    out.push((((sn * ny + yn) * nz + zn) * na + an, p * pa));
                }
            }
        }
        out
    }
}

/// Tarjan's strongly connected components, iterative.
fn strongly_connected(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut n_comp = 0;
    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNSET {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = n_comp;
                        if w == v {
                            break;
                        }
                    }
                    n_comp += 1;
                }
            }
        }
    }
    comp
}

/// Solves ζ = ζP for the chain (S_t, Y_t, Z_t, A_t) on the recurrent class
/// reached from the initial distribution.
///
/// A periodic class yields its unique stationary law (the Cesàro limit) with
/// `period > 1`. Several reachable closed classes are reported as an error.
pub fn stationary_dist(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    rule: &DecisionRule,
) -> Result<StationaryDist> {
    machine.check_model(model)?;
    rule.check_dims(machine.n_agent_states(), model.n_actions())?;
    let chain = ExtendedChain::new(model, machine, rule);
    let (ns, ny, nz, na) = chain.dims;
    caps::check(
        "extended chain states |S|·|Y|·|Z|·|A|",
        (ns * ny * nz * na) as u128,
        Caps::from_env().product_states,
    )?;

    // reachable set
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut states: Vec<usize> = Vec::new();
    let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for (idx, _) in &chain.initial {
        if !local.contains_key(idx) {
            local.insert(*idx, states.len());
            states.push(*idx);
            queue.push_back(*idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let succ = chain.successors(model, machine, rule, idx);
        let mut row = Vec::with_capacity(succ.len());
        for (j, p) in succ {
            let lj = *local.entry(j).or_insert_with(|| {
                states.push(j);
                queue.push_back(j);
                states.len() - 1
            });
            row.push((lj, p));
        }
        let li = local[&idx];
        if edges.len() <= li {
            edges.resize(li + 1, Vec::new());
        }
        edges[li] = row;
    }
    edges.resize(states.len(), Vec::new());
    let n = states.len();
    let adj: Vec<Vec<usize>> = edges.iter().map(|r| r.iter().map(|(j, _)| *j).collect()).collect();
    let comp = strongly_connected(n, &adj);
    let n_comp = comp.iter().max().map(|c| c + 1).unwrap_or(0);
    let mut closed = vec![true; n_comp];
    for v in 0..n {
        if adj[v].iter().any(|w| comp[*w] != comp[v]) {
            closed[comp[v]] = false;
        }
    }
    let closed_ids: Vec<usize> = (0..n_comp).filter(|c| closed[*c]).collect();
    if closed_ids.len() != 1 {
        let classes = closed_ids
            .iter()
            .map(|c| (0..n).filter(|v| comp[*v] == *c).map(|v| states[v]).collect())
            .collect();
        return Err(Error::AmbiguousStationary(classes));
    }
    let class = closed_ids[0];
    let members: Vec<usize> = (0..n).filter(|v| comp[*v] == class).collect();
    let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let sub = SparseRows {
        rows: members
            .iter()
            .map(|v| edges[*v].iter().map(|(w, p)| (pos[w], *p)).collect())
            .collect(),
    };
    let z = linalg::stationary_vector(&sub)?;

    // period via BFS levels
    let mut level = vec![usize::MAX; members.len()];
    level[0] = 0;
    let mut q = std::collections::VecDeque::from([0usize]);
    let mut period = 0usize;
    while let Some(u) = q.pop_front() {
        for (w, _) in &sub.rows[u] {
            if level[*w] == usize::MAX {
                level[*w] = level[u] + 1;
                q.push_back(*w);
            }
        }
    }
    for u in 0..members.len() {
        for (w, _) in &sub.rows[u] {
            let diff = (level[u] + 1) as i64 - level[*w] as i64;
            period = linalg::gcd(period, diff.unsigned_abs() as usize);
        }
    }

    let pz = sub.tr_mul_vec(&z);
    let residual = pz.iter().zip(&z).map(|(a, b)| (a - b).abs()).sum();
    let mut zeta = vec![0.0; ns * ny * nz * na];
    for (i, v) in members.iter().enumerate() {
        zeta[states[*v]] = z[i];
    }
    Ok(StationaryDist {
        n_states: ns,
        n_obs: ny,
        n_agent_states: nz,
        n_actions: na,
        zeta,
        irreducible: members.len() == n,
        period: period.max(1),
        class_size: members.len(),
        residual,
    })
}

/// Monte-Carlo estimate of J with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
    /// γ^horizon · r_max / (1 − γ): the truncation bias bound.
    pub tail_bound: f64,
}

pub fn monte_carlo_j<R: Rng + ?Sized>(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    policy: &Policy,
    episodes: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    machine.check_model(model)?;
    policy.check_dims(machine.n_agent_states(), model.n_actions())?;
    if episodes < 2 {
        return Err(Error::contract("need at least two episodes"));
    }
    let gamma = model.gamma();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let (mut s, y) = model.sample_initial(rng);
        let mut z = machine.init(y);
        let mut ret = 0.0;
        let mut disc = 1.0;
        for t in 0..horizon {
            let a = policy.rule_at(t).sample(z, rng);
            let (sn, yn, r) = model.sample_step(s, a, rng)?;
            ret += disc * r;
            disc *= gamma;
            z = machine.step(z, yn, a);
            s = sn;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        half_width: 1.96 * (var / n).sqrt(),
        tail_bound: gamma.powi(horizon as i32) * model.r_max() / (1.0 - gamma),
    })
}
