//! Planning over ξ_t ∈ Δ(S × Z), the joint law of environment and agent
//! state.
//!
//! Given a decision rule, ξ evolves deterministically:
//!
//! ```text
//! ξ'(s', z') = Σ ξ(s, z) π(a | z) P(s', y' | s, a) 1{z' = φ(z, y', a)}
//! r_Des(ξ, π) = Σ ξ(s, z) π(a | z) r(s, a)
//! ```
//!
//! so an optimal non-stationary policy is an open-loop sequence of rules and
//! can be found by tree search over deterministic rules.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use rand::Rng;

use crate::caps::{self, Caps};
use crate::error::{Error, Result};
use crate::eval::{build_product_chain, policy_evaluate, ProductChain};
use crate::machine::AgentStateMachine;
use crate::model::PomdpModel;
use crate::policy::{DecisionRule, Policy};

const XI_QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct JointXi {
    n_states: usize,
    n_agent_states: usize,
    /// ξ(s, z), indexed s·|Z| + z.
    dist: Vec<f64>,
}

impl JointXi {
    pub fn new(n_states: usize, n_agent_states: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != n_states * n_agent_states {
            return Err(Error::contract("ξ has the wrong length"));
        }
        if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::validation("ξ has a negative entry"));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Normalization {
                row: "ξ".into(),
                sum,
            });
        }
        Ok(JointXi {
            n_states,
            n_agent_states,
            dist,
        })
    }

    pub fn point_mass(n_states: usize, n_agent_states: usize, s: usize, z: usize) -> Self {
        let mut dist = vec![0.0; n_states * n_agent_states];
        dist[s * n_agent_states + z] = 1.0;
        JointXi {
            n_states,
            n_agent_states,
            dist,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_agent_states(&self) -> usize {
        self.n_agent_states
    }

    pub fn get(&self, s: usize, z: usize) -> f64 {
        self.dist[s * self.n_agent_states + z]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.dist
    }

    /// Pr(Z = z).
    pub fn agent_marginal(&self, z: usize) -> f64 {
        (0..self.n_states).map(|s| self.get(s, z)).sum()
    }

    /// Pr(S = s).
    pub fn state_marginal(&self, s: usize) -> f64 {
        (0..self.n_agent_states).map(|z| self.get(s, z)).sum()
    }

    pub fn total(&self) -> f64 {
        self.dist.iter().sum()
    }
}

fn quantize(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v / XI_QUANTUM).round() as i64).collect()
}

/// ξ₁(s, z) = ξ₁(s) Σ_y ν(y | s) 1{z = φ₀(y)}.
pub fn xi_init(model: &PomdpModel, machine: &AgentStateMachine) -> Result<JointXi> {
    machine.check_model(model)?;
    let nz = machine.n_agent_states();
    let mut dist = vec![0.0; model.n_states() * nz];
    for s in 0..model.n_states() {
        for y in 0..model.n_obs() {
            dist[s * nz + machine.init(y)] += model.init_state()[s] * model.init_obs(s, y);
        }
    }
    Ok(JointXi {
        n_states: model.n_states(),
        n_agent_states: nz,
        dist,
    })
}

/// φ_Des(ξ, π).
pub fn xi_update(chain: &ProductChain, xi: &JointXi, rule: &DecisionRule) -> JointXi {
    let (ns, nz, na) = (chain.n_states(), chain.n_agent_states(), chain.n_actions());
    let mut next = vec![0.0; ns * nz];
    for s in 0..ns {
        for z in 0..nz {
            let w = xi.get(s, z);
            if w == 0.0 {
                continue;
            }
            for a in 0..na {
                let pa = rule.prob(z, a);
                if pa == 0.0 {
                    continue;
                }
                for (j, p) in chain.row(s, z, a) {
                    next[*j] += w * pa * p;
                }
            }
        }
    }
    JointXi {
        n_states: ns,
        n_agent_states: nz,
        dist: next,
    }
}

/// r_Des(ξ, π).
pub fn xi_reward(xi: &JointXi, rule: &DecisionRule, model: &PomdpModel) -> f64 {
    let mut acc = 0.0;
    for s in 0..xi.n_states {
        for z in 0..xi.n_agent_states {
            let w = xi.get(s, z);
            if w == 0.0 {
                continue;
            }
            for a in 0..model.n_actions() {
                acc += w * rule.prob(z, a) * model.reward(s, a);
            }
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleClass {
    /// Deterministic rules Z → A.
    Drd,
    /// Stochastic rules Z → Δ(A).
    Drs,
}

/// Sampled evidence that stochastic plans do not beat the deterministic
/// optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DrsCertificate {
    pub samples: usize,
    pub max_sampled: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaPlan {
    pub rules: Vec<DecisionRule>,
    /// Stationary rule used after `rules` run out.
    pub tail: DecisionRule,
    /// ξ₁ .. ξ_{T+1}.
    pub xi_trajectory: Vec<JointXi>,
    /// Exact value of the returned plan.
    pub lo: f64,
    /// Upper bound on the optimal non-stationary value.
    pub hi: f64,
    pub class: RuleClass,
    pub horizon: usize,
    pub nodes: u64,
    pub drs: Option<DrsCertificate>,
    /// False when an anytime search ran out of nodes; [lo, hi] is then
    /// still a valid interval but may be wider than the tolerance.
    pub complete: bool,
}

impl MetaPlan {
    pub fn policy(&self) -> Policy {
        if self.rules.is_empty() {
            Policy::Stationary(self.tail.clone())
        } else {
            Policy::NonStationary {
                rules: self.rules.clone(),
                tail: self.tail.clone(),
            }
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// CSV with columns `t,s,z,xi` (t is one-based).
    pub fn xi_csv(&self) -> String {
        let mut out = String::from("t,s,z,xi\n");
        for (t, xi) in self.xi_trajectory.iter().enumerate() {
            for s in 0..xi.n_states {
                for z in 0..xi.n_agent_states {
                    let _ = writeln!(out, "{},{s},{z},{:e}", t + 1, xi.get(s, z));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub tol: f64,
    pub class: RuleClass,
    /// Reuse results for repeated (ξ, depth) nodes.
    pub memo: bool,
    /// Stochastic plans sampled for the DRS certificate.
    pub drs_samples: usize,
    pub seed: u64,
    pub caps: Caps,
    /// On reaching the search-node cap, close the remaining nodes with their
    /// bounds instead of failing.
    pub anytime: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            tol: 1e-6,
            class: RuleClass::Drd,
            memo: true,
            drs_samples: 1000,
            seed: 0,
            caps: Caps::from_env(),
            anytime: false,
        }
    }
}

enum PlanList {
    Tail(usize),
    Step(Vec<usize>, Rc<PlanList>),
}

#[derive(Clone)]
struct Node {
    lo: f64,
    hi: f64,
    plan: Rc<PlanList>,
}

struct Search<'a> {
    chain: &'a ProductChain,
    gamma: f64,
    horizon: usize,
    margin: f64,
    /// Stationary deterministic rules with their product-chain values.
    tails: Vec<Vec<f64>>,
    tail_rules: Vec<DecisionRule>,
    /// Upper bound Q̄(s, z, a), indexed like the product chain rows.
    q_upper: Vec<f64>,
    memo: Option<HashMap<(Vec<i64>, usize), Node>>,
    nodes: u64,
    node_cap: u128,
    anytime: bool,
    exhausted: bool,
}

impl<'a> Search<'a> {
    fn lower(&self, xi: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, v) in self.tails.iter().enumerate() {
            let val: f64 = xi.iter().zip(v).map(|(x, y)| x * y).sum();
            if val > best.0 {
                best = (val, i);
            }
        }
        best
    }

    fn upper(&self, xi: &[f64]) -> f64 {
        let (ns, nz, na) = (self.chain.n_states(), self.chain.n_agent_states(), self.chain.n_actions());
        let mut total = 0.0;
        for z in 0..nz {
            let mut best = f64::NEG_INFINITY;
            let mut any = false;
            for a in 0..na {
                let mut acc = 0.0;
                for s in 0..ns {
                    let w = xi[s * nz + z];
                    if w != 0.0 {
                        any = true;
                        acc += w * self.q_upper[(s * nz + z) * na + a];
                    }
                }
                best = best.max(acc);
            }
            if any {
                total += best;
            }
        }
        total
    }

    /// Children under deterministic rules, restricted to agent states that
    /// carry mass and deduplicated by successor ξ.
    fn expand(&self, xi: &[f64]) -> Vec<(Vec<usize>, f64, Vec<f64>)> {
        let (ns, nz, na) = (self.chain.n_states(), self.chain.n_agent_states(), self.chain.n_actions());
        let active: Vec<usize> = (0..nz)
            .filter(|z| (0..ns).any(|s| xi[s * nz + z] != 0.0))
            .collect();
        // per (active z, a): reward and successor contribution
        let mut contrib: Vec<Vec<(f64, Vec<f64>)>> = Vec::with_capacity(active.len());
        for &z in &active {
            let mut per_a = Vec::with_capacity(na);
            for a in 0..na {
                let mut r = 0.0;
                let mut next = vec![0.0; ns * nz];
                for s in 0..ns {
                    let w = xi[s * nz + z];
                    if w == 0.0 {
                        continue;
                    }
                    r += w * self.chain.reward(s, a);
                    for (j, p) in self.chain.row(s, z, a) {
                        next[*j] += w * p;
                    }
                }
                per_a.push((r, next));
            }
            contrib.push(per_a);
        }
        let mut out: Vec<(Vec<usize>, f64, Vec<f64>)> = Vec::new();
        let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut digits = vec![0usize; active.len()];
        loop {
            let mut actions = vec![0usize; nz];
            let mut r = 0.0;
            let mut next = vec![0.0; ns * nz];
            for (k, &z) in active.iter().enumerate() {
                let a = digits[k];
                actions[z] = a;
                let (rz, nz_vec) = &contrib[k][a];
                r += rz;
                next.iter_mut().zip(nz_vec).for_each(|(x, y)| *x += y);
            }
            let key = quantize(&next);
            match seen.get(&key) {
                Some(&i) => {
                    if r > out[i].1 {
                        out[i] = (actions, r, next);
                    }
                }
                None => {
                    seen.insert(key, out.len());
                    out.push((actions, r, next));
                }
            }
            // next mixed-radix digit vector
            let mut k = 0;
            loop {
                if k == digits.len() {
                    return out;
                }
                digits[k] += 1;
                if digits[k] < na {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
        }
    }

    fn search(&mut self, xi: &[f64], depth: usize, alpha: f64) -> Result<Node> {
        let scale = self.gamma.powi(depth as i32);
        let margin = self.margin / scale;
        let (lo0, tail) = self.lower(xi);
        let hi0 = self.upper(xi).max(lo0);
        if depth >= self.horizon || hi0 - lo0 <= margin || self.exhausted {
            return Ok(Node {
                lo: lo0,
                hi: hi0,
                plan: Rc::new(PlanList::Tail(tail)),
            });
        }
        let key = (quantize(xi), depth);
        if let Some(memo) = &self.memo {
            if let Some(n) = memo.get(&key) {
                if n.hi - n.lo <= margin || n.hi <= alpha.max(n.lo) + margin {
                    return Ok(n.clone());
                }
            }
        }
        if self.nodes as u128 >= self.node_cap && self.anytime {
            self.exhausted = true;
            return Ok(Node {
                lo: lo0,
                hi: hi0,
                plan: Rc::new(PlanList::Tail(tail)),
            });
        }
        self.nodes += 1;
        caps::check("designer search nodes", self.nodes as u128, self.node_cap)?;

        let mut children: Vec<(Vec<usize>, f64, Vec<f64>, f64)> = self
            .expand(xi)
            .into_iter()
            .map(|(act, r, next)| {
                let bound = r + self.gamma * self.upper(&next);
                (act, r, next, bound)
            })
            .collect();
        children.sort_by(|a, b| b.3.total_cmp(&a.3));

        let mut best_lo = lo0;
        let mut plan = Rc::new(PlanList::Tail(tail));
        let mut hi = f64::NEG_INFINITY;
        for (actions, r, next, bound) in children {
            let a = alpha.max(best_lo);
            if bound <= a + margin {
                hi = hi.max(bound);
                continue;
            }
            let sub = self.search(&next, depth + 1, (a - r) / self.gamma)?;
            let lo_c = r + self.gamma * sub.lo;
            let hi_c = r + self.gamma * sub.hi;
            hi = hi.max(hi_c);
            if lo_c > best_lo {
                best_lo = lo_c;
                plan = Rc::new(PlanList::Step(actions, sub.plan));
            }
        }
        let node = Node {
            lo: best_lo,
            hi: hi.min(hi0).max(best_lo),
            plan,
        };
        if let Some(memo) = &mut self.memo {
            memo.insert(key, node.clone());
        }
        Ok(node)
    }
}

/// Upper bound on action values: the fast informed bound on the product
/// chain, iterated down from r_max / (1 − γ) so every iterate stays an
/// upper bound.
pub(crate) fn informed_upper_bound(model: &PomdpModel, machine: &AgentStateMachine) -> Vec<f64> {
    let (ns, nz, na, ny) = (
        model.n_states(),
        machine.n_agent_states(),
        model.n_actions(),
        model.n_obs(),
    );
    let gamma = model.gamma();
    let mut q = vec![model.r_max() / (1.0 - gamma); ns * nz * na];
    for _ in 0..100_000 {
        let mut next = vec![0.0; q.len()];
        let mut diff: f64 = 0.0;
        for s in 0..ns {
            for z in 0..nz {
                for a in 0..na {
                    let kernel = model.kernel_row(s, a);
                    let mut cont = 0.0;
                    for y in 0..ny {
                        let zn = machine.step(z, y, a);
                        let mut best = f64::NEG_INFINITY;
                        let mut mass = 0.0;
                        for an in 0..na {
                            let mut acc = 0.0;
                            for sn in 0..ns {
                                let p = kernel[sn * ny + y];
                                if p != 0.0 {
                                    acc += p * q[(sn * nz + zn) * na + an];
                                    if an == 0 {
                                        mass += p;
                                    }
                                }
                            }
                            best = best.max(acc);
                        }
                        if mass > 0.0 {
                            cont += best;
                        }
                    }
                    let i = (s * nz + z) * na + a;
                    next[i] = model.reward(s, a) + gamma * cont;
                    diff = diff.max((next[i] - q[i]).abs());
                }
            }
        }
        q = next;
        if diff < 1e-13 {
            break;
        }
    }
    q
}

/// Finds an optimal non-stationary agent-state policy by tree search over
/// ξ-trajectories with default options.
pub fn plan_designer(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    tol: f64,
    class: RuleClass,
) -> Result<MetaPlan> {
    plan_designer_with(
        model,
        machine,
        &PlanOptions {
            tol,
            class,
            ..PlanOptions::default()
        },
    )
}

pub fn plan_designer_with(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    opts: &PlanOptions,
) -> Result<MetaPlan> {
    if !(opts.tol > 0.0) {
        return Err(Error::contract("tolerance must be positive"));
    }
    let (nz, na) = (machine.n_agent_states(), model.n_actions());
    let n_rules = (na as u128).checked_pow(nz as u32).unwrap_or(u128::MAX);
    if n_rules > opts.caps.designer_rules {
        return Err(Error::Capacity {
            what: "deterministic decision rules |A|^|Z|".into(),
            needed: n_rules,
            cap: opts.caps.designer_rules,
            hint: Some("use a machine with fewer agent states or a model with fewer actions".into()),
        });
    }
    let chain = build_product_chain(model, machine)?;
    let xi1 = xi_init(model, machine)?;
    let gamma = model.gamma();

    let mut tails = Vec::with_capacity(n_rules as usize);
    let mut tail_rules = Vec::with_capacity(n_rules as usize);
    for i in 0..n_rules {
        let rule = DecisionRule::from_index(i, nz, na);
        let b = policy_evaluate(&chain, &rule, &xi1, 1e-12)?;
        tails.push(b.v);
        tail_rules.push(rule);
    }
    let range = 2.0 * model.r_max() / (1.0 - gamma);
    let mut horizon = 0usize;
    while gamma.powi(horizon as i32) * range > opts.tol / 2.0 {
        horizon += 1;
    }
    let mut search = Search {
        chain: &chain,
        gamma,
        horizon,
        margin: opts.tol / 2.0,
        tails,
        tail_rules,
        q_upper: informed_upper_bound(model, machine),
        memo: if opts.memo { Some(HashMap::new()) } else { None },
        nodes: 0,
        node_cap: opts.caps.search_nodes,
        anytime: opts.anytime,
        exhausted: false,
    };
    let root = search.search(xi1.as_slice(), 0, f64::NEG_INFINITY)?;

    let mut rules = Vec::new();
    let mut cursor = root.plan.clone();
    let tail = loop {
        match &*cursor {
            PlanList::Tail(i) => break search.tail_rules[*i].clone(),
            PlanList::Step(actions, next) => {
                rules.push(DecisionRule::Deterministic {
                    n_actions: na,
                    actions: actions.clone(),
                });
                let n = next.clone();
                cursor = n;
            }
        }
    };
    let mut xi_trajectory = vec![xi1.clone()];
    let mut lo = 0.0;
    let mut disc = 1.0;
    for rule in &rules {
        let xi = xi_trajectory.last().unwrap();
        lo += disc * xi_reward(xi, rule, model);
        xi_trajectory.push(xi_update(&chain, xi, rule));
        disc *= gamma;
    }
    let last = xi_trajectory.last().unwrap();
    lo += disc * policy_evaluate(&chain, &tail, last, 1e-12)?.j;
    let hi = root.hi.max(lo);

    let drs = match opts.class {
        RuleClass::Drd => None,
        RuleClass::Drs => {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(opts.seed);
            let len = rules.len().max(1);
            let mut max_sampled = f64::NEG_INFINITY;
            let mut violations = 0;
            for _ in 0..opts.drs_samples {
                let seq: Vec<DecisionRule> = (0..len).map(|_| random_rule(nz, na, &mut rng)).collect();
                let tail = random_rule(nz, na, &mut rng);
                let v = rollout_value(&chain, model, &xi1, &seq, &tail)?;
                max_sampled = max_sampled.max(v);
                if v > hi + opts.tol {
                    violations += 1;
                }
            }
            Some(DrsCertificate {
                samples: opts.drs_samples,
                max_sampled,
                violations,
            })
        }
    };

    Ok(MetaPlan {
        horizon: rules.len(),
        rules,
        tail,
        xi_trajectory,
        lo,
        hi,
        class: opts.class,
        nodes: search.nodes,
        drs,
        complete: !search.exhausted,
    })
}

/// A stochastic rule with rows drawn uniformly from the simplex.
pub fn random_rule<R: Rng + ?Sized>(n_agent_states: usize, n_actions: usize, rng: &mut R) -> DecisionRule {
    let mut probs = Vec::with_capacity(n_agent_states * n_actions);
    for _ in 0..n_agent_states {
        let e: Vec<f64> = (0..n_actions).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        probs.extend(e.iter().map(|x| x / s));
    }
    DecisionRule::Stochastic { n_actions, probs }
}

fn rollout_value(
    chain: &ProductChain,
    model: &PomdpModel,
    xi1: &JointXi,
    rules: &[DecisionRule],
    tail: &DecisionRule,
) -> Result<f64> {
    let mut xi = xi1.clone();
    let mut acc = 0.0;
    let mut disc = 1.0;
    for rule in rules {
        acc += disc * xi_reward(&xi, rule, model);
        xi = xi_update(chain, &xi, rule);
        disc *= model.gamma();
    }
    Ok(acc + disc * policy_evaluate(chain, tail, &xi, 1e-12)?.j)
}

/// Finite-horizon value Σ_{t<H} γ^t r_Des(ξ_t, π_t) of a rule sequence.
pub fn finite_horizon_value(chain: &ProductChain, model: &PomdpModel, xi1: &JointXi, rules: &[DecisionRule]) -> f64 {
    let mut xi = xi1.clone();
    let mut acc = 0.0;
    let mut disc = 1.0;
    for rule in rules {
        acc += disc * xi_reward(&xi, rule, model);
        xi = xi_update(chain, &xi, rule);
        disc *= model.gamma();
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassComparison {
    pub horizon: usize,
    pub best_deterministic: f64,
    pub best_deterministic_rules: Vec<DecisionRule>,
    pub best_sampled: f64,
    /// best_deterministic − value of each sampled stochastic sequence.
    pub gaps: Vec<f64>,
    pub certified: bool,
}

impl ClassComparison {
    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_gap(&self) -> f64 {
        self.gaps.iter().sum::<f64>() / self.gaps.len().max(1) as f64
    }
}

/// Exact finite-horizon optimum over deterministic rule sequences versus
/// sampled stochastic sequences.
pub fn compare_nonstationary_classes<R: Rng + ?Sized>(
    model: &PomdpModel,
    machine: &AgentStateMachine,
    horizon: usize,
    samples: usize,
    rng: &mut R,
) -> Result<ClassComparison> {
    let (nz, na) = (machine.n_agent_states(), model.n_actions());
    let n_rules = (na as u128).checked_pow(nz as u32).unwrap_or(u128::MAX);
    let caps = Caps::from_env();
    caps::check("deterministic decision rules |A|^|Z|", n_rules, caps.designer_rules)?;
    let chain = build_product_chain(model, machine)?;
    let xi1 = xi_init(model, machine)?;
    let search = Search {
        chain: &chain,
        gamma: model.gamma(),
        horizon,
        margin: 0.0,
        tails: Vec::new(),
        tail_rules: Vec::new(),
        q_upper: Vec::new(),
        memo: None,
        nodes: 0,
        node_cap: caps.search_nodes,
        anytime: false,
        exhausted: false,
    };
    let mut memo: HashMap<(Vec<i64>, usize), (f64, Vec<Vec<usize>>)> = HashMap::new();
    let mut nodes = 0u128;
    let (best, seq) = finite_horizon_max(&search, xi1.as_slice(), horizon, &mut memo, &mut nodes)?;
    let best_rules: Vec<DecisionRule> = seq
        .into_iter()
        .map(|actions| DecisionRule::Deterministic { n_actions: na, actions })
        .collect();
    let mut gaps = Vec::with_capacity(samples);
    let mut best_sampled = f64::NEG_INFINITY;
    for _ in 0..samples {
        let rules: Vec<DecisionRule> = (0..horizon).map(|_| random_rule(nz, na, rng)).collect();
        let v = finite_horizon_value(&chain, model, &xi1, &rules);
        best_sampled = best_sampled.max(v);
        gaps.push(best - v);
    }
    Ok(ClassComparison {
        horizon,
        best_deterministic: best,
        best_deterministic_rules: best_rules,
        best_sampled,
        certified: best >= best_sampled - 1e-9,
        gaps,
    })
}

fn finite_horizon_max(
    search: &Search<'_>,
    xi: &[f64],
    remaining: usize,
    memo: &mut HashMap<(Vec<i64>, usize), (f64, Vec<Vec<usize>>)>,
    nodes: &mut u128,
) -> Result<(f64, Vec<Vec<usize>>)> {
    if remaining == 0 {
        return Ok((0.0, Vec::new()));
    }
    let key = (quantize(xi), remaining);
    if let Some(v) = memo.get(&key) {
        return Ok(v.clone());
    }
    *nodes += 1;
    caps::check("designer search nodes", *nodes, search.node_cap)?;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for (actions, r, next) in search.expand(xi) {
        let (v, mut seq) = finite_horizon_max(search, &next, remaining - 1, memo, nodes)?;
        let total = r + search.gamma * v;
        if total > best.0 {
            seq.insert(0, actions);
            best = (total, seq);
        }
    }
    memo.insert(key, best.clone());
    Ok(best)
}
