//! The line-oriented `.pomdpz` format.
//!
//! ```text
//! # comment
//! [model]
//! states 3
//! actions 2
//! observations 1
//! gamma 0.9
//! r_max 2                # optional, defaults to max |r|
//!
//! [kernel]
//! 0 0 -> 0 0 1           # s a -> s' y' P(s', y' | s, a)
//!
//! [reward]
//! 0 0 -1                 # s a r(s, a)
//!
//! [init]
//! state 0 1              # s ξ₁(s)
//! obs 0 0 1              # s y ν(y | s); all absent means "observation 0"
//!
//! [machine parity]
//! kind table             # identity | window n | belief k | table
//! agent_states 2
//! init 0 -> 0            # y -> z
//! update 0 1 0 -> 1      # z y' a -> z'
//!
//! [metadata]
//! source = hand-written
//! ```
//!
//! Omitted kernel, reward and init entries are zero. Numbers are written with
//! 17 significant digits so that parsing a serialized document restores every
//! value bit for bit.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::machine::{belief_machine, window_machine, AgentStateMachine, MachineKind};
use crate::model::{ModelParts, PomdpModel};
use crate::policy::{DecisionRule, Policy};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub model: PomdpModel,
    pub machines: Vec<(String, AgentStateMachine)>,
    pub metadata: Vec<(String, String)>,
}

impl ModelDocument {
    pub fn new(model: PomdpModel) -> Self {
        ModelDocument {
            model,
            machines: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn machine(&self, name: &str) -> Option<&AgentStateMachine> {
        self.machines.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A whitespace-separated token with its one-based position.
#[derive(Debug, Clone)]
pub(crate) struct Token<'a> {
    pub text: &'a str,
    pub line: usize,
    pub column: usize,
}

pub(crate) fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

impl<'a> Token<'a> {
    pub fn error(&self, message: impl Into<String>) -> Error {
        parse_error(self.line, self.column, message)
    }

    pub fn usize(&self) -> Result<usize> {
        self.text
            .parse()
            .map_err(|_| self.error(format!("expected a non-negative integer, found `{}`", self.text)))
    }

    pub fn f64(&self) -> Result<f64> {
        let v: f64 = self
            .text
            .parse()
            .map_err(|_| self.error(format!("expected a number, found `{}`", self.text)))?;
        if !v.is_finite() {
            return Err(self.error("number must be finite"));
        }
        Ok(v)
    }

    pub fn index(&self, bound: usize, what: &str) -> Result<usize> {
        let v = self.usize()?;
        if v >= bound {
            return Err(self.error(format!("{what} {v} out of range 0..{bound}")));
        }
        Ok(v)
    }

    pub fn expect(&self, word: &str) -> Result<()> {
        if self.text != word {
            return Err(self.error(format!("expected `{word}`, found `{}`", self.text)));
        }
        Ok(())
    }
}

/// Non-empty lines with comments stripped, split into tokens.
fn lines(text: &str) -> Vec<(usize, Vec<Token<'_>>)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = Vec::new();
        let mut start = None;
        for (j, c) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    toks.push(Token {
                        text: &content[s..j],
                        line: i + 1,
                        column: content[..s].chars().count() + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(j);
            }
        }
        if !toks.is_empty() {
            out.push((i + 1, toks));
        }
    }
    out
}

fn arity(toks: &[Token<'_>], n: usize, line: usize) -> Result<()> {
    if toks.len() != n {
        let col = toks.get(n).or(toks.last()).map(|t| t.column).unwrap_or(1);
        return Err(parse_error(line, col, format!("expected {n} fields, found {}", toks.len())));
    }
    Ok(())
}

enum MachineSpec {
    Identity,
    Window(usize),
    Belief(usize),
    Table {
        agent_states: Option<usize>,
        init: Vec<(usize, usize, usize)>,
        update: Vec<(usize, usize, usize, usize, usize)>,
    },
}

struct PendingMachine {
    name: String,
    line: usize,
    kind: Option<MachineSpec>,
}

/// Parses a `.pomdpz` document.
pub fn parse_native(text: &str) -> Result<ModelDocument> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Model,
        Kernel,
        Reward,
        Init,
        Machine,
        Metadata,
    }
    let mut section = Section::None;
    let mut dims: [Option<usize>; 3] = [None; 3];
    let mut gamma: Option<f64> = None;
    let mut r_max: Option<f64> = None;
    let mut kernel: Option<Vec<f64>> = None;
    let mut reward: Option<Vec<f64>> = None;
    let mut init_state: Option<Vec<f64>> = None;
    let mut init_obs: Option<Vec<f64>> = None;
    let mut machines: Vec<PendingMachine> = Vec::new();
    let mut metadata: Vec<(String, String)> = Vec::new();
    let mut model_line = 0;

    let need_dims = |dims: &[Option<usize>; 3], tok: &Token<'_>| -> Result<(usize, usize, usize)> {
        match dims {
            [Some(s), Some(a), Some(y)] => Ok((*s, *a, *y)),
            _ => Err(tok.error("states, actions and observations must be declared in [model] first")),
        }
    };

    for (line, toks) in lines(text) {
        let head = &toks[0];
        if head.text.starts_with('[') {
            let joined: Vec<&str> = toks.iter().map(|t| t.text).collect();
            let header = joined.join(" ");
            if !header.ends_with(']') {
                return Err(head.error("unterminated section header"));
            }
            let inner = header[1..header.len() - 1].trim();
            section = match inner {
                "model" => {
                    model_line = line;
                    Section::Model
                }
                "kernel" => Section::Kernel,
                "reward" => Section::Reward,
                "init" => Section::Init,
                "metadata" => Section::Metadata,
                _ => {
                    if let Some(name) = inner.strip_prefix("machine ") {
                        let name = name.trim().to_string();
                        if name.is_empty() || name.contains(char::is_whitespace) {
                            return Err(head.error("machine name must be a single word"));
                        }
                        if machines.iter().any(|m| m.name == name) {
                            return Err(head.error(format!("duplicate machine name `{name}`")));
                        }
                        machines.push(PendingMachine {
                            name,
                            line,
                            kind: None,
                        });
                        Section::Machine
                    } else {
                        return Err(head.error(format!("unknown section `{inner}`")));
                    }
                }
            };
            continue;
        }
        match section {
            Section::None => return Err(head.error("content before the first section header")),
            Section::Model => {
                arity(&toks, 2, line)?;
                let v = &toks[1];
                match head.text {
                    "states" => dims[0] = Some(v.usize()?),
                    "actions" => dims[1] = Some(v.usize()?),
                    "observations" => dims[2] = Some(v.usize()?),
                    "gamma" => gamma = Some(v.f64()?),
                    "r_max" => r_max = Some(v.f64()?),
                    other => return Err(head.error(format!("unknown model field `{other}`"))),
                }
                if head.text != "gamma" && head.text != "r_max" && v.usize()? == 0 {
                    return Err(v.error("dimension must be positive"));
                }
            }
            Section::Kernel => {
                let (ns, na, ny) = need_dims(&dims, head)?;
                arity(&toks, 6, line)?;
                toks[2].expect("->")?;
                let s = toks[0].index(ns, "state")?;
                let a = toks[1].index(na, "action")?;
                let sn = toks[3].index(ns, "state")?;
                let y = toks[4].index(ny, "observation")?;
                let p = toks[5].f64()?;
                let k = kernel.get_or_insert_with(|| vec![0.0; ns * na * ns * ny]);
                k[((s * na + a) * ns + sn) * ny + y] = p;
            }
            Section::Reward => {
                let (ns, na, _) = need_dims(&dims, head)?;
                arity(&toks, 3, line)?;
                let s = toks[0].index(ns, "state")?;
                let a = toks[1].index(na, "action")?;
                let r = reward.get_or_insert_with(|| vec![0.0; ns * na]);
                r[s * na + a] = toks[2].f64()?;
            }
            Section::Init => {
                let (ns, _, ny) = need_dims(&dims, head)?;
                match head.text {
                    "state" => {
                        arity(&toks, 3, line)?;
                        let s = toks[1].index(ns, "state")?;
                        init_state.get_or_insert_with(|| vec![0.0; ns])[s] = toks[2].f64()?;
                    }
                    "obs" => {
                        arity(&toks, 4, line)?;
                        let s = toks[1].index(ns, "state")?;
                        let y = toks[2].index(ny, "observation")?;
                        init_obs.get_or_insert_with(|| vec![0.0; ns * ny])[s * ny + y] = toks[3].f64()?;
                    }
                    other => return Err(head.error(format!("unknown init entry `{other}`"))),
                }
            }
            Section::Machine => {
                let (_, na, ny) = need_dims(&dims, head)?;
                let m = machines.last_mut().expect("machine section has a machine");
                match head.text {
                    "kind" => {
                        if m.kind.is_some() {
                            return Err(head.error("machine kind given twice"));
                        }
                        let kind = toks.get(1).ok_or_else(|| head.error("missing machine kind"))?;
                        m.kind = Some(match kind.text {
                            "identity" => {
                                arity(&toks, 2, line)?;
                                MachineSpec::Identity
                            }
                            "window" => {
                                arity(&toks, 3, line)?;
                                MachineSpec::Window(toks[2].usize()?)
                            }
                            "belief" => {
                                arity(&toks, 3, line)?;
                                MachineSpec::Belief(toks[2].usize()?)
                            }
                            "table" => {
                                arity(&toks, 2, line)?;
                                MachineSpec::Table {
                                    agent_states: None,
                                    init: Vec::new(),
                                    update: Vec::new(),
                                }
                            }
                            other => return Err(kind.error(format!("unknown machine kind `{other}`"))),
                        });
                    }
                    "agent_states" | "init" | "update" => {
                        let Some(MachineSpec::Table {
                            agent_states,
                            init,
                            update,
                        }) = &mut m.kind
                        else {
                            return Err(head.error("table entries need `kind table` first"));
                        };
                        match head.text {
                            "agent_states" => {
                                arity(&toks, 2, line)?;
                                *agent_states = Some(toks[1].usize()?);
                            }
                            "init" => {
                                arity(&toks, 4, line)?;
                                toks[2].expect("->")?;
                                let nz = agent_states.ok_or_else(|| head.error("agent_states must come first"))?;
                                init.push((toks[1].index(ny, "observation")?, toks[3].index(nz, "agent state")?, line));
                            }
                            _ => {
                                arity(&toks, 6, line)?;
                                toks[4].expect("->")?;
                                let nz = agent_states.ok_or_else(|| head.error("agent_states must come first"))?;
                                update.push((
                                    toks[1].index(nz, "agent state")?,
                                    toks[2].index(ny, "observation")?,
                                    toks[3].index(na, "action")?,
                                    toks[5].index(nz, "agent state")?,
                                    line,
                                ));
                            }
                        }
                    }
                    other => return Err(head.error(format!("unknown machine field `{other}`"))),
                }
            }
            Section::Metadata => {
                let raw = text.lines().nth(line - 1).unwrap_or("");
                let content = raw.split('#').next().unwrap_or("");
                let Some((k, v)) = content.split_once('=') else {
                    return Err(head.error("metadata lines have the form `key = value`"));
                };
                let key = k.trim().to_string();
                if metadata.iter().any(|(kk, _)| *kk == key) {
                    return Err(head.error(format!("duplicate metadata key `{key}`")));
                }
                metadata.push((key, v.trim().to_string()));
            }
        }
    }

    let (ns, na, ny) = match dims {
        [Some(s), Some(a), Some(y)] => (s, a, y),
        _ => return Err(parse_error(model_line.max(1), 1, "[model] must declare states, actions and observations")),
    };
    let gamma = gamma.ok_or_else(|| parse_error(model_line.max(1), 1, "[model] must declare gamma"))?;
    let model = PomdpModel::from_parts(ModelParts {
        n_states: ns,
        n_actions: na,
        n_obs: ny,
        kernel: kernel.unwrap_or_else(|| vec![0.0; ns * na * ns * ny]),
        reward: reward.unwrap_or_else(|| vec![0.0; ns * na]),
        init_state: init_state.unwrap_or_else(|| vec![0.0; ns]),
        init_obs,
        gamma,
        r_max,
    })?;

    let mut built = Vec::with_capacity(machines.len());
    for m in machines {
        let name = m.name.clone();
        let spec = m
            .kind
            .ok_or_else(|| parse_error(m.line, 1, format!("machine `{name}` has no kind")))?;
        let machine = match spec {
            MachineSpec::Identity => AgentStateMachine::identity(ny, na),
            MachineSpec::Window(n) => window_machine(n, ny, na)?,
            MachineSpec::Belief(k) => belief_machine(&model, k)?,
            MachineSpec::Table {
                agent_states,
                init,
                update,
            } => {
                let nz = agent_states.ok_or_else(|| parse_error(m.line, 1, format!("machine `{name}` needs agent_states")))?;
                let mut init_fn = vec![None; ny];
                for (y, z, l) in init {
                    if init_fn[y].replace(z).is_some() {
                        return Err(parse_error(l, 1, format!("init entry for observation {y} given twice")));
                    }
                }
                let mut update_fn = vec![None; nz * ny * na];
                for (z, y, a, zn, l) in update {
                    if update_fn[(z * ny + y) * na + a].replace(zn).is_some() {
                        return Err(parse_error(l, 1, format!("update entry ({z}, {y}, {a}) given twice")));
                    }
                }
                let init_fn: Option<Vec<usize>> = init_fn.into_iter().collect();
                let update_fn: Option<Vec<usize>> = update_fn.into_iter().collect();
                match (init_fn, update_fn) {
                    (Some(i), Some(u)) => AgentStateMachine::from_tables(nz, ny, na, i, u, name.clone())?,
                    _ => return Err(parse_error(m.line, 1, format!("machine `{name}` has an incomplete table"))),
                }
            }
        };
        built.push((name.clone(), machine.with_label(name)));
    }
    Ok(ModelDocument {
        model,
        machines: built,
        metadata,
    })
}

/// Writes a document that [`parse_native`] reads back unchanged.
pub fn serialize_native(doc: &ModelDocument) -> String {
    let m = &doc.model;
    let (ns, na, ny) = (m.n_states(), m.n_actions(), m.n_obs());
    let mut out = String::new();
    let _ = writeln!(out, "[model]");
    let _ = writeln!(out, "states {ns}");
    let _ = writeln!(out, "actions {na}");
    let _ = writeln!(out, "observations {ny}");
    let _ = writeln!(out, "gamma {}", fmt_f64(m.gamma()));
    let _ = writeln!(out, "r_max {}", fmt_f64(m.r_max()));
    let _ = writeln!(out, "\n[kernel]");
    for s in 0..ns {
        for a in 0..na {
            for sn in 0..ns {
                for y in 0..ny {
                    let p = m.kernel(s, a, sn, y);
                    if p != 0.0 {
                        let _ = writeln!(out, "{s} {a} -> {sn} {y} {}", fmt_f64(p));
                    }
                }
            }
        }
    }
    let _ = writeln!(out, "\n[reward]");
    for s in 0..ns {
        for a in 0..na {
            let _ = writeln!(out, "{s} {a} {}", fmt_f64(m.reward(s, a)));
        }
    }
    let _ = writeln!(out, "\n[init]");
    for (s, p) in m.init_state().iter().enumerate() {
        if *p != 0.0 {
            let _ = writeln!(out, "state {s} {}", fmt_f64(*p));
        }
    }
    for s in 0..ns {
        for y in 0..ny {
            let p = m.init_obs(s, y);
            if p != 0.0 {
                let _ = writeln!(out, "obs {s} {y} {}", fmt_f64(p));
            }
        }
    }
    for (name, machine) in &doc.machines {
        let _ = writeln!(out, "\n[machine {name}]");
        match machine.kind() {
            MachineKind::Identity => {
                let _ = writeln!(out, "kind identity");
            }
            MachineKind::Window { n } => {
                let _ = writeln!(out, "kind window {n}");
            }
            MachineKind::Belief { k } => {
                let _ = writeln!(out, "kind belief {k}");
            }
            MachineKind::Table => {
                let nz = machine.n_agent_states();
                let _ = writeln!(out, "kind table");
                let _ = writeln!(out, "agent_states {nz}");
                for y in 0..ny {
                    let _ = writeln!(out, "init {y} -> {}", machine.init(y));
                }
                for z in 0..nz {
                    for y in 0..ny {
                        for a in 0..na {
                            let _ = writeln!(out, "update {z} {y} {a} -> {}", machine.step(z, y, a));
                        }
                    }
                }
            }
        }
    }
    if !doc.metadata.is_empty() {
        let _ = writeln!(out, "\n[metadata]");
        for (k, v) in &doc.metadata {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}

fn write_rule(out: &mut String, tag: &str, rule: &DecisionRule) {
    match rule {
        DecisionRule::Deterministic { actions, .. } => {
            let _ = writeln!(out, "rule {tag} deterministic");
            for (z, a) in actions.iter().enumerate() {
                let _ = writeln!(out, "{z} -> {a}");
            }
        }
        DecisionRule::Stochastic { .. } => {
            let _ = writeln!(out, "rule {tag} stochastic");
            for z in 0..rule.n_agent_states() {
                let probs: Vec<String> = rule.row(z).iter().map(|p| fmt_f64(*p)).collect();
                let _ = writeln!(out, "{z} : {}", probs.join(" "));
            }
        }
    }
    let _ = writeln!(out, "end");
}

/// Writes a policy for the given machine.
///
/// ```text
/// policy nonstationary horizon 2
/// machine parity
/// agent_states 2
/// actions 2
/// rule 1 deterministic
/// 0 -> 1
/// 1 -> 0
/// end
/// rule 2 stochastic
/// 0 : 3.9000000000000001e-1 6.0999999999999999e-1
/// 1 : 1.0000000000000000e0 0.0000000000000000e0
/// end
/// rule tail deterministic
/// ...
/// end
/// ```
pub fn serialize_policy(policy: &Policy, machine: &AgentStateMachine) -> String {
    let tail = policy.tail();
    let mut out = String::new();
    match policy {
        Policy::Stationary(_) => {
            let _ = writeln!(out, "policy stationary");
        }
        Policy::NonStationary { rules, .. } => {
            let _ = writeln!(out, "policy nonstationary horizon {}", rules.len());
        }
    }
    let _ = writeln!(out, "machine {}", if machine.label().is_empty() { "-" } else { machine.label() });
    let _ = writeln!(out, "agent_states {}", tail.n_agent_states());
    let _ = writeln!(out, "actions {}", tail.n_actions());
    match policy {
        Policy::Stationary(rule) => write_rule(&mut out, "tail", rule),
        Policy::NonStationary { rules, tail } => {
            for (t, r) in rules.iter().enumerate() {
                write_rule(&mut out, &(t + 1).to_string(), r);
            }
            write_rule(&mut out, "tail", tail);
        }
    }
    out
}

/// Reads a policy written by [`serialize_policy`]; returns it with the
/// machine name it refers to.
pub fn parse_policy(text: &str) -> Result<(Policy, String)> {
    let all = lines(text);
    let mut it = all.iter();
    let last_line = text.lines().count().max(1);
    fn next_line<'a>(
        it: &mut std::slice::Iter<'_, (usize, Vec<Token<'a>>)>,
        last_line: usize,
        what: &str,
    ) -> Result<(usize, Vec<Token<'a>>)> {
        it.next()
            .cloned()
            .ok_or_else(|| parse_error(last_line, 1, format!("unexpected end of input, expected {what}")))
    }
    let (line, head) = next_line(&mut it, last_line, "`policy`")?;
    head[0].expect("policy")?;
    let horizon = match head.get(1).map(|t| t.text) {
        Some("stationary") => {
            arity(&head, 2, line)?;
            None
        }
        Some("nonstationary") => {
            arity(&head, 4, line)?;
            head[2].expect("horizon")?;
            let h = head[3].usize()?;
            if h == 0 {
                return Err(head[3].error("horizon must be positive"));
            }
            Some(h)
        }
        _ => return Err(head[0].error("expected `policy stationary` or `policy nonstationary horizon n`")),
    };
    let (line, mline) = next_line(&mut it, last_line, "`machine`")?;
    arity(&mline, 2, line)?;
    mline[0].expect("machine")?;
    let machine = mline[1].text.to_string();
    let (line, zl) = next_line(&mut it, last_line, "`agent_states`")?;
    arity(&zl, 2, line)?;
    zl[0].expect("agent_states")?;
    let nz = zl[1].usize()?;
    let (line, al) = next_line(&mut it, last_line, "`actions`")?;
    arity(&al, 2, line)?;
    al[0].expect("actions")?;
    let na = al[1].usize()?;
    if nz == 0 || na == 0 {
        return Err(al[1].error("dimensions must be positive"));
    }

    let expected: Vec<String> = match horizon {
        None => vec!["tail".into()],
        Some(h) => (1..=h).map(|t| t.to_string()).chain(std::iter::once("tail".into())).collect(),
    };
    let mut rules = Vec::with_capacity(expected.len());
    for tag in &expected {
        let (line, rl) = next_line(&mut it, last_line, "`rule`")?;
        arity(&rl, 3, line)?;
        rl[0].expect("rule")?;
        rl[1].expect(tag)?;
        let deterministic = match rl[2].text {
            "deterministic" => true,
            "stochastic" => false,
            _ => return Err(rl[2].error("rule kind must be `deterministic` or `stochastic`")),
        };
        let mut actions = Vec::with_capacity(nz);
        let mut rows = Vec::with_capacity(nz);
        for z in 0..nz {
            let (line, row) = next_line(&mut it, last_line, "a rule row")?;
            let zt = row[0].index(nz, "agent state")?;
            if zt != z {
                return Err(row[0].error(format!("expected row for agent state {z}")));
            }
            if deterministic {
                arity(&row, 3, line)?;
                row[1].expect("->")?;
                actions.push(row[2].index(na, "action")?);
            } else {
                arity(&row, 2 + na, line)?;
                row[1].expect(":")?;
                rows.push(row[2..].iter().map(|t| t.f64()).collect::<Result<Vec<f64>>>()?);
            }
        }
        let (_, end) = next_line(&mut it, last_line, "`end`")?;
        end[0].expect("end")?;
        let rule = if deterministic {
            DecisionRule::deterministic(actions, na)?
        } else {
            DecisionRule::stochastic(rows)?
        };
        rules.push(rule);
    }
    if let Some((_, extra)) = it.next() {
        return Err(extra[0].error("unexpected content after the last rule"));
    }
    let tail = rules.pop().expect("tail rule parsed");
    let policy = if rules.is_empty() {
        Policy::Stationary(tail)
    } else {
        Policy::non_stationary(rules, tail)?
    };
    Ok((policy, machine))
}
