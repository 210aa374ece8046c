//! Reader for Cassandra's `.pomdp` text format.
//!
//! Supported: `discount`, `values: reward`, `states`/`actions`/`observations`
//! as counts or name lists, `start` as a vector, `uniform`, a single state,
//! or `include:`/`exclude:` lists, and every `T`, `O` and `R` entry form
//! including `*`, `uniform` and `identity`. Later entries override earlier
//! ones. The format has no initial observation, so the model emits
//! observation 0 at t = 1.

use super::native::{parse_error, Token};
use crate::error::{Error, Result};
use crate::model::{ModelParts, PomdpModel};

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut start: Option<usize> = None;
        fn flush<'a>(content: &'a str, line: usize, start: &mut Option<usize>, end: usize, out: &mut Vec<Token<'a>>) {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &content[s..end],
                    line,
                    column: content[..s].chars().count() + 1,
                });
            }
        }
        for (j, c) in content.char_indices() {
            if c == ':' {
                flush(content, i + 1, &mut start, j, &mut out);
                out.push(Token {
                    text: &content[j..j + 1],
                    line: i + 1,
                    column: content[..j].chars().count() + 1,
                });
            } else if c.is_whitespace() {
                flush(content, i + 1, &mut start, j, &mut out);
            } else if start.is_none() {
                start = Some(j);
            }
        }
        flush(content, i + 1, &mut start, content.len(), &mut out);
    }
    out
}

struct Names {
    count: usize,
    names: Vec<String>,
}

impl Names {
    fn resolve(&self, tok: &Token<'_>, what: &str) -> Result<Vec<usize>> {
        if tok.text == "*" {
            return Ok((0..self.count).collect());
        }
        if let Some(i) = self.names.iter().position(|n| n == tok.text) {
            return Ok(vec![i]);
        }
        if self.names.is_empty() || tok.text.parse::<usize>().is_ok() {
            return Ok(vec![tok.index(self.count, what)?]);
        }
        Err(tok.error(format!("unknown {what} `{}`", tok.text)))
    }
}

struct Reader<'a> {
    toks: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.toks.get(self.pos)
    }

    fn peek_is(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text)
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| parse_error(self.last_line, 1, format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn colon(&mut self) -> Result<()> {
        self.next("`:`")?.expect(":")
    }

    fn numbers(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.next("a number")?.f64()).collect()
    }

    /// Reads a header value: a count or a list of names up to the next line
    /// break.
    fn names(&mut self) -> Result<Names> {
        let first = self.next("a count or names")?;
        if let Ok(count) = first.text.parse::<usize>() {
            if count == 0 {
                return Err(first.error("count must be positive"));
            }
            return Ok(Names {
                count,
                names: Vec::new(),
            });
        }
        let line = first.line;
        let mut names = vec![first.text.to_string()];
        while let Some(t) = self.peek() {
            if t.line != line {
                break;
            }
            names.push(self.next("a name")?.text.to_string());
        }
        Ok(Names {
            count: names.len(),
            names,
        })
    }
}

enum Start {
    Vector(Vec<f64>),
    Uniform,
    Include(Vec<usize>),
    Exclude(Vec<usize>),
}

/// Parses a Cassandra `.pomdp` file into a model.
pub fn parse_cassandra(text: &str) -> Result<PomdpModel> {
    let mut r = Reader {
        toks: tokenize(text),
        pos: 0,
        last_line: text.lines().count().max(1),
    };
    let mut gamma = None;
    let mut dims: [Option<Names>; 3] = [None, None, None];
    let mut start_tok: Option<(Token<'_>, Start)> = None;

    // Preamble.
    while let Some(t) = r.peek().cloned() {
        match t.text {
            "discount" => {
                r.pos += 1;
                r.colon()?;
                let g = r.next("the discount")?;
                gamma = Some((g.f64()?, g));
            }
            "values" => {
                r.pos += 1;
                r.colon()?;
                let v = r.next("`reward` or `cost`")?;
                match v.text {
                    "reward" => {}
                    "cost" => return Err(Error::Unsupported(format!("line {}: `values: cost` is not supported", v.line))),
                    _ => return Err(v.error("expected `reward` or `cost`")),
                }
            }
            "states" | "actions" | "observations" => {
                r.pos += 1;
                r.colon()?;
                let idx = ["states", "actions", "observations"].iter().position(|k| *k == t.text).unwrap();
                dims[idx] = Some(r.names()?);
            }
            "start" => {
                r.pos += 1;
                if r.peek_is("include") || r.peek_is("exclude") {
                    let kw = r.next("include/exclude")?;
                    r.colon()?;
                    let states = dims[0].as_ref().ok_or_else(|| kw.error("`states` must precede `start`"))?;
                    let mut list = Vec::new();
                    while let Some(x) = r.peek().cloned() {
                        if x.line != kw.line {
                            break;
                        }
                        r.pos += 1;
                        list.extend(states.resolve(&x, "state")?);
                    }
                    let s = if kw.text == "include" {
                        Start::Include(list)
                    } else {
                        Start::Exclude(list)
                    };
                    start_tok = Some((kw, s));
                    continue;
                }
                r.colon()?;
                let states = dims[0].as_ref().ok_or_else(|| t.error("`states` must precede `start`"))?;
                let first = r.peek().cloned().ok_or_else(|| t.error("missing start distribution"))?;
                let start = if first.text == "uniform" {
                    r.pos += 1;
                    Start::Uniform
                } else if states.count > 1 && first.text.parse::<f64>().is_err() || {
                    // A lone integer on its line names a single start state.
                    states.count > 1 && r.toks.get(r.pos + 1).is_none_or(|n| n.line != first.line) && first.text.parse::<usize>().is_ok()
                } {
                    r.pos += 1;
                    Start::Include(states.resolve(&first, "state")?)
                } else {
                    Start::Vector(r.numbers(states.count)?)
                };
                start_tok = Some((first, start));
            }
            "T" | "O" | "R" => break,
            _ => return Err(t.error(format!("unexpected `{}` in preamble", t.text))),
        }
    }

    let (gamma, gamma_tok) = gamma.ok_or_else(|| parse_error(1, 1, "missing `discount:`"))?;
    let missing = |k: &str| parse_error(1, 1, format!("missing `{k}:`"));
    let [states, actions, obs] = dims;
    let states = states.ok_or_else(|| missing("states"))?;
    let actions = actions.ok_or_else(|| missing("actions"))?;
    let obs = obs.ok_or_else(|| missing("observations"))?;
    let (ns, na, ny) = (states.count, actions.count, obs.count);
    if !(0.0..1.0).contains(&gamma) {
        return Err(gamma_tok.error("discount must lie in [0, 1)"));
    }

    let mut trans = vec![0.0; na * ns * ns];
    let mut emit = vec![0.0; na * ns * ny];
    let mut rew = vec![0.0; na * ns * ns * ny];

    while let Some(head) = r.peek().cloned() {
        r.pos += 1;
        match head.text {
            "T" => {
                r.colon()?;
                let a_list = actions.resolve(&r.next("an action")?, "action")?;
                if !r.peek_is(":") {
                    let kw = r.peek().cloned();
                    let mat: Vec<f64> = match kw.as_ref().map(|t| t.text) {
                        Some("uniform") => {
                            r.pos += 1;
                            vec![1.0 / ns as f64; ns * ns]
                        }
                        Some("identity") => {
                            r.pos += 1;
                            (0..ns * ns).map(|i| if i / ns == i % ns { 1.0 } else { 0.0 }).collect()
                        }
                        _ => r.numbers(ns * ns)?,
                    };
                    for &a in &a_list {
                        trans[a * ns * ns..(a + 1) * ns * ns].copy_from_slice(&mat);
                    }
                    continue;
                }
                r.colon()?;
                let s_list = states.resolve(&r.next("a state")?, "state")?;
                if !r.peek_is(":") {
                    let row = if r.peek_is("uniform") {
                        r.pos += 1;
                        vec![1.0 / ns as f64; ns]
                    } else {
                        r.numbers(ns)?
                    };
                    for &a in &a_list {
                        for &s in &s_list {
                            trans[(a * ns + s) * ns..(a * ns + s + 1) * ns].copy_from_slice(&row);
                        }
                    }
                    continue;
                }
                r.colon()?;
                let sn_list = states.resolve(&r.next("a state")?, "state")?;
                let p = r.next("a probability")?.f64()?;
                for &a in &a_list {
                    for &s in &s_list {
                        for &sn in &sn_list {
                            trans[(a * ns + s) * ns + sn] = p;
                        }
                    }
                }
            }
            "O" => {
                r.colon()?;
                let a_list = actions.resolve(&r.next("an action")?, "action")?;
                if !r.peek_is(":") {
                    let mat = if r.peek_is("uniform") {
                        r.pos += 1;
                        vec![1.0 / ny as f64; ns * ny]
                    } else {
                        r.numbers(ns * ny)?
                    };
                    for &a in &a_list {
                        emit[a * ns * ny..(a + 1) * ns * ny].copy_from_slice(&mat);
                    }
                    continue;
                }
                r.colon()?;
                let sn_list = states.resolve(&r.next("a state")?, "state")?;
                if !r.peek_is(":") {
                    let row = if r.peek_is("uniform") {
                        r.pos += 1;
                        vec![1.0 / ny as f64; ny]
                    } else {
                        r.numbers(ny)?
                    };
                    for &a in &a_list {
                        for &sn in &sn_list {
                            emit[(a * ns + sn) * ny..(a * ns + sn + 1) * ny].copy_from_slice(&row);
                        }
                    }
                    continue;
                }
                r.colon()?;
                let y_list = obs.resolve(&r.next("an observation")?, "observation")?;
                let p = r.next("a probability")?.f64()?;
                for &a in &a_list {
                    for &sn in &sn_list {
                        for &y in &y_list {
                            emit[(a * ns + sn) * ny + y] = p;
                        }
                    }
                }
            }
            "R" => {
                r.colon()?;
                let a_list = actions.resolve(&r.next("an action")?, "action")?;
                r.colon()?;
                let s_list = states.resolve(&r.next("a state")?, "state")?;
                // Each form fills a block of the (s', y) table for fixed (a, s).
                let (sn_list, y_list, vals): (Vec<usize>, Vec<usize>, Vec<f64>) = if !r.peek_is(":") {
                    ((0..ns).collect(), (0..ny).collect(), r.numbers(ns * ny)?)
                } else {
                    r.colon()?;
                    let sn_list = states.resolve(&r.next("a state")?, "state")?;
                    if !r.peek_is(":") {
                        let row = r.numbers(ny)?;
                        let vals = sn_list.iter().flat_map(|_| row.iter().copied()).collect();
                        (sn_list, (0..ny).collect(), vals)
                    } else {
                        r.colon()?;
                        let y_list = obs.resolve(&r.next("an observation")?, "observation")?;
                        let v = r.next("a reward")?.f64()?;
                        let vals = vec![v; sn_list.len() * y_list.len()];
                        (sn_list, y_list, vals)
                    }
                };
                for &a in &a_list {
                    for &s in &s_list {
                        for (i, &sn) in sn_list.iter().enumerate() {
                            for (j, &y) in y_list.iter().enumerate() {
                                let v = if vals.len() == ns * ny && sn_list.len() == ns && y_list.len() == ny {
                                    vals[sn * ny + y]
                                } else {
                                    vals[i * y_list.len() + j]
                                };
                                rew[((a * ns + s) * ns + sn) * ny + y] = v;
                            }
                        }
                    }
                }
            }
            other => return Err(head.error(format!("expected `T:`, `O:` or `R:`, found `{other}`"))),
        }
    }

    let mut kernel = vec![0.0; ns * na * ns * ny];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            for sn in 0..ns {
                let t = trans[(a * ns + s) * ns + sn];
                for y in 0..ny {
                    let p = t * emit[(a * ns + sn) * ny + y];
                    kernel[((s * na + a) * ns + sn) * ny + y] = p;
                    reward[s * na + a] += p * rew[((a * ns + s) * ns + sn) * ny + y];
                }
            }
        }
    }
    let init_state = match start_tok.map(|(_, s)| s).unwrap_or(Start::Uniform) {
        Start::Vector(v) => v,
        Start::Uniform => vec![1.0 / ns as f64; ns],
        Start::Include(list) => {
            let mut v = vec![0.0; ns];
            for s in &list {
                v[*s] = 1.0 / list.len() as f64;
            }
            v
        }
        Start::Exclude(list) => {
            let keep: Vec<usize> = (0..ns).filter(|s| !list.contains(s)).collect();
            let mut v = vec![0.0; ns];
            for s in &keep {
                v[*s] = 1.0 / keep.len() as f64;
            }
            v
        }
    };
    PomdpModel::from_parts(ModelParts {
        n_states: ns,
        n_actions: na,
        n_obs: ny,
        kernel,
        reward,
        init_state,
        init_obs: None,
        gamma,
        r_max: None,
    })
}
