//! The `.swid` model format.
//!
//! One file holds a `graph` block, at most one of a `scm` or `dist` block, and
//! a `query` block. `#` starts a comment that runs to the end of the line.
//!
//! ```text
//! graph {
//!   node X {0, 1};
//!   latent node U;
//!   X -> Y;
//!   U -> Y when X = 0;
//! }
//! scm {
//!   noise X = [1/2, 1/2];
//!   table X [] { : 0 1; }
//! }
//! query {
//!   regime X = x;
//!   bind x = 1;
//!   outcome Y;
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use swid_core::dist::{self, parse_prob};
use swid_core::{
    preset, CausalDag, DiscreteJoint, EdgeSpec, Level, Mechanism, NodeSpec, NoiseDist, Prob, Regime, RegimeSpec, Scm,
    StepRole,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: {message}")]
    Semantic { line: usize, col: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Arrow,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Colon,
    Eq,
    Pipe,
    Indep,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Arrow => "`->`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Indep => "`_||_`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Pos {
    line: usize,
    col: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '/')
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos { line: li + 1, col: i + 1 };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
            let (tok, len) = if rest == "_||_" {
                (Tok::Indep, 4)
            } else if rest.starts_with("->") {
                (Tok::Arrow, 2)
            } else if is_word_char(c) {
                let end = (i..chars.len()).find(|&j| !is_word_char(chars[j])).unwrap_or(chars.len());
                (Tok::Word(chars[i..end].iter().collect()), end - i)
            } else {
                let t = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    '=' => Tok::Eq,
                    '|' => Tok::Pipe,
                    other => {
                        return Err(DslError::Syntax {
                            line: pos.line,
                            col: pos.col,
                            expected: "a token".into(),
                            found: format!("`{other}`"),
                        })
                    }
                };
                (t, 1)
            };
            out.push((tok, pos));
            i += len;
        }
    }
    let end = Pos {
        line: text.lines().count().max(1),
        col: text.lines().last().map_or(1, |l| l.chars().count() + 1),
    };
    out.push((Tok::Eof, end));
    Ok(out)
}

#[derive(Debug, Clone)]
struct Name {
    text: String,
    pos: Pos,
}

#[derive(Debug, Default)]
struct RawGraph {
    pos: Pos,
    nodes: Vec<(Name, bool, Option<Vec<Name>>)>,
    edges: Vec<(Name, Name, Option<(Name, Vec<Name>)>)>,
}

#[derive(Debug, Default)]
struct RawScm {
    pos: Pos,
    noise: Vec<(Name, Vec<Name>)>,
    tables: Vec<(Name, Vec<Name>, Vec<(Vec<Name>, Vec<Name>)>)>,
}

#[derive(Debug)]
struct RawDist {
    pos: Pos,
    vars: Vec<Name>,
    rows: Vec<(Vec<Name>, Name)>,
}

#[derive(Debug, Default)]
struct RawQuery {
    pos: Pos,
    preset: Option<Name>,
    regime: Option<Vec<(Name, Name)>>,
    bindings: Vec<(Name, Name)>,
    outcome: Option<Name>,
    covariates: Option<Vec<Name>>,
    histories: Vec<(Name, Vec<Name>)>,
    roles: Vec<(Name, Name)>,
    thresholds: Option<Vec<Name>>,
    claims: Vec<(Vec<Name>, Vec<Name>, Vec<Name>)>,
    options: Vec<Name>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn error<T>(&self, expected: &str) -> Result<T, DslError> {
        let (tok, pos) = &self.toks[self.at];
        Err(DslError::Syntax {
            line: pos.line,
            col: pos.col,
            expected: expected.into(),
            found: tok.describe(),
        })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), DslError> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.error(&t.describe())
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w == kw)
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self, what: &str) -> Result<Name, DslError> {
        match self.peek().clone() {
            Tok::Word(text) => {
                let pos = self.pos();
                self.at += 1;
                Ok(Name { text, pos })
            }
            _ => self.error(what),
        }
    }

    /// `a, b, c` up to (not including) `close`; may be empty.
    fn list_until(&mut self, close: &Tok, what: &str) -> Result<Vec<Name>, DslError> {
        let mut out = Vec::new();
        if self.peek() == close {
            return Ok(out);
        }
        loop {
            out.push(self.word(what)?);
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    /// Consecutive words, stopping at the first other token.
    fn words(&mut self) -> Vec<Name> {
        let mut out = Vec::new();
        while let Tok::Word(text) = self.peek().clone() {
            out.push(Name { text, pos: self.pos() });
            self.at += 1;
        }
        out
    }

    fn braced_labels(&mut self) -> Result<Vec<Name>, DslError> {
        self.expect(Tok::LBrace)?;
        let labels = self.list_until(&Tok::RBrace, "a level label")?;
        self.expect(Tok::RBrace)?;
        Ok(labels)
    }

    fn bracketed_names(&mut self) -> Result<Vec<Name>, DslError> {
        self.expect(Tok::LBracket)?;
        let names = self.list_until(&Tok::RBracket, "a variable name")?;
        self.expect(Tok::RBracket)?;
        Ok(names)
    }

    fn graph(&mut self, pos: Pos) -> Result<RawGraph, DslError> {
        let mut g = RawGraph {
            pos,
            ..Default::default()
        };
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            let latent = self.keyword("latent");
            if latent || self.is_keyword("node") {
                if !self.keyword("node") {
                    return self.error("`node`");
                }
                let name = self.word("a node name")?;
                let support = if *self.peek() == Tok::LBrace {
                    Some(self.braced_labels()?)
                } else {
                    None
                };
                self.expect(Tok::Semi)?;
                g.nodes.push((name, !latent, support));
                continue;
            }
            let from = self.word("`node`, `latent`, an edge or `}`")?;
            self.expect(Tok::Arrow)?;
            let to = self.word("a node name")?;
            let gate = if self.keyword("when") {
                let on = self.word("a node name")?;
                let levels = if self.eat(&Tok::Eq) {
                    vec![self.word("a level label")?]
                } else if self.keyword("in") {
                    self.braced_labels()?
                } else {
                    return self.error("`=` or `in`");
                };
                Some((on, levels))
            } else {
                None
            };
            self.expect(Tok::Semi)?;
            g.edges.push((from, to, gate));
        }
        Ok(g)
    }

    fn scm(&mut self, pos: Pos) -> Result<RawScm, DslError> {
        let mut s = RawScm {
            pos,
            ..Default::default()
        };
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            if self.keyword("noise") {
                let name = self.word("a node name")?;
                self.expect(Tok::Eq)?;
                self.expect(Tok::LBracket)?;
                let probs = self.list_until(&Tok::RBracket, "a probability")?;
                self.expect(Tok::RBracket)?;
                self.expect(Tok::Semi)?;
                s.noise.push((name, probs));
            } else if self.keyword("table") {
                let name = self.word("a node name")?;
                let parents = self.bracketed_names()?;
                self.expect(Tok::LBrace)?;
                let mut rows = Vec::new();
                while !self.eat(&Tok::RBrace) {
                    let inputs = self.words();
                    self.expect(Tok::Colon)?;
                    let outputs = self.words();
                    if outputs.is_empty() {
                        return self.error("an output level");
                    }
                    self.expect(Tok::Semi)?;
                    rows.push((inputs, outputs));
                }
                s.tables.push((name, parents, rows));
            } else {
                return self.error("`noise`, `table` or `}`");
            }
        }
        Ok(s)
    }

    fn dist(&mut self, pos: Pos) -> Result<RawDist, DslError> {
        let vars = self.bracketed_names()?;
        self.expect(Tok::LBrace)?;
        let mut rows = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let levels = self.words();
            self.expect(Tok::Colon)?;
            let p = self.word("a probability")?;
            self.expect(Tok::Semi)?;
            rows.push((levels, p));
        }
        Ok(RawDist { pos, vars, rows })
    }

    fn assignments(&mut self, what: &str) -> Result<Vec<(Name, Name)>, DslError> {
        let mut out = Vec::new();
        loop {
            let k = self.word(what)?;
            self.expect(Tok::Eq)?;
            let v = self.word("a value")?;
            out.push((k, v));
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn query(&mut self, pos: Pos) -> Result<RawQuery, DslError> {
        let mut q = RawQuery {
            pos,
            ..Default::default()
        };
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            if self.keyword("preset") {
                q.preset = Some(self.word("a scenario name")?);
            } else if self.keyword("regime") {
                q.regime = Some(if self.peek() == &Tok::Semi {
                    Vec::new()
                } else {
                    self.assignments("a node name")?
                });
            } else if self.keyword("bind") {
                q.bindings.extend(self.assignments("a symbol")?);
            } else if self.keyword("outcome") {
                q.outcome = Some(self.word("a node name")?);
            } else if self.keyword("covariates") {
                q.covariates = Some(self.list_until(&Tok::Semi, "a node name")?);
            } else if self.keyword("history") {
                let d = self.word("a decision name")?;
                self.expect(Tok::Colon)?;
                q.histories.push((d, self.list_until(&Tok::Semi, "a node name")?));
            } else if self.keyword("role") {
                let d = self.word("a decision name")?;
                q.roles.push((d, self.word("a step role")?));
            } else if self.keyword("thresholds") {
                q.thresholds = Some(self.list_until(&Tok::Semi, "an outcome level")?);
            } else if self.keyword("claim") {
                let left = self.list_until(&Tok::Indep, "a node name")?;
                self.expect(Tok::Indep)?;
                let right = self.list_until(&Tok::Pipe, "a node name")?;
                let given = if self.eat(&Tok::Pipe) {
                    self.list_until(&Tok::Semi, "a node name")?
                } else {
                    Vec::new()
                };
                q.claims.push((left, right, given));
            } else if self.keyword("option") {
                q.options.push(self.word("an option name")?);
            } else {
                return self.error(
                    "`preset`, `regime`, `bind`, `outcome`, `covariates`, `history`, `role`, `thresholds`, `claim`, `option` or `}`",
                );
            }
            self.expect(Tok::Semi)?;
        }
        Ok(q)
    }
}

/// `left _||_ right | given`, over node names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub given: Vec<String>,
}

pub const OPTIONS: [&str; 1] = ["allow_nonpositive"];

/// The query block as written, after validation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Query {
    pub preset: Option<String>,
    /// `(variable, value)` where the value is a support label or a symbol.
    pub regime: Option<Vec<(String, String)>>,
    pub bindings: BTreeMap<String, String>,
    pub outcome: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub histories: BTreeMap<String, Vec<String>>,
    pub roles: BTreeMap<String, StepRole>,
    pub thresholds: Option<Vec<String>>,
    pub claims: Vec<Claim>,
    pub options: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub dag: CausalDag,
    pub scm: Option<Scm>,
    pub dist: Option<DiscreteJoint>,
    pub query: Query,
}

/// Query fields with preset defaults filled in and everything resolved
/// against the graph.
#[derive(Debug, Clone)]
pub struct ResolvedQuery {
    pub scenario: Option<String>,
    /// Regime as written, possibly symbolic.
    pub template: Regime,
    pub regime: Regime,
    pub spec: RegimeSpec,
    pub thresholds: Vec<Level>,
    pub claims: Vec<Claim>,
    pub allow_nonpositive: bool,
}

fn semantic<T>(pos: Pos, message: impl Into<String>) -> Result<T, DslError> {
    Err(DslError::Semantic {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    })
}

fn names(list: &[Name]) -> Vec<String> {
    list.iter().map(|n| n.text.clone()).collect()
}

pub fn parse_model(text: &str) -> Result<ModelFile, DslError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let mut graph = None;
    let mut scm = None;
    let mut dist = None;
    let mut query = None;
    loop {
        let pos = p.pos();
        let dup = |seen: bool, what: &str| if seen { semantic(pos, format!("second `{what}` block")) } else { Ok(()) };
        if p.keyword("graph") {
            dup(graph.is_some(), "graph")?;
            graph = Some(p.graph(pos)?);
        } else if p.keyword("scm") {
            dup(scm.is_some(), "scm")?;
            scm = Some(p.scm(pos)?);
        } else if p.keyword("dist") {
            dup(dist.is_some(), "dist")?;
            dist = Some(p.dist(pos)?);
        } else if p.keyword("query") {
            dup(query.is_some(), "query")?;
            query = Some(p.query(pos)?);
        } else if *p.peek() == Tok::Eof {
            break;
        } else {
            return p.error("`graph`, `scm`, `dist` or `query`");
        }
    }
    let query = query.unwrap_or_default();
    let query_pos = query.pos;
    let dag = match graph {
        Some(g) => build_graph(&g)?,
        None => match &query.preset {
            Some(name) => preset(&name.text).or_else(|e| semantic(name.pos, e.to_string()))?.dag,
            None => return semantic(Pos { line: 1, col: 1 }, "missing `graph` block"),
        },
    };
    if let (Some(_), Some(d)) = (&scm, &dist) {
        return semantic(d.pos, "a model has either an `scm` or a `dist` block, not both");
    }
    let scm = scm.map(|s| build_scm(&dag, &s)).transpose()?;
    let dist = dist.map(|d| build_dist(&dag, &d)).transpose()?;
    let query = build_query(&dag, &query)?;
    let model = ModelFile { dag, scm, dist, query };
    if model.query.regime.is_some() || model.query.preset.is_some() {
        let pos = query_pos;
        model
            .resolve_template()
            .and_then(|_| model.resolve())
            .or_else(|e| semantic(pos, e))?;
    }
    Ok(model)
}

fn build_graph(g: &RawGraph) -> Result<CausalDag, DslError> {
    let mut nodes = Vec::new();
    for (name, observed, support) in &g.nodes {
        let mut spec = if *observed {
            NodeSpec::new(&name.text)
        } else {
            NodeSpec::latent(&name.text)
        }
        .or_else(|e| semantic(name.pos, e.to_string()))?;
        if let Some(labels) = support {
            spec = spec.with_support(labels.iter().map(|l| l.text.clone()));
        }
        nodes.push(spec);
    }
    let mut edges = Vec::new();
    for (from, to, gate) in &g.edges {
        let mut e = EdgeSpec::new(&from.text, &to.text).or_else(|e| semantic(from.pos, e.to_string()))?;
        if let Some((on, labels)) = gate {
            let node = nodes
                .iter()
                .find(|n| n.id.as_str() == on.text)
                .map_or_else(|| semantic(on.pos, format!("unknown node {}", on.text)), Ok)?;
            let mut levels = Vec::new();
            for l in labels {
                levels.push(
                    node.level_of(&l.text)
                        .map_or_else(|| semantic(l.pos, format!("{} is not a level of {}", l.text, on.text)), Ok)?,
                );
            }
            e = e.gated(&on.text, &levels).or_else(|e| semantic(on.pos, e.to_string()))?;
        }
        edges.push(e);
    }
    CausalDag::new(nodes, edges).or_else(|e| semantic(g.pos, e.to_string()))
}

fn level_of(dag: &CausalDag, var: &str, label: &Name) -> Result<u32, DslError> {
    let node = dag.get(var).expect("resolved node");
    node.level_of(&label.text)
        .map_or_else(|| semantic(label.pos, format!("{} is not a level of {var}", label.text)), Ok)
}

fn node_index(dag: &CausalDag, name: &Name) -> Result<usize, DslError> {
    dag.index_of(&name.text).or_else(|e| semantic(name.pos, e.to_string()))
}

fn build_scm(dag: &CausalDag, s: &RawScm) -> Result<Scm, DslError> {
    let n = dag.len();
    let mut noise: Vec<Option<NoiseDist>> = vec![None; n];
    for (name, probs) in &s.noise {
        let v = node_index(dag, name)?;
        if noise[v].is_some() {
            return semantic(name.pos, format!("second noise declaration for {}", name.text));
        }
        let mut ps = Vec::new();
        for p in probs {
            ps.push(parse_prob(&p.text).or_else(|e| semantic(p.pos, e.to_string()))?);
        }
        noise[v] = Some(NoiseDist::new(ps).or_else(|e| semantic(name.pos, format!("noise for {}: {e}", name.text)))?);
    }
    let mut tables: Vec<Option<Vec<u32>>> = vec![None; n];
    for (name, parents, rows) in &s.tables {
        let v = node_index(dag, name)?;
        if tables[v].is_some() {
            return semantic(name.pos, format!("second table for {}", name.text));
        }
        let Some(nd) = &noise[v] else {
            return semantic(name.pos, format!("table for {} precedes its noise declaration", name.text));
        };
        let m = nd.len();
        let dag_parents = dag.parents_of(v);
        let listed: Vec<usize> = parents.iter().map(|p| node_index(dag, p)).collect::<Result<_, _>>()?;
        let mut sorted = listed.clone();
        sorted.sort_unstable();
        let mut expected = dag_parents.to_vec();
        expected.sort_unstable();
        if sorted != expected {
            let want: Vec<&str> = dag_parents.iter().map(|&p| dag.node(p).id.as_str()).collect();
            return semantic(name.pos, format!("table for {} must list the parents [{}]", name.text, want.join(", ")));
        }
        let radix = |p: usize| dag.node(p).support.len();
        let configs: usize = dag_parents.iter().map(|&p| radix(p)).product();
        let mut out: Vec<Option<Vec<u32>>> = vec![None; configs];
        for (inputs, outputs) in rows {
            let row_pos = outputs[0].pos;
            if inputs.len() != listed.len() {
                return semantic(row_pos, format!("row has {} parent levels, expected {}", inputs.len(), listed.len()));
            }
            let mut by_parent = BTreeMap::new();
            for (&p, l) in listed.iter().zip(inputs) {
                by_parent.insert(p, level_of(dag, dag.node(p).id.as_str(), l)?);
            }
            let config = dag_parents.iter().fold(0, |acc, p| acc * radix(*p) + by_parent[p] as usize);
            if out[config].is_some() {
                return semantic(row_pos, "parent configuration listed twice");
            }
            if outputs.len() != m {
                return semantic(row_pos, format!("row has {} outputs, expected one per noise level ({m})", outputs.len()));
            }
            let levels = outputs
                .iter()
                .map(|o| level_of(dag, &name.text, o))
                .collect::<Result<Vec<_>, _>>()?;
            out[config] = Some(levels);
        }
        if let Some(missing) = out.iter().position(Option::is_none) {
            let mut rest = missing;
            let mut labels = vec![String::new(); dag_parents.len()];
            for (k, &p) in dag_parents.iter().enumerate().rev() {
                labels[k] = format!("{}={}", dag.node(p).id, dag.node(p).support[rest % radix(p)]);
                rest /= radix(p);
            }
            return semantic(name.pos, format!("table for {} misses the row {}", name.text, labels.join(", ")));
        }
        tables[v] = Some(out.into_iter().flatten().flatten().collect());
    }
    let mut mechanisms = Vec::with_capacity(n);
    let mut noises = Vec::with_capacity(n);
    for v in 0..n {
        let id = &dag.node(v).id;
        let (Some(nd), Some(t)) = (noise[v].take(), tables[v].take()) else {
            return semantic(s.pos, format!("incomplete mechanism: {id} needs both `noise` and `table`"));
        };
        noises.push(nd);
        mechanisms.push(Mechanism { outputs: t });
    }
    Scm::new(dag.clone(), noises, mechanisms).or_else(|e| semantic(s.pos, e.to_string()))
}

fn build_dist(dag: &CausalDag, d: &RawDist) -> Result<DiscreteJoint, DslError> {
    let mut vars = Vec::new();
    for name in &d.vars {
        let v = node_index(dag, name)?;
        let node = dag.node(v);
        vars.push(dist::JointVar {
            name: node.id.to_string(),
            support: node.support.clone(),
        });
    }
    let mut rows = Vec::new();
    for (labels, p) in &d.rows {
        if labels.len() != vars.len() {
            return semantic(p.pos, format!("row has {} levels, expected {}", labels.len(), vars.len()));
        }
        let levels = labels
            .iter()
            .zip(&vars)
            .map(|(l, v)| level_of(dag, &v.name, l))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((levels, parse_prob(&p.text).or_else(|e| semantic(p.pos, e.to_string()))?));
    }
    DiscreteJoint::from_rows(vars, rows).or_else(|e| semantic(d.pos, e.to_string()))
}

fn build_query(dag: &CausalDag, q: &RawQuery) -> Result<Query, DslError> {
    let known = |n: &Name| node_index(dag, n).map(|_| n.text.clone());
    let unique = |items: &[&Name], what: &str| -> Result<(), DslError> {
        let mut seen = BTreeSet::new();
        for n in items {
            if !seen.insert(n.text.as_str()) {
                return semantic(n.pos, format!("{what} {} given twice", n.text));
            }
        }
        Ok(())
    };
    if let Some(p) = &q.preset {
        preset(&p.text).or_else(|e| semantic(p.pos, e.to_string()))?;
    }
    let regime = match &q.regime {
        Some(steps) => {
            unique(&steps.iter().map(|(k, _)| k).collect::<Vec<_>>(), "regime variable")?;
            Some(
                steps
                    .iter()
                    .map(|(k, v)| Ok((known(k)?, v.text.clone())))
                    .collect::<Result<Vec<_>, DslError>>()?,
            )
        }
        None => None,
    };
    unique(&q.bindings.iter().map(|(k, _)| k).collect::<Vec<_>>(), "symbol")?;
    let bindings = q.bindings.iter().map(|(k, v)| (k.text.clone(), v.text.clone())).collect();
    let outcome = q.outcome.as_ref().map(known).transpose()?;
    let covariates = q
        .covariates
        .as_ref()
        .map(|c| c.iter().map(known).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    unique(&q.histories.iter().map(|(k, _)| k).collect::<Vec<_>>(), "history for")?;
    let mut histories = BTreeMap::new();
    for (d, h) in &q.histories {
        histories.insert(known(d)?, h.iter().map(known).collect::<Result<Vec<_>, _>>()?);
    }
    unique(&q.roles.iter().map(|(k, _)| k).collect::<Vec<_>>(), "role for")?;
    let mut roles = BTreeMap::new();
    for (d, r) in &q.roles {
        let role = r.text.parse::<StepRole>().or_else(|e| semantic(r.pos, e))?;
        roles.insert(known(d)?, role);
    }
    let thresholds = q.thresholds.as_ref().map(|t| names(t));
    let mut claims = Vec::new();
    for (l, r, g) in &q.claims {
        let resolve = |list: &[Name]| list.iter().map(known).collect::<Result<Vec<_>, _>>();
        claims.push(Claim {
            left: resolve(l)?,
            right: resolve(r)?,
            given: resolve(g)?,
        });
    }
    let mut options = BTreeSet::new();
    for o in &q.options {
        if !OPTIONS.contains(&o.text.as_str()) {
            return semantic(o.pos, format!("unknown option {}", o.text));
        }
        options.insert(o.text.clone());
    }
    Ok(Query {
        preset: q.preset.as_ref().map(|p| p.text.clone()),
        regime,
        bindings,
        outcome,
        covariates,
        histories,
        roles,
        thresholds,
        claims,
        options,
    })
}

impl ModelFile {
    /// The regime as written (or the preset's), without binding symbols.
    pub fn resolve_template(&self) -> Result<Regime, String> {
        let q = &self.query;
        let template = match (&q.regime, &q.preset) {
            (Some(steps), _) => {
                let tokens: Vec<(&str, &str)> = steps.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
                Regime::from_tokens(&self.dag, &tokens).map_err(|e| e.to_string())?
            }
            (None, Some(p)) => preset(p).map_err(|e| e.to_string())?.template,
            (None, None) => return Err("the query declares no regime".into()),
        };
        template.check_order(&self.dag).map_err(|e| e.to_string())?;
        Ok(template)
    }

    pub fn resolve(&self) -> Result<ResolvedQuery, String> {
        self.resolve_with(None)
    }

    /// Resolves the query, optionally replacing its regime by `regime`.
    pub fn resolve_with(&self, regime: Option<Regime>) -> Result<ResolvedQuery, String> {
        let q = &self.query;
        let scenario = q.preset.as_ref().map(|p| preset(p).map_err(|e| e.to_string())).transpose()?;
        let template = match regime {
            Some(r) => r,
            None => self.resolve_template()?,
        };
        let mut bindings = scenario.as_ref().map(|s| s.bindings.clone()).unwrap_or_default();
        bindings.extend(q.bindings.clone());
        let regime = template.bind(&self.dag, &bindings).map_err(|e| e.to_string())?;
        let outcome = q
            .outcome
            .clone()
            .or_else(|| scenario.as_ref().map(|s| s.outcome.clone()))
            .ok_or("the query declares no outcome")?;
        let baseline: Vec<String> = q
            .covariates
            .clone()
            .or_else(|| scenario.as_ref().map(|s| s.baseline.clone()))
            .unwrap_or_default();
        let mut roles = scenario.as_ref().map(|s| s.roles.clone()).unwrap_or_default();
        roles.extend(q.roles.clone());
        for d in q.histories.keys().chain(q.roles.keys()) {
            if regime.position(d).is_none() {
                return Err(format!("{d} is not a regime variable"));
            }
        }
        let baseline_refs: Vec<&str> = baseline.iter().map(String::as_str).collect();
        let mut spec = RegimeSpec::from_regime(&self.dag, &regime, &baseline_refs, &outcome, &roles)
            .map_err(|e| e.to_string())?;
        if !q.histories.is_empty() {
            for step in &mut spec.steps {
                step.history = q.histories.get(&step.decision).cloned().unwrap_or_default();
            }
            spec = RegimeSpec::new(spec.baseline, spec.steps, spec.outcome).map_err(|e| e.to_string())?;
            spec.check_order(&self.dag).map_err(|e| e.to_string())?;
        }
        let y_node = self.dag.get(&outcome).ok_or_else(|| format!("unknown outcome {outcome}"))?;
        let thresholds = match &q.thresholds {
            Some(labels) => labels
                .iter()
                .map(|l| {
                    y_node
                        .level_of(l)
                        .map(Level)
                        .ok_or_else(|| format!("{l} is not a level of {outcome}"))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => (0..y_node.support.len() as u32).map(Level).collect(),
        };
        Ok(ResolvedQuery {
            scenario: q.preset.clone(),
            template,
            regime,
            spec,
            thresholds,
            claims: q.claims.clone(),
            allow_nonpositive: q.options.contains("allow_nonpositive"),
        })
    }
}

fn join<S: AsRef<str>>(items: &[S]) -> String {
    items.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(", ")
}

/// Canonical text; parsing it yields an equal [`ModelFile`].
pub fn write_model(m: &ModelFile) -> String {
    let dag = &m.dag;
    let mut out = String::from("graph {\n");
    for n in dag.nodes() {
        let latent = if n.observed { "" } else { "latent " };
        let _ = writeln!(out, "  {latent}node {} {{{}}};", n.id, join(&n.support));
    }
    for e in dag.edges() {
        let _ = write!(out, "  {} -> {}", e.from, e.to);
        if let Some(g) = &e.gate {
            let on = dag.get(g.on.as_str()).expect("gate on a node");
            let labels: Vec<&str> = g.levels.iter().map(|&l| on.support[l as usize].as_str()).collect();
            if labels.len() == 1 {
                let _ = write!(out, " when {} = {}", g.on, labels[0]);
            } else {
                let _ = write!(out, " when {} in {{{}}}", g.on, join(&labels));
            }
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");

    if let Some(scm) = &m.scm {
        out.push_str("scm {\n");
        for v in 0..dag.len() {
            let node = dag.node(v);
            let probs: Vec<String> = scm.noise(v).probs().iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "  noise {} = [{}];", node.id, join(&probs));
            let parents: Vec<&str> = dag.parents_of(v).iter().map(|&p| dag.node(p).id.as_str()).collect();
            let _ = writeln!(out, "  table {} [{}] {{", node.id, join(&parents));
            for c in 0..scm.parent_configs(v) {
                let inputs: Vec<&str> = scm
                    .decode_config(v, c)
                    .iter()
                    .zip(dag.parents_of(v))
                    .map(|(&l, &p)| dag.node(p).support[l as usize].as_str())
                    .collect();
                let outputs: Vec<&str> = scm.row(v, c).iter().map(|&o| node.support[o as usize].as_str()).collect();
                let lhs = if inputs.is_empty() { String::new() } else { format!("{} ", inputs.join(" ")) };
                let _ = writeln!(out, "    {lhs}: {};", outputs.join(" "));
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
    }

    if let Some(d) = &m.dist {
        let names: Vec<&str> = d.vars().iter().map(|v| v.name.as_str()).collect();
        let _ = writeln!(out, "dist [{}] {{", join(&names));
        for (cell, p) in d.table().iter().enumerate() {
            if num_is_zero(p) {
                continue;
            }
            let labels: Vec<&str> = d
                .decode(cell)
                .iter()
                .zip(d.vars())
                .map(|(&l, v)| v.support[l as usize].as_str())
                .collect();
            let _ = writeln!(out, "  {} : {p};", labels.join(" "));
        }
        out.push_str("}\n");
    }

    let q = &m.query;
    out.push_str("query {\n");
    if let Some(p) = &q.preset {
        let _ = writeln!(out, "  preset {p};");
    }
    if let Some(steps) = &q.regime {
        let parts: Vec<String> = steps.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        let _ = writeln!(out, "  regime {};", join(&parts));
    }
    if !q.bindings.is_empty() {
        let parts: Vec<String> = q.bindings.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        let _ = writeln!(out, "  bind {};", join(&parts));
    }
    if let Some(o) = &q.outcome {
        let _ = writeln!(out, "  outcome {o};");
    }
    if let Some(c) = &q.covariates {
        let _ = writeln!(out, "  covariates {};", join(c));
    }
    for (d, h) in &q.histories {
        let _ = writeln!(out, "  history {d} : {};", join(h));
    }
    for (d, r) in &q.roles {
        let _ = writeln!(out, "  role {d} {};", r.as_str());
    }
    if let Some(t) = &q.thresholds {
        let _ = writeln!(out, "  thresholds {};", join(t));
    }
    for c in &q.claims {
        let _ = write!(out, "  claim {} _||_ {}", join(&c.left), join(&c.right));
        if !c.given.is_empty() {
            let _ = write!(out, " | {}", join(&c.given));
        }
        out.push_str(";\n");
    }
    for o in &q.options {
        let _ = writeln!(out, "  option {o};");
    }
    out.push_str("}\n");
    out
}

fn num_is_zero(p: &Prob) -> bool {
    *p == dist::ratio(0, 1)
}

/// `# expect: <command> <exit code>` annotations, in file order.
pub fn expectations(text: &str) -> Vec<(String, i32)> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#')?.trim().strip_prefix("expect:"))
        .filter_map(|rest| {
            let mut it = rest.split_whitespace();
            let cmd = it.next()?.to_string();
            let code = it.next()?.parse().ok()?;
            Some((cmd, code))
        })
        .collect()
}
