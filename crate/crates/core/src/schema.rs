//! The schema mini-language.
//!
//! A schema is a short program that decomposes an abstract concept into at most
//! four components. Each component may depend on components declared before it:
//!
//! ```text
//! gen(concept=maze) =
//!     gen(layout | concept=maze)
//!     gen(walls | concept=maze)
//!     gen(entry-exit | concept=maze, layout)
//! ```
//!
//! Parsing yields a [`SchemaProgram`], a dependency DAG whose node order is the
//! declaration order. [`topological_order`] gives the grounding order,
//! [`render_schema`] the canonical text and [`to_dot`] a Graphviz view.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on components per program, taken from the extraction prompt.
pub const MAX_COMPONENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid identifier `{0}`: expected lowercase kebab-case")]
    InvalidIdentifier(String),
    #[error("component `{component}` depends on `{dependency}`, which is not declared before it")]
    UnknownDependency { component: String, dependency: String },
    #[error("component `{0}` is declared more than once")]
    DuplicateComponent(String),
    #[error("component `{component}` lists dependency `{dependency}` more than once")]
    DuplicateDependency { component: String, dependency: String },
    #[error("component `{component}` has concept `{found}`, program concept is `{expected}`")]
    ConceptMismatch {
        component: String,
        expected: String,
        found: String,
    },
    #[error("program has {0} components, at most 4 are allowed")]
    TooManyComponents(usize),
    #[error("program has no components")]
    Empty,
    #[error("node `{0}` has declaration index out of sequence")]
    DeclarationIndex(String),
    #[error("dependency cycle through `{0}`")]
    Cycle(String),
}

impl SchemaError {
    pub fn class_name(&self) -> &'static str {
        match self {
            SchemaError::Syntax { .. } | SchemaError::InvalidIdentifier(_) | SchemaError::Empty => "SyntaxError",
            SchemaError::UnknownDependency { .. } => "UnknownDependency",
            SchemaError::DuplicateComponent(_) => "DuplicateComponent",
            SchemaError::DuplicateDependency { .. } => "DuplicateDependency",
            SchemaError::ConceptMismatch { .. } => "ConceptMismatch",
            SchemaError::TooManyComponents(_) => "TooManyComponents",
            SchemaError::DeclarationIndex(_) | SchemaError::Cycle(_) => "InvalidSchema",
        }
    }
}

/// True if `s` matches `[a-z][a-z0-9]*(-[a-z0-9]+)*`.
pub fn is_kebab_ident(s: &str) -> bool {
    let mut segments = s.split('-');
    let Some(first) = segments.next() else {
        return false;
    };
    let mut chars = first.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    let alnum = |c: char| c.is_ascii_lowercase() || c.is_ascii_digit();
    chars.all(alnum) && segments.all(|seg| !seg.is_empty() && seg.chars().all(alnum))
}

/// Name of a schema component, e.g. `entry-exit`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(name: impl Into<String>) -> Result<Self, SchemaError> {
        let name = name.into();
        if is_kebab_ident(&name) {
            Ok(Self(name))
        } else {
            Err(SchemaError::InvalidIdentifier(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ComponentId {
    type Error = SchemaError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ComponentId> for String {
    fn from(value: ComponentId) -> Self {
        value.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ComponentId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentNode {
    pub id: ComponentId,
    pub concept: String,
    pub deps: Vec<ComponentId>,
    pub declaration_index: usize,
}

/// A validated schema DAG for one abstract concept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaProgram {
    concept: String,
    nodes: Vec<ComponentNode>,
}

impl SchemaProgram {
    /// Builds a program from parts, checking every structural invariant
    /// including the component cap.
    pub fn new(concept: impl Into<String>, nodes: Vec<ComponentNode>) -> Result<Self, SchemaError> {
        let program = Self::new_unchecked_cap(concept.into(), nodes)?;
        program.validate()?;
        Ok(program)
    }

    /// Structural checks without the component cap.
    fn new_unchecked_cap(concept: String, nodes: Vec<ComponentNode>) -> Result<Self, SchemaError> {
        if !is_kebab_ident(&concept) {
            return Err(SchemaError::InvalidIdentifier(concept));
        }
        if nodes.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen: HashSet<&ComponentId> = HashSet::new();
        for (index, node) in nodes.iter().enumerate() {
            if node.declaration_index != index {
                return Err(SchemaError::DeclarationIndex(node.id.to_string()));
            }
            if node.concept != concept {
                return Err(SchemaError::ConceptMismatch {
                    component: node.id.to_string(),
                    expected: concept.clone(),
                    found: node.concept.clone(),
                });
            }
            if seen.contains(&node.id) {
                return Err(SchemaError::DuplicateComponent(node.id.to_string()));
            }
            let mut dep_seen = HashSet::new();
            for dep in &node.deps {
                if !dep_seen.insert(dep) {
                    return Err(SchemaError::DuplicateDependency {
                        component: node.id.to_string(),
                        dependency: dep.to_string(),
                    });
                }
                if !seen.contains(dep) {
                    return Err(SchemaError::UnknownDependency {
                        component: node.id.to_string(),
                        dependency: dep.to_string(),
                    });
                }
            }
            seen.insert(&node.id);
        }
        Ok(Self { concept, nodes })
    }

    /// Checks the component cap and acyclicity. Acyclicity already follows from
    /// the declared-before rule, it is verified here on its own anyway.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.nodes.len() > MAX_COMPONENTS {
            return Err(SchemaError::TooManyComponents(self.nodes.len()));
        }
        kahn_order(self).map(|_| ())
    }

    pub fn concept(&self) -> &str {
        &self.concept
    }

    pub fn nodes(&self) -> &[ComponentNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&ComponentNode> {
        self.nodes.iter().find(|n| n.id.as_str() == id)
    }

    /// Number of dependency edges.
    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.deps.len()).sum()
    }
}

/// Parses and validates a schema program.
///
/// Blank lines before, inside, and after the program are ignored. Anything else
/// outside the program is a syntax error; use
/// [`crate::extraction::scrape_program`] to cut a program out of model prose.
pub fn parse_schema(text: &str) -> Result<SchemaProgram, SchemaError> {
    let program = parse_structure(text)?;
    program.validate()?;
    Ok(program)
}

/// Parses without enforcing the component cap.
pub fn parse_structure(text: &str) -> Result<SchemaProgram, SchemaError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let Some((header_line, header)) = lines.next() else {
        return Err(SchemaError::Syntax {
            line: 1,
            column: 1,
            message: "expected program header `gen(concept=<name>) =`".into(),
        });
    };
    let concept = parse_header(header_line, header)?;

    let mut nodes: Vec<ComponentNode> = Vec::new();
    for (line_no, line) in lines {
        let (id, node_concept, deps) = parse_node_line(line_no, line)?;
        let index = nodes.len();
        nodes.push(ComponentNode {
            id,
            concept: node_concept,
            deps,
            declaration_index: index,
        });
    }
    if nodes.is_empty() {
        return Err(SchemaError::Syntax {
            line: header_line + 1,
            column: 1,
            message: "expected at least one component line".into(),
        });
    }
    SchemaProgram::new_unchecked_cap(concept, nodes)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Open,
    Close,
    Bar,
    Comma,
    Eq,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Open => "`(`".into(),
            Tok::Close => "`)`".into(),
            Tok::Bar => "`|`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
        }
    }
}

struct LineCursor {
    line: usize,
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end_column: usize,
}

impl LineCursor {
    fn lex(line: usize, text: &str) -> Result<Self, SchemaError> {
        let chars: Vec<char> = text.chars().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let single = match c {
                '(' => Some(Tok::Open),
                ')' => Some(Tok::Close),
                '|' => Some(Tok::Bar),
                ',' => Some(Tok::Comma),
                '=' => Some(Tok::Eq),
                _ => None,
            };
            if let Some(tok) = single {
                toks.push((column, tok));
                i += 1;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '-' || chars[i] == '_') {
                    i += 1;
                }
                toks.push((column, Tok::Word(chars[start..i].iter().collect())));
            } else {
                return Err(SchemaError::Syntax {
                    line,
                    column,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
        Ok(Self {
            line,
            toks,
            pos: 0,
            end_column: chars.len() + 1,
        })
    }

    fn error(&self, message: String) -> SchemaError {
        let column = self.toks.get(self.pos).map_or(self.end_column, |(c, _)| *c);
        SchemaError::Syntax {
            line: self.line,
            column,
            message,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), SchemaError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {}, found {}", want.describe(), t.describe()))),
            None => Err(self.error(format!("expected {}, found end of line", want.describe()))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SchemaError> {
        self.expect(Tok::Word(kw.into()))
    }

    fn ident(&mut self, what: &str) -> Result<String, SchemaError> {
        match self.peek().cloned() {
            Some(Tok::Word(w)) => {
                if !is_kebab_ident(&w) {
                    return Err(self.error(format!("{what} `{w}` is not lowercase kebab-case")));
                }
                self.pos += 1;
                Ok(w)
            }
            Some(t) => Err(self.error(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.error(format!("expected {what}, found end of line"))),
        }
    }

    fn finish(&self) -> Result<(), SchemaError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.error(format!("unexpected {} after end of declaration", t.describe()))),
        }
    }

    fn is_header(&self) -> bool {
        matches!(
            self.toks.as_slice(),
            [(_, Tok::Word(g)), (_, Tok::Open), (_, Tok::Word(c)), (_, Tok::Eq), ..] if g == "gen" && c == "concept"
        )
    }
}

fn parse_header(line: usize, text: &str) -> Result<String, SchemaError> {
    let mut cur = LineCursor::lex(line, text)?;
    cur.keyword("gen")?;
    cur.expect(Tok::Open)?;
    cur.keyword("concept")?;
    cur.expect(Tok::Eq)?;
    let concept = cur.ident("concept name")?;
    cur.expect(Tok::Close)?;
    cur.expect(Tok::Eq)?;
    cur.finish()?;
    Ok(concept)
}

fn parse_node_line(line: usize, text: &str) -> Result<(ComponentId, String, Vec<ComponentId>), SchemaError> {
    let mut cur = LineCursor::lex(line, text)?;
    if cur.is_header() {
        return Err(cur.error("nested or repeated program header".into()));
    }
    cur.keyword("gen")?;
    cur.expect(Tok::Open)?;
    let id = cur.ident("component name")?;
    cur.expect(Tok::Bar)?;
    cur.keyword("concept")?;
    cur.expect(Tok::Eq)?;
    let concept = cur.ident("concept name")?;
    let mut deps = Vec::new();
    while cur.peek() == Some(&Tok::Comma) {
        cur.pos += 1;
        deps.push(ComponentId(cur.ident("dependency name")?));
    }
    cur.expect(Tok::Close)?;
    cur.finish()?;
    Ok((ComponentId(id), concept, deps))
}

/// Kahn's algorithm, ties broken by smallest declaration index.
fn kahn_order(program: &SchemaProgram) -> Result<Vec<ComponentId>, SchemaError> {
    let index: HashMap<&ComponentId, usize> = program.nodes.iter().map(|n| (&n.id, n.declaration_index)).collect();
    let n = program.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for node in &program.nodes {
        for dep in &node.deps {
            let Some(&d) = index.get(dep) else {
                return Err(SchemaError::UnknownDependency {
                    component: node.id.to_string(),
                    dependency: dep.to_string(),
                });
            };
            indegree[node.declaration_index] += 1;
            dependents[d].push(node.declaration_index);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(program.nodes[i].id.clone());
        for &j in &dependents[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(SchemaError::Cycle(program.nodes[stuck].id.to_string()));
    }
    Ok(order)
}

/// Grounding order: every node after its dependencies, ties by declaration order.
pub fn topological_order(program: &SchemaProgram) -> Vec<ComponentId> {
    kahn_order(program).expect("validated program is acyclic")
}

/// Canonical text form, four-space indented, newline terminated.
pub fn render_schema(program: &SchemaProgram) -> String {
    let mut out = format!("gen(concept={}) =\n", program.concept);
    for node in &program.nodes {
        out.push_str("    gen(");
        out.push_str(node.id.as_str());
        out.push_str(" | concept=");
        out.push_str(&node.concept);
        for dep in &node.deps {
            out.push_str(", ");
            out.push_str(dep.as_str());
        }
        out.push_str(")\n");
    }
    out
}

impl fmt::Display for SchemaProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_schema(self))
    }
}

/// Graphviz `digraph` with one edge per dependency, pointing dep -> dependent.
pub fn to_dot(program: &SchemaProgram) -> String {
    let mut out = format!("digraph \"{}\" {{\n", program.concept);
    for node in &program.nodes {
        out.push_str(&format!("    \"{}\";\n", node.id));
    }
    for node in &program.nodes {
        for dep in &node.deps {
            out.push_str(&format!("    \"{}\" -> \"{}\";\n", dep, node.id));
        }
    }
    out.push_str("}\n");
    out
}
