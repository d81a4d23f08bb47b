//! Logical-form trees.
//!
//! LFs are whitespace-tokenized s-expressions such as
//! `( lambda $0 e ( and ( state:t $0 ) ( next_to:t $0 s0 ) ) )`. The first
//! token after an opening parenthesis is the node label, the rest are
//! children. Bare tokens are leaves.
//!
//! Diversity features are built from two kinds of units: *atoms* (one per
//! node) and *compounds* (an internal node together with the labels of its
//! immediate children, e.g. `( and state:t next_to:t )`).

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LfError {
    #[error("empty logical form")]
    Empty,
    #[error("unbalanced parentheses at token {position}")]
    Unbalanced { position: usize },
    #[error("unlabeled node at token {position}")]
    Unlabeled { position: usize },
    #[error("unexpected trailing input at token {position}")]
    Trailing { position: usize },
}

/// A node of a logical-form tree. The root node stands for the whole tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LfTree {
    label: String,
    children: Vec<LfTree>,
}

impl LfTree {
    /// Builds a node. Labels must be non-empty and free of whitespace and
    /// parentheses; this is checked in debug builds only.
    pub fn new(label: impl Into<String>, children: Vec<LfTree>) -> Self {
        let label = label.into();
        debug_assert!(is_valid_label(&label), "invalid LF label {label:?}");
        LfTree { label, children }
    }

    pub fn leaf(label: impl Into<String>) -> Self {
        Self::new(label, Vec::new())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[LfTree] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order iterator over every node of the tree.
    pub fn nodes(&self) -> Nodes<'_> {
        Nodes { stack: vec![self] }
    }

    pub fn node_count(&self) -> usize {
        self.nodes().count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes().filter(|n| !n.is_leaf()).count()
    }
}

pub struct Nodes<'a> {
    stack: Vec<&'a LfTree>,
}

impl<'a> Iterator for Nodes<'a> {
    type Item = &'a LfTree;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

fn is_valid_label(label: &str) -> bool {
    !label.is_empty() && !label.chars().any(|c| c == '(' || c == ')' || c.is_whitespace())
}

/// Splits an LF string into tokens. Parentheses are always their own token,
/// even when written without surrounding spaces.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for chunk in text.split_ascii_whitespace() {
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if c == '(' || c == ')' {
                if start < i {
                    tokens.push(&chunk[start..i]);
                }
                tokens.push(&chunk[i..i + 1]);
                start = i + 1;
            }
        }
        if start < chunk.len() {
            tokens.push(&chunk[start..]);
        }
    }
    tokens
}

/// Whitespace-normalized token form of an LF, used for exact-match
/// comparison and as the identity of an LF in count tables.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

pub fn parse_lf(text: &str) -> Result<LfTree, LfError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(LfError::Empty);
    }
    let mut pos = 0;
    let tree = parse_node(&tokens, &mut pos)?;
    if pos < tokens.len() {
        return Err(match tokens[pos] {
            ")" => LfError::Unbalanced { position: pos },
            _ => LfError::Trailing { position: pos },
        });
    }
    Ok(tree)
}

fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<LfTree, LfError> {
    let Some(&tok) = tokens.get(*pos) else {
        return Err(LfError::Unbalanced { position: *pos });
    };
    match tok {
        ")" => Err(LfError::Unbalanced { position: *pos }),
        "(" => {
            let open = *pos;
            *pos += 1;
            let label = match tokens.get(*pos) {
                None => return Err(LfError::Unbalanced { position: open }),
                Some(&"(") | Some(&")") => return Err(LfError::Unlabeled { position: open }),
                Some(&l) => l,
            };
            *pos += 1;
            let mut children = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err(LfError::Unbalanced { position: open }),
                    Some(&")") => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => children.push(parse_node(tokens, pos)?),
                }
            }
            Ok(LfTree::new(label, children))
        }
        leaf => {
            *pos += 1;
            Ok(LfTree::leaf(leaf))
        }
    }
}

/// Canonical single-spaced serialization. Leaves below the root are written
/// bare; the root is always parenthesized.
pub fn render_lf(tree: &LfTree) -> String {
    let mut out = String::new();
    render_into(tree, true, &mut out);
    out
}

fn render_into(node: &LfTree, is_root: bool, out: &mut String) {
    if node.is_leaf() && !is_root {
        out.push_str(&node.label);
        return;
    }
    out.push_str("( ");
    out.push_str(&node.label);
    for child in &node.children {
        out.push(' ');
        render_into(child, false, out);
    }
    out.push_str(" )");
}

impl fmt::Display for LfTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_lf(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub label: String,
}

/// A two-level sub-tree: a node label plus its children's labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Compound {
    pub head: String,
    pub child_heads: Vec<String>,
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "( {}", self.head)?;
        for c in &self.child_heads {
            write!(f, " {c}")?;
        }
        f.write_str(" )")
    }
}

/// One atom per node occurrence, in pre-order.
pub fn extract_atoms(tree: &LfTree) -> Vec<Atom> {
    tree.nodes()
        .map(|n| Atom {
            label: n.label.clone(),
        })
        .collect()
}

/// One compound per internal node, in pre-order.
pub fn extract_compounds(tree: &LfTree) -> Vec<Compound> {
    tree.nodes()
        .filter(|n| !n.is_leaf())
        .map(|n| Compound {
            head: n.label.clone(),
            child_heads: n.children.iter().map(|c| c.label.clone()).collect(),
        })
        .collect()
}

/// Which LF units feed a featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Atoms,
    Compounds,
    #[default]
    Both,
}

/// Atoms and compounds as strings, multiplicity preserved. Atoms come first,
/// then compounds. Compound strings always start with "(", so the two
/// namespaces cannot collide.
pub fn extract_units(tree: &LfTree, kind: UnitKind) -> Vec<String> {
    let mut units = Vec::new();
    if kind != UnitKind::Compounds {
        units.extend(extract_atoms(tree).into_iter().map(|a| a.label));
    }
    if kind != UnitKind::Atoms {
        units.extend(extract_compounds(tree).iter().map(|c| c.to_string()));
    }
    units
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    const FIG1: &str = "( lambda $0 e ( and ( state:t $0 ) ( next_to:t $0 s0 ) ) )";

    #[test]
    fn parses_figure_one_tree() {
        let t = parse_lf(FIG1).unwrap();
        assert_eq!(t.label(), "lambda");
        let labels: Vec<_> = t.children().iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["$0", "e", "and"]);
        let and = &t.children()[2];
        let labels: Vec<_> = and.children().iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["state:t", "next_to:t"]);
        assert_eq!(and.children()[0].children()[0].label(), "$0");
        let nt: Vec<_> = and.children()[1].children().iter().map(|c| c.label()).collect();
        assert_eq!(nt, ["$0", "s0"]);
        let order: Vec<_> = t.nodes().map(|n| n.label()).collect();
        let expected: Vec<_> = tokenize(FIG1)
            .into_iter()
            .filter(|t| *t != "(" && *t != ")")
            .collect();
        assert_eq!(order, expected);
    }

    #[test]
    fn renders_figure_one_verbatim() {
        assert_eq!(render_lf(&parse_lf(FIG1).unwrap()), FIG1);
    }

    #[test]
    fn single_node() {
        let t = parse_lf("( a )").unwrap();
        assert_eq!(t, LfTree::leaf("a"));
        assert_eq!(render_lf(&t), "( a )");
        assert!(extract_compounds(&t).is_empty());
        assert_eq!(extract_atoms(&t), vec![Atom { label: "a".into() }]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse_lf("( a ( b )"), Err(LfError::Unbalanced { .. })));
        assert!(matches!(parse_lf("( a ) )"), Err(LfError::Unbalanced { .. })));
        assert!(matches!(parse_lf(")"), Err(LfError::Unbalanced { .. })));
        assert_eq!(parse_lf(""), Err(LfError::Empty));
        assert_eq!(parse_lf("   \n"), Err(LfError::Empty));
        assert!(matches!(parse_lf("( )"), Err(LfError::Unlabeled { .. })));
        assert!(matches!(parse_lf("( ( a ) b )"), Err(LfError::Unlabeled { .. })));
        assert!(matches!(parse_lf("( a ) ( b )"), Err(LfError::Trailing { .. })));
    }

    #[test]
    fn tight_parentheses_tokenize() {
        assert_eq!(tokenize("(f (g x))"), ["(", "f", "(", "g", "x", ")", ")"]);
        assert_eq!(normalize("(  a )"), "( a )");
    }

    #[test]
    fn figure_one_atoms_and_compounds() {
        let t = parse_lf(FIG1).unwrap();
        let atoms = extract_atoms(&t);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for a in &atoms {
            *counts.entry(a.label.as_str()).or_default() += 1;
        }
        let distinct: BTreeSet<_> = counts.keys().copied().collect();
        let expected: BTreeSet<_> = ["lambda", "$0", "e", "and", "state:t", "next_to:t", "s0"]
            .into_iter()
            .collect();
        assert_eq!(distinct, expected);
        assert_eq!(counts["$0"], 3);

        let compounds: BTreeSet<String> =
            extract_compounds(&t).iter().map(|c| c.to_string()).collect();
        let expected: BTreeSet<String> = [
            "( lambda $0 e and )",
            "( and state:t next_to:t )",
            "( state:t $0 )",
            "( next_to:t $0 s0 )",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(compounds, expected);
    }

    #[test]
    fn multiplicity_and_nested_compounds() {
        let t = parse_lf("( f x x )").unwrap();
        let atoms: Vec<_> = extract_atoms(&t).into_iter().map(|a| a.label).collect();
        assert_eq!(atoms, ["f", "x", "x"]);

        let t = parse_lf("( f ( g x ) )").unwrap();
        let c: Vec<_> = extract_compounds(&t).iter().map(|c| c.to_string()).collect();
        assert_eq!(c, ["( f g )", "( g x )"]);
    }

    #[test]
    fn childless_inner_node_round_trips_structurally() {
        let t = parse_lf("( a ( b ) c )").unwrap();
        assert_eq!(render_lf(&t), "( a b c )");
        assert_eq!(parse_lf(&render_lf(&t)).unwrap(), t);
    }

    #[test]
    fn units_by_kind() {
        let t = parse_lf("( f ( g x ) )").unwrap();
        assert_eq!(extract_units(&t, UnitKind::Atoms), ["f", "g", "x"]);
        assert_eq!(extract_units(&t, UnitKind::Compounds), ["( f g )", "( g x )"]);
        assert_eq!(extract_units(&t, UnitKind::Both).len(), 5);
    }
}
