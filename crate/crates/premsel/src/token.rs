//! Binarized, reference-resolved token trees for type-level terms.
//!
//! Every type is rendered as a binary tree rooted at a start-of-sequence
//! leaf. Dependent functions keep their `PiOp` node; a function type whose
//! codomain never mentions its binder is downgraded to the simple-function
//! operator `ArrowOp`. Applications with several arguments become a
//! left-nested spine of `AppOp` nodes with the head deepest to the left.
//!
//! [`binarize`] leaves variable and lemma references unresolved
//! ([`TokenKind::BoundVar`] / [`TokenKind::FreeName`]);
//! [`resolve_references`] rewrites them into structural pointers: a de
//! Bruijn index becomes a [`TokenKind::VarRef`] aimed at its binder node,
//! and a name becomes a [`TokenKind::LemmaRef`] carrying the scope ordinal
//! of the referenced entry, or the out-of-scope leaf when the name is not
//! available.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ingest::Term;

pub type NodeId = u32;

#[derive(Debug, thiserror::Error)]
pub enum TokenizeError {
    #[error("`{construct}` cannot appear inside a type-level term")]
    UnsupportedConstruct { construct: &'static str },
    #[error("de Bruijn index {index} exceeds the {binders} enclosing binder(s)")]
    DanglingIndex { index: u32, binders: u32 },
    #[error("de Bruijn index {index} resolves to a non-binding arrow node")]
    BinderMismatch { index: u32 },
}

/// Left or right child of a binary tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

/// A node position, identified by the branch path from the root.
///
/// Positions follow the binary-heap numbering: the root has index 1 and the
/// children of index `i` sit at `2i` and `2i + 1`. Deep trees overflow any
/// fixed-width heap index, so the path is the canonical representation and
/// [`TreePosition::heap_index`] is best-effort.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TreePosition {
    path: Vec<Branch>,
}

impl TreePosition {
    pub fn root() -> Self {
        TreePosition { path: Vec::new() }
    }

    pub fn from_path(path: impl Into<Vec<Branch>>) -> Self {
        TreePosition { path: path.into() }
    }

    pub fn child(&self, branch: Branch) -> Self {
        let mut path = self.path.clone();
        path.push(branch);
        TreePosition { path }
    }

    pub fn path(&self) -> &[Branch] {
        &self.path
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }

    /// Binary-heap index of this position; `None` once it exceeds `u128`.
    pub fn heap_index(&self) -> Option<u128> {
        let mut index: u128 = 1;
        for b in &self.path {
            index = index.checked_mul(2)?;
            if *b == Branch::Right {
                index = index.checked_add(1)?;
            }
        }
        Some(index)
    }
}

/// Node content of a [`TokenTree`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    /// Dependent function operator; left = domain, right = codomain.
    PiOp,
    /// Simple (non-binding) function operator; left = domain, right = codomain.
    ArrowOp,
    /// Abstraction operator; the body is its left child.
    LambdaOp,
    /// Application operator; left = function part, right = argument.
    AppOp,
    SortLeaf,
    LevelLeaf,
    LitLeaf,
    /// Start-of-sequence root; doubles as the tree's aggregation site.
    SosLeaf,
    /// Out-of-scope reference: masked or otherwise unavailable.
    OosLeaf,
    /// Resolved variable occurrence, pointing at its binder node.
    VarRef(NodeId),
    /// Resolved reference to the scope entry with this ordinal.
    LemmaRef(u32),
    /// Unresolved de Bruijn index, as produced by [`binarize`].
    BoundVar(u32),
    /// Unresolved scope reference, as produced by [`binarize`].
    FreeName(String),
}

impl TokenKind {
    /// Index into the static embedding vocabulary, when the kind is static.
    pub fn vocab_index(&self) -> Option<usize> {
        match self {
            TokenKind::PiOp => Some(0),
            TokenKind::ArrowOp => Some(1),
            TokenKind::LambdaOp => Some(2),
            TokenKind::AppOp => Some(3),
            TokenKind::SortLeaf => Some(4),
            TokenKind::LevelLeaf => Some(5),
            TokenKind::LitLeaf => Some(6),
            TokenKind::SosLeaf => Some(7),
            TokenKind::OosLeaf => Some(8),
            _ => None,
        }
    }
}

/// Number of rows in the static embedding vocabulary.
pub const VOCAB_SIZE: usize = 9;
/// Vocabulary row of the out-of-scope token.
pub const OOS_INDEX: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenNode {
    pub kind: TokenKind,
    pub left: Option<NodeId>,
    pub right: Option<NodeId>,
    pub parent: Option<(NodeId, Branch)>,
}

/// A binarized type AST. Node 0 is the start-of-sequence root; nodes are
/// stored in pre-order, so a parent always precedes its children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTree {
    nodes: Vec<TokenNode>,
}

impl TokenTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TokenNode {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[TokenNode] {
        &self.nodes
    }

    /// The position of a node, reconstructed by walking its parent chain.
    pub fn position_of(&self, id: NodeId) -> TreePosition {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some((parent, branch)) = self.nodes[cur as usize].parent {
            path.push(branch);
            cur = parent;
        }
        path.reverse();
        TreePosition::from_path(path)
    }

    /// Positions of all nodes, computed in one pass from the root.
    pub fn positions(&self) -> Vec<TreePosition> {
        let mut out = vec![TreePosition::root(); self.nodes.len()];
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let pos = out[id as usize].clone();
            let node = &self.nodes[id as usize];
            if let Some(l) = node.left {
                out[l as usize] = pos.child(Branch::Left);
                stack.push(l);
            }
            if let Some(r) = node.right {
                out[r as usize] = pos.child(Branch::Right);
                stack.push(r);
            }
        }
        out
    }

    /// Ordinals of all resolved lemma references in the tree.
    pub fn lemma_refs(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            TokenKind::LemmaRef(ord) => Some(ord),
            _ => None,
        })
    }

    /// True when no unresolved `BoundVar`/`FreeName` leaves remain.
    pub fn is_resolved(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| !matches!(n.kind, TokenKind::BoundVar(_) | TokenKind::FreeName(_)))
    }
}

struct Builder {
    nodes: Vec<TokenNode>,
}

impl Builder {
    fn new_node(&mut self, kind: TokenKind) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(TokenNode {
            kind,
            left: None,
            right: None,
            parent: None,
        });
        id
    }

    fn attach(&mut self, parent: NodeId, branch: Branch, child: NodeId) {
        self.nodes[child as usize].parent = Some((parent, branch));
        match branch {
            Branch::Left => self.nodes[parent as usize].left = Some(child),
            Branch::Right => self.nodes[parent as usize].right = Some(child),
        }
    }
}

/// Does de Bruijn index `depth` (relative to the term's root) occur in `term`?
fn binder_occurs(term: &Term, depth: u32) -> bool {
    match term {
        Term::DeBruijn { index } => *index == depth,
        Term::Pi {
            domain, codomain, ..
        } => binder_occurs(domain, depth) || binder_occurs(codomain, depth + 1),
        Term::Lambda { body, .. } => binder_occurs(body, depth + 1),
        Term::Application { head, arguments } => {
            binder_occurs(head, depth) || arguments.iter().any(|a| binder_occurs(a, depth))
        }
        _ => false,
    }
}

fn encode(b: &mut Builder, term: &Term) -> Result<NodeId, TokenizeError> {
    match term {
        Term::Pi {
            domain, codomain, ..
        } => {
            // The static vocabulary distinguishes dependent from simple
            // functions; the raw grammar only has Pi. Downgrade when the
            // binder is never referenced in the codomain.
            let kind = if binder_occurs(codomain, 0) {
                TokenKind::PiOp
            } else {
                TokenKind::ArrowOp
            };
            let n = b.new_node(kind);
            let d = encode(b, domain)?;
            b.attach(n, Branch::Left, d);
            let c = encode(b, codomain)?;
            b.attach(n, Branch::Right, c);
            Ok(n)
        }
        Term::Lambda { body, .. } => {
            let n = b.new_node(TokenKind::LambdaOp);
            let inner = encode(b, body)?;
            b.attach(n, Branch::Left, inner);
            Ok(n)
        }
        Term::Application { head, arguments } => encode_spine(b, head, arguments),
        Term::DeBruijn { index } => Ok(b.new_node(TokenKind::BoundVar(*index))),
        Term::ScopeReference { name } => Ok(b.new_node(TokenKind::FreeName(name.clone()))),
        Term::Literal => Ok(b.new_node(TokenKind::LitLeaf)),
        Term::Sort => Ok(b.new_node(TokenKind::SortLeaf)),
        Term::Level => Ok(b.new_node(TokenKind::LevelLeaf)),
        Term::Adt { .. } => Err(TokenizeError::UnsupportedConstruct { construct: "ADT" }),
        Term::Constructor { .. } => Err(TokenizeError::UnsupportedConstruct {
            construct: "Constructor",
        }),
        Term::Record { .. } => Err(TokenizeError::UnsupportedConstruct {
            construct: "Record",
        }),
        Term::Function { .. } => Err(TokenizeError::UnsupportedConstruct {
            construct: "Function",
        }),
    }
}

fn encode_spine(b: &mut Builder, head: &Term, arguments: &[Term]) -> Result<NodeId, TokenizeError> {
    let (last, init) = arguments
        .split_last()
        .expect("application arguments are non-empty by construction");
    let n = b.new_node(TokenKind::AppOp);
    let left = if init.is_empty() {
        encode(b, head)?
    } else {
        encode_spine(b, head, init)?
    };
    b.attach(n, Branch::Left, left);
    let right = encode(b, last)?;
    b.attach(n, Branch::Right, right);
    Ok(n)
}

/// Binarizes a type-level term into a token tree with unresolved references.
///
/// The start-of-sequence leaf is the root and carries the encoded term as
/// its left child. Proof-level constructs (`ADT`, `Record`, `Function`,
/// `Constructor`) are not representable and yield an error so the caller can
/// filter the file with a diagnostic.
pub fn binarize(term: &Term) -> Result<TokenTree, TokenizeError> {
    let mut b = Builder { nodes: Vec::new() };
    let root = b.new_node(TokenKind::SosLeaf);
    let body = encode(&mut b, term)?;
    b.attach(root, Branch::Left, body);
    Ok(TokenTree { nodes: b.nodes })
}

/// Wraps a hole's goal in nested dependent functions, one per context
/// binding, outermost binder first.
///
/// De Bruijn indices inside the goal and the context types already refer
/// relative to the telescope, so they are left untouched.
pub fn fold_context(context: &[(String, Term)], goal: Term) -> Term {
    let mut term = goal;
    for (name, ty) in context.iter().rev() {
        term = Term::Pi {
            name: name.clone(),
            domain: Box::new(ty.clone()),
            codomain: Box::new(term),
        };
    }
    term
}

/// Rewrites unresolved references into structural pointers.
///
/// De Bruijn leaves become [`TokenKind::VarRef`] pointers at their binder
/// node, found by walking the binder ancestry (an `ArrowOp` still occupies a
/// binder slot — it was a function type whose binder is unused). Names become
/// [`TokenKind::LemmaRef`] when the scope map knows them and, for holes,
/// their ordinal is below `ordinal_limit`; anything else is masked to the
/// out-of-scope leaf.
pub fn resolve_references(
    tree: &TokenTree,
    scope: &HashMap<String, u32>,
    ordinal_limit: Option<u32>,
) -> Result<TokenTree, TokenizeError> {
    let mut nodes = tree.nodes.clone();
    for id in 0..nodes.len() {
        match &nodes[id].kind {
            TokenKind::BoundVar(index) => {
                let binder = find_binder(tree, id as NodeId, *index)?;
                nodes[id].kind = TokenKind::VarRef(binder);
            }
            TokenKind::FreeName(name) => {
                let resolved = match scope.get(name.as_str()) {
                    Some(&ord) if ordinal_limit.map_or(true, |limit| ord < limit) => {
                        TokenKind::LemmaRef(ord)
                    }
                    _ => TokenKind::OosLeaf,
                };
                nodes[id].kind = resolved;
            }
            _ => {}
        }
    }
    Ok(TokenTree { nodes })
}

/// Walks up from `start` counting binder slots until the index is consumed.
fn find_binder(tree: &TokenTree, start: NodeId, index: u32) -> Result<NodeId, TokenizeError> {
    let mut remaining = index;
    let mut binders_seen = 0u32;
    let mut cur = start;
    loop {
        let Some((parent, branch)) = tree.nodes[cur as usize].parent else {
            return Err(TokenizeError::DanglingIndex {
                index,
                binders: binders_seen,
            });
        };
        let parent_kind = &tree.nodes[parent as usize].kind;
        let binds_here = match (parent_kind, branch) {
            // Pi and Arrow both stem from a raw Pi: the binder scopes over
            // the codomain (right child) only.
            (TokenKind::PiOp | TokenKind::ArrowOp, Branch::Right) => true,
            (TokenKind::LambdaOp, Branch::Left) => true,
            _ => false,
        };
        if binds_here {
            if remaining == 0 {
                return match parent_kind {
                    TokenKind::PiOp | TokenKind::LambdaOp => Ok(parent),
                    _ => Err(TokenizeError::BinderMismatch { index }),
                };
            }
            remaining -= 1;
            binders_seen += 1;
        }
        cur = parent;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope_ref(name: &str) -> Term {
        Term::ScopeReference { name: name.into() }
    }

    fn db(index: u32) -> Term {
        Term::DeBruijn { index }
    }

    fn pi(name: &str, domain: Term, codomain: Term) -> Term {
        Term::Pi {
            name: name.into(),
            domain: Box::new(domain),
            codomain: Box::new(codomain),
        }
    }

    fn app(head: Term, args: Vec<Term>) -> Term {
        Term::Application {
            head: Box::new(head),
            arguments: args,
        }
    }

    fn kinds(tree: &TokenTree) -> Vec<&TokenKind> {
        tree.nodes().iter().map(|n| &n.kind).collect()
    }

    #[test]
    fn sort_under_sos() {
        let tree = binarize(&Term::Sort).unwrap();
        assert_eq!(tree.len(), 2);
        assert_eq!(tree.node(0).kind, TokenKind::SosLeaf);
        assert_eq!(tree.node(0).left, Some(1));
        assert_eq!(tree.node(1).kind, TokenKind::SortLeaf);
    }

    #[test]
    fn simple_function_chain_becomes_right_nested_arrows() {
        // ℕ → ℕ → ℕ, i.e. Pi(_ : ℕ). Pi(_ : ℕ). ℕ with no binder uses.
        let term = pi("_", scope_ref("ℕ"), pi("_", scope_ref("ℕ"), scope_ref("ℕ")));
        let tree = binarize(&term).unwrap();
        let arrows: Vec<_> = tree
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == TokenKind::ArrowOp)
            .map(|(i, _)| i as NodeId)
            .collect();
        assert_eq!(arrows.len(), 2);
        // The outer arrow's right child is the inner arrow.
        assert_eq!(tree.node(arrows[0]).right, Some(arrows[1]));
        let refs = tree
            .nodes()
            .iter()
            .filter(|n| matches!(n.kind, TokenKind::FreeName(_)))
            .count();
        assert_eq!(refs, 3);
    }

    #[test]
    fn dependent_pi_is_preserved() {
        // Pi(x : A). x — the codomain uses the binder.
        let term = pi("x", scope_ref("A"), db(0));
        let tree = binarize(&term).unwrap();
        assert!(kinds(&tree).contains(&&TokenKind::PiOp));
        assert!(!kinds(&tree).contains(&&TokenKind::ArrowOp));
    }

    #[test]
    fn commutativity_statement_shape() {
        // Π(m : ℕ). Π(n : ℕ). (≡ (+ m n) (+ n m)) — the application spine is
        // left-nested with the head deepest to the left.
        let body = app(
            scope_ref("≡"),
            vec![
                app(scope_ref("+"), vec![db(1), db(0)]),
                app(scope_ref("+"), vec![db(0), db(1)]),
            ],
        );
        let term = pi("m", scope_ref("ℕ"), pi("n", scope_ref("ℕ"), body));
        let tree = binarize(&term).unwrap();

        // [sos] → Π → Π → $($ ≡ lhs) rhs
        let sos = tree.node(0);
        let pi_m = tree.node(sos.left.unwrap());
        assert_eq!(pi_m.kind, TokenKind::PiOp);
        let pi_n = tree.node(pi_m.right.unwrap());
        assert_eq!(pi_n.kind, TokenKind::PiOp);
        let top_app = tree.node(pi_n.right.unwrap());
        assert_eq!(top_app.kind, TokenKind::AppOp);
        let inner_app = tree.node(top_app.left.unwrap());
        assert_eq!(inner_app.kind, TokenKind::AppOp);
        assert_eq!(
            tree.node(inner_app.left.unwrap()).kind,
            TokenKind::FreeName("≡".into())
        );

        // Both spines hang two-deep applications off the equality.
        let lhs = tree.node(inner_app.right.unwrap());
        let rhs = tree.node(top_app.right.unwrap());
        assert_eq!(lhs.kind, TokenKind::AppOp);
        assert_eq!(rhs.kind, TokenKind::AppOp);
    }

    #[test]
    fn heap_positions_follow_the_numbering() {
        let term = pi("x", scope_ref("A"), app(db(0), vec![scope_ref("B")]));
        let tree = binarize(&term).unwrap();
        let positions = tree.positions();
        assert_eq!(positions[0].heap_index(), Some(1));
        for (id, node) in tree.nodes().iter().enumerate() {
            let here = positions[id].heap_index().unwrap();
            if let Some(l) = node.left {
                assert_eq!(positions[l as usize].heap_index(), Some(2 * here));
            }
            if let Some(r) = node.right {
                assert_eq!(positions[r as usize].heap_index(), Some(2 * here + 1));
            }
            // position_of agrees with the batch computation
            assert_eq!(tree.position_of(id as NodeId), positions[id]);
        }
    }

    #[test]
    fn binarization_preserves_leaf_multiset() {
        fn raw_leaves(t: &Term) -> (usize, usize, usize) {
            // (vars+refs, sorts+levels+lits, binders)
            match t {
                Term::DeBruijn { .. } | Term::ScopeReference { .. } => (1, 0, 0),
                Term::Sort | Term::Level | Term::Literal => (0, 1, 0),
                Term::Pi {
                    domain, codomain, ..
                } => {
                    let a = raw_leaves(domain);
                    let b = raw_leaves(codomain);
                    (a.0 + b.0, a.1 + b.1, a.2 + b.2 + 1)
                }
                Term::Lambda { body, .. } => {
                    let a = raw_leaves(body);
                    (a.0, a.1, a.2 + 1)
                }
                Term::Application { head, arguments } => {
                    let mut acc = raw_leaves(head);
                    for arg in arguments {
                        let a = raw_leaves(arg);
                        acc = (acc.0 + a.0, acc.1 + a.1, acc.2 + a.2);
                    }
                    acc
                }
                _ => (0, 0, 0),
            }
        }
        let term = pi(
            "x",
            scope_ref("A"),
            app(scope_ref("f"), vec![db(0), Term::Literal, Term::Sort]),
        );
        let tree = binarize(&term).unwrap();
        let (refs, dontcare, binders) = raw_leaves(&term);
        let tree_refs = tree
            .nodes()
            .iter()
            .filter(|n| matches!(n.kind, TokenKind::BoundVar(_) | TokenKind::FreeName(_)))
            .count();
        let tree_dontcare = tree
            .nodes()
            .iter()
            .filter(|n| {
                matches!(
                    n.kind,
                    TokenKind::SortLeaf | TokenKind::LevelLeaf | TokenKind::LitLeaf
                )
            })
            .count();
        let tree_binders = tree
            .nodes()
            .iter()
            .filter(|n| {
                matches!(
                    n.kind,
                    TokenKind::PiOp | TokenKind::ArrowOp | TokenKind::LambdaOp
                )
            })
            .count();
        assert_eq!((tree_refs, tree_dontcare, tree_binders), (refs, dontcare, binders));
    }

    #[test]
    fn inline_declarations_are_unsupported() {
        let term = Term::Adt { variants: vec![] };
        assert!(matches!(
            binarize(&term),
            Err(TokenizeError::UnsupportedConstruct { construct: "ADT" })
        ));
    }

    #[test]
    fn fold_context_wraps_outermost_first() {
        let goal = app(scope_ref("P"), vec![db(1), db(0)]);
        let folded = fold_context(
            &[
                ("x".to_string(), scope_ref("A")),
                ("y".to_string(), scope_ref("B")),
            ],
            goal.clone(),
        );
        match &folded {
            Term::Pi { name, codomain, .. } => {
                assert_eq!(name, "x");
                match codomain.as_ref() {
                    Term::Pi { name, codomain, .. } => {
                        assert_eq!(name, "y");
                        assert_eq!(codomain.as_ref(), &goal);
                    }
                    other => panic!("expected inner Pi, got {other:?}"),
                }
            }
            other => panic!("expected outer Pi, got {other:?}"),
        }
    }

    #[test]
    fn fold_empty_context_is_identity() {
        let goal = scope_ref("G");
        assert_eq!(fold_context(&[], goal.clone()), goal);
    }

    #[test]
    fn index_zero_resolves_to_innermost_lambda() {
        let term = Term::Lambda {
            abstraction: "x".into(),
            body: Box::new(db(0)),
        };
        let tree = binarize(&term).unwrap();
        let resolved = resolve_references(&tree, &HashMap::new(), None).unwrap();
        let lambda = resolved
            .nodes()
            .iter()
            .position(|n| n.kind == TokenKind::LambdaOp)
            .unwrap() as NodeId;
        let var = resolved
            .nodes()
            .iter()
            .find(|n| matches!(n.kind, TokenKind::VarRef(_)))
            .unwrap();
        assert_eq!(var.kind, TokenKind::VarRef(lambda));
    }

    #[test]
    fn out_of_range_index_dangles() {
        let term = pi("x", scope_ref("A"), pi("y", db(0), db(3)));
        let tree = binarize(&term).unwrap();
        assert!(matches!(
            resolve_references(&tree, &HashMap::new(), None),
            Err(TokenizeError::DanglingIndex { index: 3, .. })
        ));
    }

    #[test]
    fn both_variable_occurrences_point_to_their_binder() {
        // Π(m : A). Π(n : A). f m m — both m references hit the outer Pi.
        let term = pi(
            "m",
            scope_ref("A"),
            pi("n", scope_ref("A"), app(scope_ref("f"), vec![db(1), db(1)])),
        );
        let tree = binarize(&term).unwrap();
        let resolved = resolve_references(&tree, &HashMap::new(), None).unwrap();
        let outer_pi = resolved.node(resolved.node(0).left.unwrap());
        assert_eq!(outer_pi.kind, TokenKind::PiOp);
        let outer_pi_id = resolved.node(0).left.unwrap();
        let targets: Vec<_> = resolved
            .nodes()
            .iter()
            .filter_map(|n| match n.kind {
                TokenKind::VarRef(b) => Some(b),
                _ => None,
            })
            .collect();
        assert_eq!(targets, vec![outer_pi_id, outer_pi_id]);
    }

    #[test]
    fn arrows_still_count_as_binder_slots() {
        // Π(x : A). (B → f x): the inner Pi downgrades to an arrow, but the
        // index crossing it must still skip one binder slot.
        let term = pi(
            "x",
            scope_ref("A"),
            pi("_", scope_ref("B"), app(scope_ref("f"), vec![db(1)])),
        );
        let tree = binarize(&term).unwrap();
        let resolved = resolve_references(&tree, &HashMap::new(), None).unwrap();
        let outer_pi_id = resolved.node(0).left.unwrap();
        assert_eq!(resolved.node(outer_pi_id).kind, TokenKind::PiOp);
        let var = resolved
            .nodes()
            .iter()
            .find(|n| matches!(n.kind, TokenKind::VarRef(_)))
            .unwrap();
        assert_eq!(var.kind, TokenKind::VarRef(outer_pi_id));
    }

    #[test]
    fn names_resolve_to_ordinals_or_oos() {
        let term = app(scope_ref("known"), vec![scope_ref("unknown")]);
        let tree = binarize(&term).unwrap();
        let mut scope = HashMap::new();
        scope.insert("known".to_string(), 4u32);
        let resolved = resolve_references(&tree, &scope, None).unwrap();
        let kinds: Vec<_> = resolved
            .nodes()
            .iter()
            .filter(|n| {
                matches!(n.kind, TokenKind::LemmaRef(_) | TokenKind::OosLeaf)
            })
            .map(|n| n.kind.clone())
            .collect();
        assert_eq!(kinds, vec![TokenKind::LemmaRef(4), TokenKind::OosLeaf]);
        assert!(resolved.is_resolved());
    }

    #[test]
    fn ordinal_limit_masks_later_entries() {
        let term = app(scope_ref("early"), vec![scope_ref("late")]);
        let tree = binarize(&term).unwrap();
        let mut scope = HashMap::new();
        scope.insert("early".to_string(), 1u32);
        scope.insert("late".to_string(), 7u32);
        let resolved = resolve_references(&tree, &scope, Some(5)).unwrap();
        let kinds: Vec<_> = resolved
            .nodes()
            .iter()
            .filter(|n| matches!(n.kind, TokenKind::LemmaRef(_) | TokenKind::OosLeaf))
            .map(|n| n.kind.clone())
            .collect();
        assert_eq!(kinds, vec![TokenKind::LemmaRef(1), TokenKind::OosLeaf]);
    }
}
