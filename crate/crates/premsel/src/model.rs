//! End-to-end file encoding and hole–lemma scoring.
//!
//! Node embeddings come from three sources. Static symbols (the four type
//! operators, the three don't-care terminals, and the two meta-symbols) each
//! own a row of a small vocabulary. A variable occurrence is the shared
//! variable embedding rotated by `R_bᵀ·R_p` — the relative rotation between
//! its binder's position `b` and its own position `p` — so occurrences of
//! the same binder at different offsets embed differently while staying
//! name-free. A lemma reference reads the referenced entry's summary from
//! the dynamic scope table and projects it down to the embedding width.
//!
//! Files are encoded level by level: all entries of one dependency level are
//! batched into a single encoder pass, each entry's start-of-sequence output
//! is written into the [`ScopeTable`], and later levels can then look those
//! summaries up. Holes are encoded the same way at the level implied by
//! their references, but are never written into the table.

use std::collections::BTreeSet;

use rand::Rng;

use crate::config::{ModelConfig, ScorerKind};
use crate::encoder::{
    build_position_cache, BranchPrimitives, EncoderError, EncoderStack, PositionCache,
    PositionSet, TrainCtx,
};
use crate::graph::FileGraph;
use crate::tensor::{Scalar, Tensor, TensorError};
use crate::token::{TokenKind, TokenTree, OOS_INDEX, VOCAB_SIZE};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("node {node} has no interned position (tree has {expected} nodes, {got} slots)")]
    MissingPosition {
        node: usize,
        expected: usize,
        got: usize,
    },
    #[error("tree still contains unresolved references; run reference resolution first")]
    UnresolvedTree,
    #[error("parameter count mismatch: model has {expected}, got {got}")]
    ParameterCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Dynamic table of encoded entry summaries, populated in dependency-level
/// order. Entries are immutable once written.
pub struct ScopeTable<E: Scalar> {
    rows: Vec<Option<Tensor<E>>>,
}

impl<E: Scalar> ScopeTable<E> {
    pub fn new(scope_len: usize) -> Self {
        ScopeTable {
            rows: vec![None; scope_len],
        }
    }

    pub fn get(&self, ordinal: u32) -> Option<&Tensor<E>> {
        self.rows.get(ordinal as usize).and_then(|r| r.as_ref())
    }

    /// Writes a summary; a second write to the same ordinal is a bug.
    pub fn set(&mut self, ordinal: u32, summary: Tensor<E>) {
        let slot = &mut self.rows[ordinal as usize];
        assert!(
            slot.is_none(),
            "scope table entry {ordinal} written twice"
        );
        *slot = Some(summary);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// The relevance scorer applied to hole/lemma summary pairs.
pub enum Scorer<E: Scalar> {
    /// `f(h, l) = Σ_k w_k · h_k · l_k`
    Diagonal(Tensor<E>),
    /// `f(h, l) = hᵀ W l`
    Bilinear(Tensor<E>),
}

/// Which holes of a file to encode.
#[derive(Debug, Clone, Copy)]
pub enum HoleSelection<'a> {
    All,
    /// Entry indices (not hole indices) of the holes to include.
    Subset(&'a BTreeSet<usize>),
}

impl HoleSelection<'_> {
    fn contains(&self, entry_index: usize) -> bool {
        match self {
            HoleSelection::All => true,
            HoleSelection::Subset(set) => set.contains(&entry_index),
        }
    }
}

/// Result of one file pass: a summary per encoded entry plus the scope
/// summaries stacked into a matrix whose row `r` is ordinal `r`.
pub struct FileEncoding<E: Scalar> {
    pub summaries: Vec<Option<Tensor<E>>>,
    pub scope_matrix: Tensor<E>,
}

/// Scores of one hole against its causally legal candidates.
///
/// Candidates are exactly the scope ordinals below the hole's owner, so
/// index `i` of `scores` is the score of ordinal `i`.
pub struct ScoredHole<E: Scalar> {
    pub entry_index: usize,
    pub scores: Tensor<E>,
    pub positives: Vec<usize>,
}

/// The complete trainable system: branch primitives, embeddings, encoder
/// stack and scorer.
pub struct PremiseModel<E: Scalar> {
    pub config: ModelConfig,
    pub primitives: BranchPrimitives<E>,
    /// Static symbol embeddings, one row per [`TokenKind::vocab_index`].
    pub vocab: Tensor<E>,
    /// The single shared variable embedding.
    pub var_embed: Tensor<E>,
    /// Projects a `d_model` summary down to the embedding width for
    /// reference rows; one map shared by all referents.
    pub ref_down: Tensor<E>,
    pub stack: EncoderStack<E>,
    pub scorer: Scorer<E>,
}

impl<E: Scalar> PremiseModel<E> {
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d_emb = config.d_emb();
        let primitives = BranchPrimitives::init(d_emb, &mut rng);
        let vocab = Tensor::randn([VOCAB_SIZE, d_emb], 1.0, &mut rng).to_param();
        let var_embed = Tensor::randn([d_emb], 1.0, &mut rng).to_param();
        let ref_down = Tensor::randn(
            [config.d_model, d_emb],
            1.0 / (config.d_model as f64).sqrt(),
            &mut rng,
        )
        .to_param();
        let stack = EncoderStack::init(&config, &mut rng);
        let scorer = match config.scorer {
            ScorerKind::Diagonal => Scorer::Diagonal(
                Tensor::randn([config.d_model], 1.0 / (config.d_model as f64).sqrt(), &mut rng)
                    .to_param(),
            ),
            ScorerKind::Bilinear => Scorer::Bilinear(
                Tensor::randn(
                    [config.d_model, config.d_model],
                    1.0 / (config.d_model as f64).sqrt(),
                    &mut rng,
                )
                .to_param(),
            ),
        };
        PremiseModel {
            config,
            primitives,
            vocab,
            var_embed,
            ref_down,
            stack,
            scorer,
        }
    }

    pub fn visit_params(&self, f: &mut impl FnMut(String, &Tensor<E>)) {
        f("positions.left".into(), &self.primitives.left_gen);
        f("positions.right".into(), &self.primitives.right_gen);
        f("embed.vocab".into(), &self.vocab);
        f("embed.variable".into(), &self.var_embed);
        f("embed.ref_down".into(), &self.ref_down);
        self.stack.visit_params(f);
        match &self.scorer {
            Scorer::Diagonal(w) => f("scorer.diag".into(), w),
            Scorer::Bilinear(w) => f("scorer.bilinear".into(), w),
        }
    }

    fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut Tensor<E>)) {
        f(&mut self.primitives.left_gen);
        f(&mut self.primitives.right_gen);
        f(&mut self.vocab);
        f(&mut self.var_embed);
        f(&mut self.ref_down);
        self.stack.visit_params_mut(f);
        match &mut self.scorer {
            Scorer::Diagonal(w) => f(w),
            Scorer::Bilinear(w) => f(w),
        }
    }

    /// Named parameters in canonical (checkpoint) order.
    pub fn parameters(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.clone())));
        out
    }

    /// Unnamed parameter tensors in canonical order.
    pub fn param_tensors(&self) -> Vec<Tensor<E>> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, t| out.push(t.clone()));
        out
    }

    /// Replaces every parameter, in the canonical order.
    pub fn set_parameters(&mut self, new: Vec<Tensor<E>>) -> Result<()> {
        let expected = self.param_tensors().len();
        if new.len() != expected {
            return Err(ModelError::ParameterCount {
                expected,
                got: new.len(),
            });
        }
        let mut it = new.into_iter();
        self.visit_params_mut(&mut |slot| {
            let t = it.next().expect("length checked above");
            assert_eq!(slot.dims(), t.dims(), "parameter shape changed");
            *slot = t;
        });
        Ok(())
    }

    fn oos_row(&self) -> Result<Tensor<E>> {
        Ok(self.vocab.gather_rows(&[OOS_INDEX])?)
    }

    /// Relative rotation between a binder at slot `b` and a use site at slot
    /// `p`: `R_bᵀ · R_p`. Degenerates to the identity when `b == p`.
    pub fn relative_rotation(
        cache: &PositionCache<E>,
        binder_slot: u32,
        node_slot: u32,
    ) -> Result<Tensor<E>> {
        Ok(cache.mats[binder_slot as usize]
            .transpose()?
            .matmul(&cache.mats[node_slot as usize])?)
    }

    /// Embeds every node of a tree into a `n × d_emb` matrix.
    ///
    /// `slots` maps each node to its interned position; `cache` is absent
    /// when tree positional encodings are ablated. Under training, each
    /// lemma-reference row is independently replaced by the out-of-scope row
    /// with the configured dropout probability.
    pub fn embed_nodes(
        &self,
        tree: &TokenTree,
        slots: &[u32],
        cache: Option<&PositionCache<E>>,
        table: &ScopeTable<E>,
        mut train: Option<&mut TrainCtx<'_>>,
    ) -> Result<Tensor<E>> {
        if slots.len() != tree.len() {
            return Err(ModelError::MissingPosition {
                node: slots.len(),
                expected: tree.len(),
                got: slots.len(),
            });
        }
        let d = self.config.d_emb();
        let use_rotation = !self.config.ablation.no_var_res && cache.is_some();
        let var_row = self.var_embed.reshape([1, d])?;

        let mut pieces: Vec<Tensor<E>> = Vec::new();
        let mut static_run: Vec<usize> = Vec::new();
        let flush =
            |pieces: &mut Vec<Tensor<E>>, run: &mut Vec<usize>| -> Result<()> {
                if !run.is_empty() {
                    pieces.push(self.vocab.gather_rows(run)?);
                    run.clear();
                }
                Ok(())
            };

        for (id, node) in tree.nodes().iter().enumerate() {
            match &node.kind {
                TokenKind::VarRef(binder) => {
                    flush(&mut pieces, &mut static_run)?;
                    if use_rotation {
                        let cache = cache.expect("use_rotation implies cache");
                        let rot = Self::relative_rotation(
                            cache,
                            slots[*binder as usize],
                            slots[id],
                        )?;
                        // (R_bᵀ·R_p) · e_var, laid out as a row.
                        let col = self.var_embed.reshape([d, 1])?;
                        pieces.push(rot.matmul(&col)?.transpose()?);
                    } else {
                        pieces.push(var_row.clone());
                    }
                }
                TokenKind::LemmaRef(ordinal) => {
                    flush(&mut pieces, &mut static_run)?;
                    let dropped = match train.as_mut() {
                        Some(ctx) => ctx.rng.gen::<f64>() < ctx.dropout,
                        None => false,
                    };
                    match (dropped, table.get(*ordinal)) {
                        (false, Some(summary)) => {
                            pieces.push(summary.matmul(&self.ref_down)?);
                        }
                        _ => pieces.push(self.oos_row()?),
                    }
                }
                TokenKind::BoundVar(_) | TokenKind::FreeName(_) => {
                    return Err(ModelError::UnresolvedTree);
                }
                kind => {
                    let idx = kind.vocab_index().expect("static kind has a vocab row");
                    static_run.push(idx);
                }
            }
        }
        flush(&mut pieces, &mut static_run)?;
        let refs: Vec<&Tensor<E>> = pieces.iter().collect();
        Ok(Tensor::concat(&refs, 0)?)
    }

    /// Encodes a file level by level, batching every included entry of a
    /// level into one encoder pass.
    pub fn encode_file(
        &self,
        graph: &FileGraph,
        selection: HoleSelection<'_>,
        mut train: Option<&mut TrainCtx<'_>>,
    ) -> Result<FileEncoding<E>> {
        let cfg = &self.config;
        let use_pe = !cfg.ablation.no_tree_pe;

        // Intern the positions of every tree that will be encoded.
        let mut set = PositionSet::new();
        let mut slots: Vec<Option<Vec<u32>>> = vec![None; graph.entries.len()];
        for (idx, entry) in graph.entries.iter().enumerate() {
            if entry.is_hole && !selection.contains(idx) {
                continue;
            }
            slots[idx] = Some(set.intern_tree(&entry.tree));
        }

        let cache = if use_pe {
            let (b_left, b_right) = self.primitives.materialize()?;
            Some(build_position_cache(&set, &b_left, &b_right)?)
        } else {
            None
        };

        let mut table = ScopeTable::new(graph.scope_len as usize);
        let mut summaries: Vec<Option<Tensor<E>>> = vec![None; graph.entries.len()];

        for level in &graph.levels {
            let members: Vec<usize> = level
                .iter()
                .map(|&i| i as usize)
                .filter(|&i| slots[i].is_some())
                .collect();
            if members.is_empty() {
                continue;
            }

            let mut segments = Vec::with_capacity(members.len());
            let mut embeds = Vec::with_capacity(members.len());
            let mut offset = 0usize;
            for &idx in &members {
                let entry = &graph.entries[idx];
                let entry_slots = slots[idx].as_ref().expect("member was interned");
                let emb = self.embed_nodes(
                    &entry.tree,
                    entry_slots,
                    cache.as_ref(),
                    &table,
                    train.as_deref_mut(),
                )?;
                segments.push((offset, entry.tree.len()));
                offset += entry.tree.len();
                embeds.push(emb);
            }
            let emb_refs: Vec<&Tensor<E>> = embeds.iter().collect();
            let x = Tensor::concat(&emb_refs, 0)?;

            let r_stack = match &cache {
                Some(cache) => Some(crate::encoder::stack_rotations(
                    cache,
                    members.iter().flat_map(|&idx| {
                        slots[idx].as_ref().expect("member was interned").iter().copied()
                    }),
                )?),
                None => None,
            };

            let out = self
                .stack
                .forward(cfg, &x, r_stack.as_ref(), &segments, train.as_deref_mut())?;

            for (&idx, &(start, _)) in members.iter().zip(&segments) {
                let summary = out.narrow(0, start, 1)?;
                let entry = &graph.entries[idx];
                if !entry.is_hole {
                    table.set(entry.ordinal, summary.clone());
                }
                summaries[idx] = Some(summary);
            }
        }

        let rows: Vec<&Tensor<E>> = (0..graph.scope_len)
            .map(|ord| table.get(ord).expect("every scope entry was encoded"))
            .collect();
        let scope_matrix = if rows.is_empty() {
            Tensor::zeros([0, cfg.d_model])
        } else {
            Tensor::concat(&rows, 0)?
        };

        Ok(FileEncoding {
            summaries,
            scope_matrix,
        })
    }

    /// Scores one summary pair.
    pub fn score_pair(&self, hole: &Tensor<E>, lemma: &Tensor<E>) -> Result<Tensor<E>> {
        let s = match &self.scorer {
            Scorer::Diagonal(w) => hole.mul(lemma)?.mul_row_vec(w)?.sum_all(),
            Scorer::Bilinear(w) => hole
                .matmul(w)?
                .mul(lemma)?
                .sum_all(),
        };
        Ok(s)
    }

    /// Scores every causally legal hole–candidate pair of the selected
    /// holes. Illegal pairs are not represented at all: the score vector of
    /// a hole covers exactly the ordinals below its owner.
    pub fn score_holes(
        &self,
        graph: &FileGraph,
        encoding: &FileEncoding<E>,
        hole_indices: impl IntoIterator<Item = usize>,
    ) -> Result<Vec<ScoredHole<E>>> {
        let mut out = Vec::new();
        for idx in hole_indices {
            let entry = &graph.entries[idx];
            debug_assert!(entry.is_hole);
            let candidates = entry.ordinal as usize;
            if candidates == 0 {
                continue;
            }
            let hole_summary = encoding.summaries[idx]
                .as_ref()
                .expect("hole was encoded");
            let cands = encoding.scope_matrix.narrow(0, 0, candidates)?;
            let scores = match &self.scorer {
                Scorer::Diagonal(w) => cands
                    .mul_row_vec(w)?
                    .matmul(&hole_summary.transpose()?)?
                    .reshape([candidates])?,
                Scorer::Bilinear(w) => cands
                    .matmul(w)?
                    .matmul(&hole_summary.transpose()?)?
                    .reshape([candidates])?,
            };
            out.push(ScoredHole {
                entry_index: idx,
                scores,
                positives: entry.positives.iter().map(|&p| p as usize).collect(),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::position_matrix;
    use crate::graph::{build_file_graph, TokenizeConfig};
    use crate::ingest::{self, Term, TermViews};
    use crate::token::Branch;

    fn small_config() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            layers: 1,
            heads: 2,
            d_qk: 4,
            d_v: 4,
            d_ff: 16,
            ..ModelConfig::default()
        }
    }

    fn views(term: Term) -> TermViews {
        TermViews::original_only("", term)
    }

    fn entry(name: &str, ty: Term, holes: Vec<ingest::Hole>) -> ingest::HoledEntry {
        ingest::HoledEntry {
            entry: ingest::ScopeEntry {
                name: name.into(),
                ty: views(ty),
                definition: ingest::PrintedTerm {
                    pretty: String::new(),
                    term: Term::Sort,
                },
            },
            holes,
        }
    }

    fn named(name: &str) -> Term {
        Term::ScopeReference { name: name.into() }
    }

    fn mk_file(entries: Vec<ingest::HoledEntry>) -> ingest::SourceFile {
        ingest::SourceFile {
            name: "Test".into(),
            scope_global: vec![],
            scope_local: entries,
            scope_private: vec![],
        }
    }

    fn hole(goal: Term, premises: Vec<&str>) -> ingest::Hole {
        ingest::Hole {
            context: vec![],
            goal: views(goal),
            term: views(Term::Sort),
            premises: premises.into_iter().map(String::from).collect(),
        }
    }

    #[test]
    fn variable_rotation_composes_the_branch_primitives() {
        // Π(x : A). λy. x — the variable sits two steps below its binder
        // along [R, L], so R_bᵀ·R_p must equal B_R·B_L.
        let term = Term::Pi {
            name: "x".into(),
            domain: Box::new(named("A")),
            codomain: Box::new(Term::Lambda {
                abstraction: "y".into(),
                body: Box::new(Term::DeBruijn { index: 1 }),
            }),
        };
        let tree = crate::token::binarize(&term).unwrap();
        let tree = crate::token::resolve_references(&tree, &Default::default(), None).unwrap();
        let model = PremiseModel::<f64>::init(small_config(), 11);

        let mut set = PositionSet::new();
        let slots = set.intern_tree(&tree);
        let (bl, br) = model.primitives.materialize().unwrap();
        let cache = build_position_cache(&set, &bl, &br).unwrap();

        let (var_id, binder_id) = tree
            .nodes()
            .iter()
            .enumerate()
            .find_map(|(i, n)| match n.kind {
                TokenKind::VarRef(b) => Some((i, b)),
                _ => None,
            })
            .unwrap();
        let rot =
            PremiseModel::relative_rotation(&cache, slots[binder_id as usize], slots[var_id])
                .unwrap();
        let expect = position_matrix(&bl, &br, &[Branch::Right, Branch::Left]).unwrap();
        for (a, b) in rot.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_rotation_is_identity() {
        let model = PremiseModel::<f64>::init(small_config(), 3);
        let mut set = PositionSet::new();
        // Intern a tiny tree to populate a couple of slots.
        let term = Term::Pi {
            name: "x".into(),
            domain: Box::new(Term::Sort),
            codomain: Box::new(Term::DeBruijn { index: 0 }),
        };
        let tree = crate::token::binarize(&term).unwrap();
        set.intern_tree(&tree);
        let (bl, br) = model.primitives.materialize().unwrap();
        let cache = build_position_cache(&set, &bl, &br).unwrap();
        let rot = PremiseModel::relative_rotation(&cache, 1, 1).unwrap();
        let d = rot.dims()[0];
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((rot.data()[i * d + j] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn absent_table_entries_read_as_out_of_scope() {
        let model = PremiseModel::<f64>::init(small_config(), 5);
        // A hand-built two-node tree: [sos] → LemmaRef(0) with nothing in
        // the table yet.
        let term = named("missing");
        let tree = crate::token::binarize(&term).unwrap();
        let mut by_name = std::collections::HashMap::new();
        by_name.insert("missing".to_string(), 0u32);
        let tree = crate::token::resolve_references(&tree, &by_name, None).unwrap();
        let table = ScopeTable::new(1);
        let mut set = PositionSet::new();
        let slots = set.intern_tree(&tree);
        let emb = model
            .embed_nodes(&tree, &slots, None, &table, None)
            .unwrap();
        let oos = model.vocab.gather_rows(&[OOS_INDEX]).unwrap();
        let d = model.config.d_emb();
        assert_eq!(&emb.data()[d..2 * d], oos.data());
    }

    #[test]
    fn scope_table_rejects_double_writes() {
        let mut table = ScopeTable::<f64>::new(2);
        table.set(0, Tensor::zeros([1, 4]));
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            table.set(0, Tensor::zeros([1, 4]));
        }));
        assert!(result.is_err());
    }

    #[test]
    fn eval_encoding_is_deterministic() {
        let file = mk_file(vec![
            entry("base", Term::Sort, vec![]),
            entry(
                "lemma",
                named("base"),
                vec![hole(named("base"), vec!["base"])],
            ),
        ]);
        let graph = build_file_graph(&file, &TokenizeConfig::default()).unwrap();
        let model = PremiseModel::<f64>::init(small_config(), 7);
        let enc1 = model.encode_file(&graph, HoleSelection::All, None).unwrap();
        let enc2 = model.encode_file(&graph, HoleSelection::All, None).unwrap();
        assert_eq!(enc1.scope_matrix.data(), enc2.scope_matrix.data());
        let s1 = model
            .score_holes(&graph, &enc1, graph.hole_entry_indices())
            .unwrap();
        let s2 = model
            .score_holes(&graph, &enc2, graph.hole_entry_indices())
            .unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(a.scores.data(), b.scores.data());
        }
    }

    #[test]
    fn level_zero_summaries_ignore_other_entries() {
        let solo = mk_file(vec![entry("base", Term::Sort, vec![])]);
        let pair = mk_file(vec![
            entry("other", Term::Level, vec![]),
            entry("base", Term::Sort, vec![]),
        ]);
        let cfg = TokenizeConfig::default();
        let g1 = build_file_graph(&solo, &cfg).unwrap();
        let g2 = build_file_graph(&pair, &cfg).unwrap();
        let model = PremiseModel::<f64>::init(small_config(), 9);
        let e1 = model.encode_file(&g1, HoleSelection::All, None).unwrap();
        let e2 = model.encode_file(&g2, HoleSelection::All, None).unwrap();
        // `base` is ordinal 0 in the first file and ordinal 1 in the second.
        let solo_row = &e1.scope_matrix.data()[..8];
        let pair_row = &e2.scope_matrix.data()[8..16];
        assert_eq!(solo_row, pair_row);
    }

    #[test]
    fn within_level_reordering_is_bit_identical() {
        let order_a = mk_file(vec![
            entry("base", Term::Sort, vec![]),
            entry("x", named("base"), vec![]),
            entry("y", named("base"), vec![]),
        ]);
        let order_b = mk_file(vec![
            entry("base", Term::Sort, vec![]),
            entry("y", named("base"), vec![]),
            entry("x", named("base"), vec![]),
        ]);
        let cfg = TokenizeConfig::default();
        let ga = build_file_graph(&order_a, &cfg).unwrap();
        let gb = build_file_graph(&order_b, &cfg).unwrap();
        let model = PremiseModel::<f64>::init(small_config(), 13);
        let ea = model.encode_file(&ga, HoleSelection::All, None).unwrap();
        let eb = model.encode_file(&gb, HoleSelection::All, None).unwrap();
        // x is ordinal 1 in file A and ordinal 2 in file B.
        let xa = &ea.scope_matrix.data()[8..16];
        let xb = &eb.scope_matrix.data()[16..24];
        assert_eq!(xa, xb);
    }

    #[test]
    fn renaming_leaves_scores_unchanged() {
        let original = mk_file(vec![
            entry("base", Term::Sort, vec![]),
            entry(
                "lemma",
                named("base"),
                vec![hole(named("base"), vec!["base"])],
            ),
        ]);
        let renamed = mk_file(vec![
            entry("zq", Term::Sort, vec![]),
            entry("ww", named("zq"), vec![hole(named("zq"), vec!["zq"])]),
        ]);
        let cfg = TokenizeConfig::default();
        let g1 = build_file_graph(&original, &cfg).unwrap();
        let g2 = build_file_graph(&renamed, &cfg).unwrap();
        let model = PremiseModel::<f64>::init(small_config(), 21);
        let e1 = model.encode_file(&g1, HoleSelection::All, None).unwrap();
        let e2 = model.encode_file(&g2, HoleSelection::All, None).unwrap();
        let s1 = model
            .score_holes(&g1, &e1, g1.hole_entry_indices())
            .unwrap();
        let s2 = model
            .score_holes(&g2, &e2, g2.hole_entry_indices())
            .unwrap();
        assert_eq!(s1[0].scores.data(), s2[0].scores.data());
    }

    #[test]
    fn scorer_examples() {
        let cfg = small_config();
        let mut model = PremiseModel::<f64>::init(cfg.clone(), 1);
        // w all ones, h = l = unit vector → score 1.
        model.scorer = Scorer::Diagonal(Tensor::ones([cfg.d_model]).to_param());
        let mut unit = vec![0.0; cfg.d_model];
        unit[0] = 1.0;
        let h = Tensor::constant([1, cfg.d_model], unit.clone());
        assert!((model.score_pair(&h, &h).unwrap().scalar_value() - 1.0).abs() < 1e-12);
        // w all zeros → every score 0.
        model.scorer = Scorer::Diagonal(Tensor::zeros([cfg.d_model]).to_param());
        assert_eq!(model.score_pair(&h, &h).unwrap().scalar_value(), 0.0);
    }

    #[test]
    fn holes_before_any_candidate_are_skipped() {
        // A hole on the very first entry has no legal candidates.
        let file = mk_file(vec![entry(
            "first",
            Term::Sort,
            vec![hole(Term::Sort, vec![])],
        )]);
        let graph = build_file_graph(&file, &TokenizeConfig::default()).unwrap();
        let model = PremiseModel::<f64>::init(small_config(), 17);
        let enc = model.encode_file(&graph, HoleSelection::All, None).unwrap();
        let scored = model
            .score_holes(&graph, &enc, graph.hole_entry_indices())
            .unwrap();
        assert!(scored.is_empty());
    }

    #[test]
    fn set_parameters_round_trips() {
        let mut model = PremiseModel::<f64>::init(small_config(), 2);
        let params = model.param_tensors();
        let doubled: Vec<_> = params
            .iter()
            .map(|t| {
                Tensor::param(
                    t.dims().to_vec(),
                    t.data().iter().map(|v| v * 2.0).collect(),
                )
            })
            .collect();
        model.set_parameters(doubled).unwrap();
        let after = model.param_tensors();
        for (a, b) in params.iter().zip(&after) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*y, x * 2.0);
            }
        }
    }
}
