//! Seeded generator of well-formed synthetic module files with planted
//! premise labels, plus a handful of fixture files for the filtering rules.
//!
//! Every generated file follows the extract schema: a few global imports, a
//! few local base types, a body of lemma entries whose types reference
//! earlier entries, and holes attached to later entries. Labels follow a
//! structural rule: a candidate is relevant to a hole exactly when the
//! hole's goal *body* references it — either directly, or as the type of a
//! context variable the body actually uses. References appearing only in
//! binder domains (context types) are decoys and stay negative, so a model
//! must attend to where in the tree a reference occurs, not merely whether
//! it occurs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{
    ContextItem, Hole, HoledEntry, PrintedTerm, ScopeEntry, SourceFile, Term, TermViews,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub files: usize,
    /// Local entries per file (base types plus lemmas).
    pub lemmas_per_file: usize,
    pub holes_per_file: usize,
    pub imports: usize,
    pub base_types: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            files: 20,
            lemmas_per_file: 30,
            holes_per_file: 10,
            imports: 3,
            base_types: 4,
            seed: 0,
        }
    }
}

const STEMS: &[&str] = &[
    "assoc", "comm", "dist", "lift", "fold", "mapf", "pair", "swap", "zero", "succ", "mul",
    "plus", "ident", "inv", "cong", "trans", "refl", "subst", "iter", "norm",
];
const VARS: &[&str] = &["x", "y", "z", "w"];

fn views(pretty: &str, term: Term) -> TermViews {
    TermViews::original_only(pretty, term)
}

fn printed(term: Term) -> PrintedTerm {
    PrintedTerm {
        pretty: "_".into(),
        term,
    }
}

fn named(name: &str) -> Term {
    Term::ScopeReference { name: name.into() }
}

struct FilePlan {
    /// (name, is_base) per scope position, imports first.
    entries: Vec<(String, bool)>,
}

impl FilePlan {
    /// Entries usable as lemma references below `limit`; base types excluded
    /// so that reference targets carry learnable content.
    fn lemma_pool(&self, limit: usize) -> Vec<usize> {
        (0..limit).filter(|&i| !self.entries[i].1).collect()
    }

    fn base_pool(&self, limit: usize) -> Vec<usize> {
        (0..limit).filter(|&i| self.entries[i].1).collect()
    }
}

/// A lemma type: a short telescope over base types, then an application
/// body referencing earlier entries.
fn lemma_type(plan: &FilePlan, ordinal: usize, rng: &mut ChaCha8Rng) -> Term {
    let bases = plan.base_pool(ordinal);
    let lemmas = plan.lemma_pool(ordinal);
    let binders = rng.gen_range(0..=2usize);

    let head_pool = if lemmas.is_empty() { &bases } else { &lemmas };
    let head = named(&plan.entries[*head_pool.choose(rng).expect("non-empty pool")].0);
    let mut args: Vec<Term> = Vec::new();
    for _ in 0..rng.gen_range(1..=3usize) {
        let roll = rng.gen::<f64>();
        if roll < 0.4 && binders > 0 {
            args.push(Term::DeBruijn {
                index: rng.gen_range(0..binders as u32),
            });
        } else if roll < 0.8 && !lemmas.is_empty() {
            args.push(named(&plan.entries[*lemmas.choose(rng).unwrap()].0));
        } else {
            args.push(named(&plan.entries[*bases.choose(rng).unwrap()].0));
        }
    }
    let mut body = Term::Application {
        head: Box::new(head),
        arguments: args,
    };
    for b in (0..binders).rev() {
        body = Term::Pi {
            name: VARS[b % VARS.len()].to_string(),
            domain: Box::new(named(&plan.entries[*bases.choose(rng).unwrap()].0)),
            codomain: Box::new(body),
        };
    }
    body
}

/// A hole with planted labels.
///
/// The goal body applies a head to a mix of direct lemma references and
/// context variables; positives are the referenced lemmas plus the types of
/// the variables the body uses. Context types may carry decoy references
/// that stay negative.
fn plant_hole(plan: &FilePlan, owner: usize, rng: &mut ChaCha8Rng) -> Option<Hole> {
    let lemmas = plan.lemma_pool(owner);
    let bases = plan.base_pool(owner);
    if lemmas.len() < 2 || bases.is_empty() {
        return None;
    }

    let ctx_len = rng.gen_range(0..=2usize);
    let mut ctx_types: Vec<usize> = Vec::new(); // base-type ordinal per variable
    let mut ctx_decoys: Vec<Option<usize>> = Vec::new();
    for _ in 0..ctx_len {
        ctx_types.push(*bases.choose(rng).unwrap());
        // Sometimes a context type mentions a lemma that must stay negative.
        ctx_decoys.push(if rng.gen::<f64>() < 0.5 {
            Some(*lemmas.choose(rng).unwrap())
        } else {
            None
        });
    }

    let used_lemma_count = rng.gen_range(1..=3usize.min(lemmas.len()));
    let mut shuffled = lemmas.clone();
    shuffled.shuffle(rng);
    let used_lemmas: Vec<usize> = shuffled[..used_lemma_count].to_vec();

    let mut positives: Vec<usize> = used_lemmas.clone();
    let mut args: Vec<Term> = Vec::new();
    for &l in &used_lemmas {
        args.push(named(&plan.entries[l].0));
    }
    for (j, &ty) in ctx_types.iter().enumerate() {
        if rng.gen::<f64>() < 0.6 {
            // The body uses variable j: the de Bruijn index is the binder
            // distance from the use site, innermost binder first.
            args.push(Term::DeBruijn {
                index: (ctx_len - 1 - j) as u32,
            });
            positives.push(ty);
            if rng.gen::<f64>() < 0.5 {
                args.push(named(&plan.entries[ty].0));
            }
        }
    }
    args.shuffle(rng);

    let head_ordinal = *lemmas.choose(rng).unwrap();
    positives.push(head_ordinal);
    let goal = Term::Application {
        head: Box::new(named(&plan.entries[head_ordinal].0)),
        arguments: args,
    };

    let context: Vec<ContextItem> = ctx_types
        .iter()
        .zip(&ctx_decoys)
        .enumerate()
        .map(|(j, (&ty, decoy))| {
            let base = named(&plan.entries[ty].0);
            let term = match decoy {
                Some(d) => Term::Application {
                    head: Box::new(base),
                    arguments: vec![named(&plan.entries[*d].0)],
                },
                None => base,
            };
            ContextItem {
                name: VARS[j % VARS.len()].to_string(),
                pretty: format!("({} : _)", VARS[j % VARS.len()]),
                ty: views("_", term),
            }
        })
        .collect();

    positives.sort_unstable();
    positives.dedup();
    let premises: Vec<String> = positives
        .iter()
        .map(|&p| plan.entries[p].0.clone())
        .collect();
    let proof = Term::Application {
        head: Box::new(named(&premises[0])),
        arguments: vec![Term::Literal],
    };
    Some(Hole {
        context,
        goal: views("_", goal),
        term: views("_", proof),
        premises,
    })
}

/// Generates one file; `index` individualizes the content and the names.
pub fn generate_file(cfg: &SynthConfig, index: usize) -> SourceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(
        cfg.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1),
    );
    let mut counter = 2usize;
    let mut fresh = |stem: &str, rng: &mut ChaCha8Rng| {
        let id = counter;
        counter += rng.gen_range(2..=6usize);
        format!("{stem}<{id}>")
    };

    let mut plan = FilePlan {
        entries: Vec::new(),
    };
    for i in 0..cfg.imports {
        let name = fresh(&format!("Core.{}{index}", STEMS[i % STEMS.len()]), &mut rng);
        plan.entries.push((name, true));
    }
    for i in 0..cfg.base_types {
        let name = fresh(&format!("Ty{i}"), &mut rng);
        plan.entries.push((name, true));
    }
    let lemma_count = cfg.lemmas_per_file.saturating_sub(cfg.base_types).max(2);
    for i in 0..lemma_count {
        let stem = STEMS[rng.gen_range(0..STEMS.len())];
        let name = fresh(&format!("{stem}{i}"), &mut rng);
        plan.entries.push((name, false));
    }

    let total = plan.entries.len();
    let scope_global: Vec<ScopeEntry> = (0..cfg.imports)
        .map(|i| ScopeEntry {
            name: plan.entries[i].0.clone(),
            ty: views("Set", Term::Sort),
            definition: printed(Term::Sort),
        })
        .collect();

    // Holes go to the later half of the entries; the last one becomes a
    // private helper so every scope section is exercised.
    let owner_floor = total - (total - cfg.imports - cfg.base_types) / 2;
    let mut holes_by_owner: Vec<Vec<Hole>> = vec![Vec::new(); total];
    let mut planted = 0usize;
    let mut attempts = 0usize;
    while planted < cfg.holes_per_file && attempts < cfg.holes_per_file * 20 {
        attempts += 1;
        let owner = rng.gen_range(owner_floor..total);
        if let Some(hole) = plant_hole(&plan, owner, &mut rng) {
            holes_by_owner[owner].push(hole);
            planted += 1;
        }
    }

    let mut scope_local: Vec<HoledEntry> = Vec::new();
    let mut scope_private: Vec<HoledEntry> = Vec::new();
    for ordinal in cfg.imports..total {
        let (name, is_base) = plan.entries[ordinal].clone();
        let ty = if is_base {
            Term::Sort
        } else {
            lemma_type(&plan, ordinal, &mut rng)
        };
        let entry = HoledEntry {
            entry: ScopeEntry {
                name,
                ty: views("_", ty),
                definition: printed(Term::Literal),
            },
            holes: std::mem::take(&mut holes_by_owner[ordinal]),
        };
        if ordinal == total - 1 {
            scope_private.push(entry);
        } else {
            scope_local.push(entry);
        }
    }

    SourceFile {
        name: format!("Synth.Module{index}"),
        scope_global,
        scope_local,
        scope_private,
    }
}

/// Generates the whole corpus.
pub fn generate(cfg: &SynthConfig) -> Vec<SourceFile> {
    (0..cfg.files).map(|i| generate_file(cfg, i)).collect()
}

fn rename_term(term: &Term, tag: &str) -> Term {
    let re = |t: &Term| rename_term(t, tag);
    match term {
        Term::ScopeReference { name } => Term::ScopeReference {
            name: format!("{tag}{name}"),
        },
        Term::Pi {
            name,
            domain,
            codomain,
        } => Term::Pi {
            name: format!("{tag}{name}"),
            domain: Box::new(re(domain)),
            codomain: Box::new(re(codomain)),
        },
        Term::Lambda { abstraction, body } => Term::Lambda {
            abstraction: format!("{tag}{abstraction}"),
            body: Box::new(re(body)),
        },
        Term::Application { head, arguments } => Term::Application {
            head: Box::new(re(head)),
            arguments: arguments.iter().map(re).collect(),
        },
        Term::Adt { variants } => Term::Adt {
            variants: variants.iter().map(re).collect(),
        },
        Term::Record { context, fields } => Term::Record {
            context: context.iter().map(re).collect(),
            fields: fields.iter().map(re).collect(),
        },
        Term::Function { clauses } => Term::Function {
            clauses: clauses
                .iter()
                .map(|c| crate::ingest::Clause {
                    ctx: c.ctx.iter().map(re).collect(),
                    patterns: c.patterns.iter().map(re).collect(),
                    body: re(&c.body),
                })
                .collect(),
        },
        other => other.clone(),
    }
}

fn rename_views(v: &TermViews, tag: &str) -> TermViews {
    let rp = |p: &PrintedTerm| PrintedTerm {
        pretty: p.pretty.clone(),
        term: rename_term(&p.term, tag),
    };
    TermViews {
        original: rp(&v.original),
        simplified: v.simplified.as_ref().map(rp),
        reduced: v.reduced.as_ref().map(rp),
        normalised: v.normalised.as_ref().map(rp),
    }
}

/// Applies a consistent renaming bijection (`name ↦ tag + name`) to every
/// binder, scope entry, reference and premise of a file. Token streams,
/// summaries and scores must all be invariant under such a renaming.
pub fn rename_consistently(file: &SourceFile, tag: &str) -> SourceFile {
    let entry = |e: &ScopeEntry| ScopeEntry {
        name: format!("{tag}{}", e.name),
        ty: rename_views(&e.ty, tag),
        definition: PrintedTerm {
            pretty: e.definition.pretty.clone(),
            term: rename_term(&e.definition.term, tag),
        },
    };
    let holed = |h: &HoledEntry| HoledEntry {
        entry: entry(&h.entry),
        holes: h
            .holes
            .iter()
            .map(|hole| Hole {
                context: hole
                    .context
                    .iter()
                    .map(|c| ContextItem {
                        name: format!("{tag}{}", c.name),
                        pretty: c.pretty.clone(),
                        ty: rename_views(&c.ty, tag),
                    })
                    .collect(),
                goal: rename_views(&hole.goal, tag),
                term: rename_views(&hole.term, tag),
                premises: hole.premises.iter().map(|p| format!("{tag}{p}")).collect(),
            })
            .collect(),
    };
    SourceFile {
        name: file.name.clone(),
        scope_global: file.scope_global.iter().map(entry).collect(),
        scope_local: file.scope_local.iter().map(holed).collect(),
        scope_private: file.scope_private.iter().map(holed).collect(),
    }
}

/// A file with two mutually referencing entries; level peeling must stall.
pub fn cyclic_file(name: &str) -> SourceFile {
    let entry = |n: &str, ty: Term| HoledEntry {
        entry: ScopeEntry {
            name: n.into(),
            ty: views("_", ty),
            definition: printed(Term::Sort),
        },
        holes: vec![Hole {
            context: vec![],
            goal: views("_", Term::Sort),
            term: views("_", Term::Sort),
            premises: vec![],
        }],
    };
    SourceFile {
        name: name.into(),
        scope_global: vec![],
        scope_local: vec![
            entry("even<2>", named("odd<4>")),
            entry("odd<4>", named("even<2>")),
        ],
        scope_private: vec![],
    }
}

/// A file whose entries carry no holes at all.
pub fn hole_free_file(name: &str) -> SourceFile {
    SourceFile {
        name: name.into(),
        scope_global: vec![],
        scope_local: (0..3)
            .map(|i| HoledEntry {
                entry: ScopeEntry {
                    name: format!("quiet{i}<{}>", 2 * i + 2),
                    ty: views("Set", Term::Sort),
                    definition: printed(Term::Sort),
                },
                holes: vec![],
            })
            .collect(),
        scope_private: vec![],
    }
}

/// A single-hole file whose token count exceeds `min_tokens`.
pub fn oversized_file(name: &str, min_tokens: u64) -> SourceFile {
    // A right-nested arrow chain: each function type adds two tokens.
    let mut ty = named("bulk<2>");
    for _ in 0..min_tokens / 2 + 2 {
        ty = Term::Pi {
            name: "_".into(),
            domain: Box::new(named("bulk<2>")),
            codomain: Box::new(ty),
        };
    }
    SourceFile {
        name: name.into(),
        scope_global: vec![],
        scope_local: vec![
            HoledEntry {
                entry: ScopeEntry {
                    name: "bulk<2>".into(),
                    ty: views("Set", Term::Sort),
                    definition: printed(Term::Sort),
                },
                holes: vec![],
            },
            HoledEntry {
                entry: ScopeEntry {
                    name: "giant<4>".into(),
                    ty: views("_", ty),
                    definition: printed(Term::Sort),
                },
                holes: vec![Hole {
                    context: vec![],
                    goal: views("_", named("bulk<2>")),
                    term: views("_", Term::Sort),
                    premises: vec!["bulk<2>".into()],
                }],
            },
        ],
        scope_private: vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_file_graph, filter_file, FilterOutcome, TokenizeConfig};

    #[test]
    fn generated_files_build_and_pass_the_filter() {
        let cfg = SynthConfig {
            files: 4,
            ..SynthConfig::default()
        };
        for file in generate(&cfg) {
            let graph = build_file_graph(&file, &TokenizeConfig::default()).unwrap();
            assert_eq!(
                filter_file(&graph, crate::graph::MAX_TOKENS_DEFAULT),
                FilterOutcome::Accept,
                "file {}",
                file.name
            );
            assert_eq!(graph.hole_count(), cfg.holes_per_file);
            // Every hole keeps at least one causally legal positive.
            for idx in graph.hole_entry_indices() {
                assert!(!graph.entries[idx].positives.is_empty());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            files: 2,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a, b);
        let c = generate(&SynthConfig {
            seed: 1,
            ..cfg.clone()
        });
        assert_ne!(a, c);
    }

    #[test]
    fn holes_have_in_body_positives_and_decoy_negatives() {
        let cfg = SynthConfig {
            files: 6,
            ..SynthConfig::default()
        };
        let mut decoys_seen = 0;
        for file in generate(&cfg) {
            let graph = build_file_graph(&file, &TokenizeConfig::default()).unwrap();
            for idx in graph.hole_entry_indices() {
                let entry = &graph.entries[idx];
                let refs: std::collections::BTreeSet<u32> = entry.tree.lemma_refs().collect();
                // Positives always appear somewhere in the folded tree.
                for &p in &entry.positives {
                    assert!(refs.contains(&p));
                }
                // Decoy references: present in the tree, not positive.
                if refs.len() > entry.positives.len() {
                    decoys_seen += 1;
                }
            }
        }
        assert!(decoys_seen > 0, "the corpus should contain decoys");
    }

    #[test]
    fn renaming_produces_identical_token_streams() {
        let cfg = SynthConfig {
            files: 2,
            ..SynthConfig::default()
        };
        for file in generate(&cfg) {
            let renamed = rename_consistently(&file, "ρ·");
            let g1 = build_file_graph(&file, &TokenizeConfig::default()).unwrap();
            let g2 = build_file_graph(&renamed, &TokenizeConfig::default()).unwrap();
            assert_eq!(g1.entries.len(), g2.entries.len());
            for (a, b) in g1.entries.iter().zip(&g2.entries) {
                assert_eq!(a.tree, b.tree, "entry {} vs {}", a.name, b.name);
                assert_eq!(a.positives, b.positives);
                assert_eq!(a.level, b.level);
            }
            assert_eq!(g1.levels, g2.levels);
        }
    }

    #[test]
    fn fixtures_trip_their_filters() {
        let cfg = TokenizeConfig::default();
        assert!(build_file_graph(&cyclic_file("C"), &cfg).is_err());

        let quiet = build_file_graph(&hole_free_file("Q"), &cfg).unwrap();
        assert!(matches!(
            filter_file(&quiet, 1 << 14),
            FilterOutcome::Reject(crate::graph::RejectReason::NoHoles)
        ));

        let giant = build_file_graph(&oversized_file("G", 1 << 14), &cfg).unwrap();
        assert!(giant.token_count > 1 << 14);
        assert!(matches!(
            filter_file(&giant, 1 << 14),
            FilterOutcome::Reject(crate::graph::RejectReason::TooLarge { .. })
        ));
    }
}
