//! Per-file graphs: tokenized scope entries and holes, stratified into
//! dependency levels, plus the filtering rules and the on-disk corpus cache.
//!
//! Scope entries receive a *definition ordinal* from their document order
//! (global, then local, then private). Holes inherit the ordinal of the
//! entry whose definition they sit in; their candidate premises are exactly
//! the scope entries with a strictly smaller ordinal, and both their lemma
//! references and their positive labels are restricted to that causal set.
//!
//! Dependency levels are peeled iteratively: an entry is ready once every
//! lemma it references has already been leveled. Files where peeling stalls
//! contain mutual references and are rejected.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{self, IngestError, ReductionLevel, SourceFile};
use crate::token::{self, TokenTree, TokenizeError};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("entry `{entry}`: {source}")]
    Tokenize {
        entry: String,
        source: TokenizeError,
    },
    #[error("cyclic references among entries: {}", stuck.join(", "))]
    Cyclic { stuck: Vec<String> },
}

/// Tokenization options shared across the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TokenizeConfig {
    /// Evaluation levels to prefer when choosing which view of a type to
    /// tokenize; the original is the fallback and the default.
    pub reduction_preference: Vec<ReductionLevel>,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        TokenizeConfig {
            reduction_preference: vec![ReductionLevel::Original],
        }
    }
}

/// One tokenized unit of a file: a scope entry or a hole.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphEntry {
    pub name: String,
    pub tree: TokenTree,
    pub is_hole: bool,
    /// Scope position of the entry itself, or of the owning entry for holes.
    pub ordinal: u32,
    /// Dependency level; every referenced ordinal lives at a smaller level.
    pub level: u32,
    /// For holes: causally legal positive ordinals, ascending. Empty for
    /// scope entries.
    pub positives: Vec<u32>,
    /// For holes: index among the file's holes in document order.
    pub hole_index: Option<u32>,
}

/// All scope entries and holes of one file, partitioned into dependency
/// levels. Indices `0..scope_len` are the scope entries (index == ordinal);
/// holes follow.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileGraph {
    pub name: String,
    pub entries: Vec<GraphEntry>,
    pub scope_len: u32,
    /// Partition of all entry indices, in encoding order.
    pub levels: Vec<Vec<u32>>,
    /// Total token count across every tree in the file.
    pub token_count: u64,
    /// Non-fatal issues found while attaching labels.
    pub warnings: Vec<String>,
}

impl FileGraph {
    pub fn hole_count(&self) -> usize {
        self.entries.len() - self.scope_len as usize
    }

    /// Indices of hole entries, in document order.
    pub fn hole_entry_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (self.scope_len as usize)..self.entries.len()
    }

    /// Number of causally legal candidates for the hole at `entry_index`.
    pub fn candidate_count(&self, entry_index: usize) -> usize {
        self.entries[entry_index].ordinal as usize
    }
}

/// Default token budget per file.
pub const MAX_TOKENS_DEFAULT: u64 = 1 << 14;

/// Why a file is excluded from the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum RejectReason {
    /// No holes recorded; of no use for premise selection.
    NoHoles,
    /// Token count exceeds the configured budget.
    TooLarge { tokens: u64, max: u64 },
    /// Mutual references; the level peeling stalled.
    Cyclic { detail: String },
    /// The file could not be parsed or tokenized at all.
    Malformed { detail: String },
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::NoHoles => write!(f, "no holes"),
            RejectReason::TooLarge { tokens, max } => {
                write!(f, "too large ({tokens} tokens > {max})")
            }
            RejectReason::Cyclic { detail } => write!(f, "mutual induction: {detail}"),
            RejectReason::Malformed { detail } => write!(f, "malformed: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum FilterOutcome {
    Accept,
    Reject(RejectReason),
}

/// Applies the corpus filtering rules to a built graph.
///
/// Cyclic and malformed files never reach this point — building the graph
/// already failed — so the checks here are hole presence first, then size.
pub fn filter_file(graph: &FileGraph, max_tokens: u64) -> FilterOutcome {
    if graph.hole_count() == 0 {
        return FilterOutcome::Reject(RejectReason::NoHoles);
    }
    if graph.token_count > max_tokens {
        return FilterOutcome::Reject(RejectReason::TooLarge {
            tokens: graph.token_count,
            max: max_tokens,
        });
    }
    FilterOutcome::Accept
}

/// Tokenizes a parsed file into a dependency-leveled graph.
pub fn build_file_graph(file: &SourceFile, config: &TokenizeConfig) -> Result<FileGraph, GraphError> {
    let scope = ingest::collect_scope(file)?;
    let pref = &config.reduction_preference;

    let mut by_name: HashMap<String, u32> = HashMap::with_capacity(scope.len());
    for (ordinal, entry) in scope.iter().enumerate() {
        by_name.insert(entry.name.to_string(), ordinal as u32);
    }

    let mut entries: Vec<GraphEntry> = Vec::with_capacity(scope.len());
    let mut warnings = Vec::new();

    for (ordinal, entry) in scope.iter().enumerate() {
        let term = ingest::select_reduction(entry.ty, pref);
        let tree = token::binarize(term)
            .and_then(|t| token::resolve_references(&t, &by_name, None))
            .map_err(|source| GraphError::Tokenize {
                entry: entry.name.to_string(),
                source,
            })?;
        entries.push(GraphEntry {
            name: entry.name.to_string(),
            tree,
            is_hole: false,
            ordinal: ordinal as u32,
            level: 0,
            positives: Vec::new(),
            hole_index: None,
        });
    }
    let scope_len = entries.len() as u32;

    let mut hole_index = 0u32;
    for (ordinal, entry) in scope.iter().enumerate() {
        for (k, hole) in entry.holes.iter().enumerate() {
            let bindings: Vec<(String, ingest::Term)> = hole
                .context
                .iter()
                .map(|c| {
                    (
                        c.name.clone(),
                        ingest::select_reduction(&c.ty, pref).clone(),
                    )
                })
                .collect();
            let goal = ingest::select_reduction(&hole.goal, pref).clone();
            let folded = token::fold_context(&bindings, goal);
            let label = format!("{}#{}", entry.name, k);
            // Lemma references inside a hole are restricted to entries
            // defined before its owner; later names read as out-of-scope.
            let tree = token::binarize(&folded)
                .and_then(|t| token::resolve_references(&t, &by_name, Some(ordinal as u32)))
                .map_err(|source| GraphError::Tokenize {
                    entry: label.clone(),
                    source,
                })?;

            let mut positives = Vec::new();
            for premise in &hole.premises {
                match by_name.get(premise.as_str()) {
                    None => warnings.push(format!(
                        "{label}: premise `{premise}` is not a scope entry"
                    )),
                    Some(&ord) if ord < ordinal as u32 => positives.push(ord),
                    Some(_) => {} // causally illegal pair, discarded
                }
            }
            positives.sort_unstable();
            positives.dedup();

            entries.push(GraphEntry {
                name: label,
                tree,
                is_hole: true,
                ordinal: ordinal as u32,
                level: 0,
                positives,
                hole_index: Some(hole_index),
            });
            hole_index += 1;
        }
    }

    let levels = peel_levels(&mut entries, scope_len)?;
    let token_count = entries.iter().map(|e| e.tree.len() as u64).sum();

    Ok(FileGraph {
        name: file.name.clone(),
        entries,
        scope_len,
        levels,
        token_count,
        warnings,
    })
}

/// Iteratively peels entries whose references are all already leveled.
fn peel_levels(entries: &mut [GraphEntry], scope_len: u32) -> Result<Vec<Vec<u32>>, GraphError> {
    let refs: Vec<Vec<u32>> = entries
        .iter()
        .map(|e| {
            let mut r: Vec<u32> = e.tree.lemma_refs().collect();
            r.sort_unstable();
            r.dedup();
            r
        })
        .collect();

    let mut leveled = vec![false; scope_len as usize];
    let mut placed = vec![false; entries.len()];
    let mut levels: Vec<Vec<u32>> = Vec::new();
    let mut remaining = entries.len();

    while remaining > 0 {
        let mut ready: Vec<u32> = Vec::new();
        for (i, entry_refs) in refs.iter().enumerate() {
            if placed[i] {
                continue;
            }
            if entry_refs.iter().all(|&r| leveled[r as usize]) {
                ready.push(i as u32);
            }
        }
        if ready.is_empty() {
            let stuck: Vec<String> = entries
                .iter()
                .enumerate()
                .filter(|(i, _)| !placed[*i])
                .take(8)
                .map(|(_, e)| e.name.clone())
                .collect();
            return Err(GraphError::Cyclic { stuck });
        }
        let level = levels.len() as u32;
        for &i in &ready {
            placed[i as usize] = true;
            entries[i as usize].level = level;
            if !entries[i as usize].is_hole {
                leveled[i as usize] = true;
            }
        }
        remaining -= ready.len();
        levels.push(ready);
    }
    Ok(levels)
}

/// The corpus cache: tokenized graphs ready for training and evaluation.
///
/// On disk this is newline-delimited JSON: a header record followed by one
/// record per file. Files that parse and tokenize but exceed the token
/// budget are kept and flagged so the splitter can route them; files with no
/// holes, cycles, or schema errors are not cached at all.
pub mod cache {
    use super::*;
    use std::io::{BufRead, Write};
    use std::path::Path;

    pub const FORMAT: &str = "premsel-corpus";
    pub const VERSION: u32 = 1;

    #[derive(Debug, Serialize, Deserialize)]
    struct Header {
        format: String,
        version: u32,
        max_tokens: u64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct CachedFile {
        pub graph: FileGraph,
        /// True when the file exceeds the token budget; such files never
        /// train, and evaluate only as the out-of-distribution set.
        pub oversized: bool,
    }

    #[derive(Debug, Clone)]
    pub struct CorpusCache {
        pub max_tokens: u64,
        pub files: Vec<CachedFile>,
    }

    #[derive(Debug, thiserror::Error)]
    pub enum CacheError {
        #[error("i/o error on {path}: {source}")]
        Io {
            path: String,
            source: std::io::Error,
        },
        #[error("{path} is not a corpus cache: {detail}")]
        Format { path: String, detail: String },
        #[error(
            "unsupported cache version {found} in {path} (this build reads version {expected})"
        )]
        Version {
            path: String,
            found: u32,
            expected: u32,
        },
    }

    pub fn write(path: &Path, cache: &CorpusCache) -> Result<(), CacheError> {
        let io_err = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        let header = Header {
            format: FORMAT.to_string(),
            version: VERSION,
            max_tokens: cache.max_tokens,
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| CacheError::Format {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(io_err)?;
        for f in &cache.files {
            serde_json::to_writer(&mut w, f).map_err(|e| CacheError::Format {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<CorpusCache, CacheError> {
        let display = path.display().to_string();
        let io_err = |source| CacheError::Io {
            path: display.clone(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io_err)?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| CacheError::Format {
                path: display.clone(),
                detail: "empty file".to_string(),
            })?
            .map_err(io_err)?;
        let header: Header =
            serde_json::from_str(&header_line).map_err(|e| CacheError::Format {
                path: display.clone(),
                detail: e.to_string(),
            })?;
        if header.format != FORMAT {
            return Err(CacheError::Format {
                path: display,
                detail: format!("unexpected format tag `{}`", header.format),
            });
        }
        if header.version != VERSION {
            return Err(CacheError::Version {
                path: display,
                found: header.version,
                expected: VERSION,
            });
        }
        let mut files = Vec::new();
        for line in lines {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            files.push(
                serde_json::from_str(&line).map_err(|e| CacheError::Format {
                    path: display.clone(),
                    detail: e.to_string(),
                })?,
            );
        }
        Ok(CorpusCache {
            max_tokens: header.max_tokens,
            files,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Term, TermViews};

    fn views(term: Term) -> TermViews {
        TermViews::original_only("", term)
    }

    fn entry(name: &str, ty: Term) -> ingest::HoledEntry {
        ingest::HoledEntry {
            entry: ingest::ScopeEntry {
                name: name.into(),
                ty: views(ty),
                definition: ingest::PrintedTerm {
                    pretty: String::new(),
                    term: Term::Sort,
                },
            },
            holes: Vec::new(),
        }
    }

    fn named(name: &str) -> Term {
        Term::ScopeReference { name: name.into() }
    }

    fn arrow(a: Term, b: Term) -> Term {
        Term::Pi {
            name: "_".into(),
            domain: Box::new(a),
            codomain: Box::new(b),
        }
    }

    fn file(entries: Vec<ingest::HoledEntry>) -> SourceFile {
        SourceFile {
            name: "Test".into(),
            scope_global: Vec::new(),
            scope_local: entries,
            scope_private: Vec::new(),
        }
    }

    fn level_names(graph: &FileGraph) -> Vec<Vec<String>> {
        graph
            .levels
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|&i| graph.entries[i as usize].name.clone())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn levels_respect_reference_arrows() {
        // nat : Set; zero : nat; suc : nat → nat; plus : nat → nat → nat;
        // comm references plus and nat.
        let f = file(vec![
            entry("nat", Term::Sort),
            entry("zero", named("nat")),
            entry("suc", arrow(named("nat"), named("nat"))),
            entry("plus", arrow(named("nat"), arrow(named("nat"), named("nat")))),
            entry(
                "comm",
                arrow(
                    named("nat"),
                    Term::Application {
                        head: Box::new(named("plus")),
                        arguments: vec![named("zero"), named("zero")],
                    },
                ),
            ),
        ]);
        let graph = build_file_graph(&f, &TokenizeConfig::default()).unwrap();
        let names = level_names(&graph);
        assert_eq!(names[0], vec!["nat"]);
        assert_eq!(names[1], vec!["zero", "suc", "plus"]);
        assert_eq!(names[2], vec!["comm"]);
    }

    #[test]
    fn reference_free_file_is_a_single_level() {
        let f = file(vec![
            entry("a", Term::Sort),
            entry("b", Term::Sort),
            entry("c", Term::Level),
        ]);
        let graph = build_file_graph(&f, &TokenizeConfig::default()).unwrap();
        assert_eq!(graph.levels.len(), 1);
        assert_eq!(graph.levels[0], vec![0, 1, 2]);
    }

    #[test]
    fn mutual_references_are_cyclic() {
        let f = file(vec![entry("a", named("b")), entry("b", named("a"))]);
        assert!(matches!(
            build_file_graph(&f, &TokenizeConfig::default()),
            Err(GraphError::Cyclic { .. })
        ));
    }

    #[test]
    fn holes_inherit_owner_ordinal_and_restrict_premises() {
        let mut lemma = entry("lemma", named("base"));
        lemma.holes.push(ingest::Hole {
            context: vec![],
            goal: views(named("base")),
            term: views(Term::Sort),
            premises: vec![
                "base".into(),   // legal: earlier ordinal
                "lemma".into(),  // the owner itself: causally illegal
                "later".into(),  // defined after the owner: causally illegal
                "ghost".into(),  // not a scope entry at all
                "base".into(),   // repeated use still counts once
            ],
        });
        let f = file(vec![entry("base", Term::Sort), lemma, entry("later", Term::Sort)]);
        let graph = build_file_graph(&f, &TokenizeConfig::default()).unwrap();
        assert_eq!(graph.hole_count(), 1);
        let hole = &graph.entries[graph.scope_len as usize..][0];
        assert!(hole.is_hole);
        assert_eq!(hole.ordinal, 1);
        assert_eq!(hole.positives, vec![0]);
        assert_eq!(graph.candidate_count(graph.scope_len as usize), 1);
        assert_eq!(graph.warnings.len(), 1);
        assert!(graph.warnings[0].contains("ghost"));
    }

    #[test]
    fn hole_goal_references_to_later_entries_are_masked() {
        let mut lemma = entry("lemma", named("base"));
        lemma.holes.push(ingest::Hole {
            context: vec![],
            goal: views(Term::Application {
                head: Box::new(named("later")),
                arguments: vec![named("base")],
            }),
            term: views(Term::Sort),
            premises: vec![],
        });
        let f = file(vec![entry("base", Term::Sort), lemma, entry("later", Term::Sort)]);
        let graph = build_file_graph(&f, &TokenizeConfig::default()).unwrap();
        let hole = &graph.entries[graph.scope_len as usize..][0];
        let refs: Vec<u32> = hole.tree.lemma_refs().collect();
        assert_eq!(refs, vec![0]); // `later` masked to [oos], `base` kept
        assert!(hole
            .tree
            .nodes()
            .iter()
            .any(|n| n.kind == crate::token::TokenKind::OosLeaf));
        // Causality holds: every reference ordinal is below the hole's.
        assert!(refs.iter().all(|&r| r < hole.ordinal));
    }

    #[test]
    fn filter_applies_the_corpus_rules() {
        let f = file(vec![entry("a", Term::Sort)]);
        let graph = build_file_graph(&f, &TokenizeConfig::default()).unwrap();
        assert_eq!(
            filter_file(&graph, MAX_TOKENS_DEFAULT),
            FilterOutcome::Reject(RejectReason::NoHoles)
        );

        let mut holed = entry("a", Term::Sort);
        holed.holes.push(ingest::Hole {
            context: vec![],
            goal: views(Term::Sort),
            term: views(Term::Sort),
            premises: vec![],
        });
        let graph = build_file_graph(&file(vec![holed]), &TokenizeConfig::default()).unwrap();
        assert_eq!(filter_file(&graph, MAX_TOKENS_DEFAULT), FilterOutcome::Accept);
        assert_eq!(
            filter_file(&graph, graph.token_count - 1),
            FilterOutcome::Reject(RejectReason::TooLarge {
                tokens: graph.token_count,
                max: graph.token_count - 1,
            })
        );
    }

    #[test]
    fn unsupported_constructs_surface_the_entry_name() {
        let f = file(vec![entry("weird", Term::Adt { variants: vec![] })]);
        match build_file_graph(&f, &TokenizeConfig::default()) {
            Err(GraphError::Tokenize { entry, .. }) => assert_eq!(entry, "weird"),
            other => panic!("expected tokenize error, got {other:?}"),
        }
    }

    #[test]
    fn cache_round_trips() {
        let mut holed = entry("a", Term::Sort);
        holed.holes.push(ingest::Hole {
            context: vec![],
            goal: views(Term::Sort),
            term: views(Term::Sort),
            premises: vec![],
        });
        let graph = build_file_graph(&file(vec![holed]), &TokenizeConfig::default()).unwrap();
        let corpus = cache::CorpusCache {
            max_tokens: MAX_TOKENS_DEFAULT,
            files: vec![cache::CachedFile {
                graph: graph.clone(),
                oversized: false,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        cache::write(&path, &corpus).unwrap();
        let loaded = cache::read(&path).unwrap();
        assert_eq!(loaded.files.len(), 1);
        assert_eq!(loaded.files[0].graph, graph);

        // Idempotent: rewriting produces byte-identical output.
        let bytes1 = std::fs::read(&path).unwrap();
        cache::write(&path, &corpus).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
    }
}
