//! Corpus statistics over parsed files: per-file entry counts, tokenized
//! AST lengths, and per-lemma occurrence counts.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{self, SourceFile};
use crate::token;

/// Sparse histogram emitted as (log-transformed bin, count) pairs.
///
/// Each distinct value becomes one bin keyed by `ln(value + offset)`; the
/// offset is 1 for count-like quantities that can be zero.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramBin {
    pub value: u64,
    pub log_bin: f64,
    pub count: u64,
}

impl Histogram {
    fn from_values(values: impl IntoIterator<Item = u64>, offset: u64) -> Self {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for v in values {
            *counts.entry(v).or_default() += 1;
        }
        Histogram {
            bins: counts
                .into_iter()
                .map(|(value, count)| HistogramBin {
                    value,
                    log_bin: ((value + offset) as f64).ln(),
                    count,
                })
                .collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileStats {
    pub name: String,
    pub imports: u64,
    pub definitions: u64,
    pub holes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Occurrence {
    /// Times the name appears as a global import across files.
    pub imports: u64,
    /// Holes whose premise set contains the name, at most one per hole.
    pub premise_uses: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub files: Vec<FileStats>,
    /// Counts of imports per file; bins are ln(1 + n).
    pub import_counts: Histogram,
    /// Counts of definitions per file; bins are ln(1 + n).
    pub definition_counts: Histogram,
    /// Counts of holes per file; bins are ln(1 + n).
    pub hole_counts: Histogram,
    /// Token lengths of tokenized lemma types; bins are ln(n).
    pub entry_token_lengths: Histogram,
    /// Token lengths of context-merged, tokenized hole types; bins are ln(n).
    pub hole_token_lengths: Histogram,
    pub lemma_occurrences: BTreeMap<String, Occurrence>,
    /// Histogram over occurrence-as-import counts; bins are ln(1 + n).
    pub import_occurrence_hist: Histogram,
    /// Histogram over premise-use counts; bins are ln(1 + n).
    pub premise_occurrence_hist: Histogram,
}

/// Computes corpus statistics.
///
/// Types that cannot be tokenized (inline declarations) are skipped from
/// the length histograms; such files are rejected downstream anyway.
pub fn dataset_stats<'a>(files: impl IntoIterator<Item = &'a SourceFile>) -> StatsReport {
    let mut file_stats = Vec::new();
    let mut import_counts = Vec::new();
    let mut definition_counts = Vec::new();
    let mut hole_counts = Vec::new();
    let mut entry_lengths = Vec::new();
    let mut hole_lengths = Vec::new();
    let mut occurrences: BTreeMap<String, Occurrence> = BTreeMap::new();
    let pref = [ingest::ReductionLevel::Original];

    for file in files {
        let imports = file.scope_global.len() as u64;
        let definitions = (file.scope_local.len() + file.scope_private.len()) as u64;
        let holes: u64 = file
            .scope_local
            .iter()
            .chain(&file.scope_private)
            .map(|e| e.holes.len() as u64)
            .sum();
        file_stats.push(FileStats {
            name: file.name.clone(),
            imports,
            definitions,
            holes,
        });
        import_counts.push(imports);
        definition_counts.push(definitions);
        hole_counts.push(holes);

        for e in &file.scope_global {
            occurrences.entry(e.name.clone()).or_default().imports += 1;
            if let Ok(tree) = token::binarize(ingest::select_reduction(&e.ty, &pref)) {
                entry_lengths.push(tree.len() as u64);
            }
        }
        for e in file.scope_local.iter().chain(&file.scope_private) {
            occurrences.entry(e.entry.name.clone()).or_default();
            if let Ok(tree) = token::binarize(ingest::select_reduction(&e.entry.ty, &pref)) {
                entry_lengths.push(tree.len() as u64);
            }
            for hole in &e.holes {
                let bindings: Vec<(String, ingest::Term)> = hole
                    .context
                    .iter()
                    .map(|c| (c.name.clone(), ingest::select_reduction(&c.ty, &pref).clone()))
                    .collect();
                let folded = token::fold_context(
                    &bindings,
                    ingest::select_reduction(&hole.goal, &pref).clone(),
                );
                if let Ok(tree) = token::binarize(&folded) {
                    hole_lengths.push(tree.len() as u64);
                }
                // One increment per hole, however often the lemma is used.
                let unique: HashSet<&str> = hole.premises.iter().map(|s| s.as_str()).collect();
                for name in unique {
                    occurrences.entry(name.to_string()).or_default().premise_uses += 1;
                }
            }
        }
    }

    let import_occurrence_hist =
        Histogram::from_values(occurrences.values().map(|o| o.imports), 1);
    let premise_occurrence_hist =
        Histogram::from_values(occurrences.values().map(|o| o.premise_uses), 1);

    StatsReport {
        files: file_stats,
        import_counts: Histogram::from_values(import_counts, 1),
        definition_counts: Histogram::from_values(definition_counts, 1),
        hole_counts: Histogram::from_values(hole_counts, 1),
        entry_token_lengths: Histogram::from_values(entry_lengths, 0),
        hole_token_lengths: Histogram::from_values(hole_lengths, 0),
        lemma_occurrences: occurrences,
        import_occurrence_hist,
        premise_occurrence_hist,
    }
}

/// Serializes the report as newline-delimited structured records.
pub fn write_report(report: &StatsReport, mut out: impl std::io::Write) -> std::io::Result<()> {
    #[derive(Serialize)]
    #[serde(tag = "kind", rename_all = "kebab-case")]
    enum Record<'a> {
        File(&'a FileStats),
        Bin {
            histogram: &'a str,
            value: u64,
            log_bin: f64,
            count: u64,
        },
        Lemma {
            name: &'a str,
            imports: u64,
            premise_uses: u64,
        },
    }
    let mut emit = |r: &Record| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")
    };
    for f in &report.files {
        emit(&Record::File(f))?;
    }
    for (name, hist) in [
        ("imports-per-file", &report.import_counts),
        ("definitions-per-file", &report.definition_counts),
        ("holes-per-file", &report.hole_counts),
        ("entry-token-lengths", &report.entry_token_lengths),
        ("hole-token-lengths", &report.hole_token_lengths),
        ("lemma-import-occurrences", &report.import_occurrence_hist),
        ("lemma-premise-occurrences", &report.premise_occurrence_hist),
    ] {
        for bin in &hist.bins {
            emit(&Record::Bin {
                histogram: name,
                value: bin.value,
                log_bin: bin.log_bin,
                count: bin.count,
            })?;
        }
    }
    for (name, occ) in &report.lemma_occurrences {
        emit(&Record::Lemma {
            name,
            imports: occ.imports,
            premise_uses: occ.premise_uses,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Hole, HoledEntry, PrintedTerm, ScopeEntry, Term, TermViews};

    fn entry_with_holes(name: &str, holes: Vec<Hole>) -> HoledEntry {
        HoledEntry {
            entry: ScopeEntry {
                name: name.into(),
                ty: TermViews::original_only("", Term::Sort),
                definition: PrintedTerm {
                    pretty: String::new(),
                    term: Term::Sort,
                },
            },
            holes,
        }
    }

    fn hole(premises: Vec<&str>) -> Hole {
        Hole {
            context: vec![],
            goal: TermViews::original_only("", Term::Sort),
            term: TermViews::original_only("", Term::Sort),
            premises: premises.into_iter().map(String::from).collect(),
        }
    }

    #[test]
    fn counts_entries_and_holes() {
        let file = SourceFile {
            name: "S".into(),
            scope_global: vec![],
            scope_local: (0..6)
                .map(|i| entry_with_holes(&format!("e{i}"), vec![hole(vec![])]))
                .collect(),
            scope_private: vec![],
        };
        let report = dataset_stats([&file]);
        assert_eq!(report.files[0].definitions, 6);
        assert_eq!(report.files[0].holes, 6);
    }

    #[test]
    fn premise_use_counts_once_per_hole() {
        let file = SourceFile {
            name: "S".into(),
            scope_global: vec![],
            scope_local: vec![
                entry_with_holes("lemma", vec![]),
                entry_with_holes("user", vec![hole(vec!["lemma", "lemma"])]),
            ],
            scope_private: vec![],
        };
        let report = dataset_stats([&file]);
        assert_eq!(report.lemma_occurrences["lemma"].premise_uses, 1);
    }

    #[test]
    fn hole_free_corpus_has_zero_occurrences() {
        let file = SourceFile {
            name: "S".into(),
            scope_global: vec![],
            scope_local: vec![entry_with_holes("a", vec![]), entry_with_holes("b", vec![])],
            scope_private: vec![],
        };
        let report = dataset_stats([&file]);
        assert!(report
            .lemma_occurrences
            .values()
            .all(|o| o.premise_uses == 0 && o.imports == 0));
    }

    #[test]
    fn log_bins_are_offset_for_counts() {
        let file = SourceFile {
            name: "S".into(),
            scope_global: vec![],
            scope_local: vec![entry_with_holes("a", vec![])],
            scope_private: vec![],
        };
        let report = dataset_stats([&file]);
        // 0 holes → bin at ln(1) = 0 with count 1.
        assert_eq!(report.hole_counts.bins[0].value, 0);
        assert_eq!(report.hole_counts.bins[0].log_bin, 0.0);
        assert_eq!(report.hole_counts.bins[0].count, 1);
        // A Sort type tokenizes to two nodes → length bin at ln(2).
        assert_eq!(report.entry_token_lengths.bins[0].value, 2);
        assert!((report.entry_token_lengths.bins[0].log_bin - 2f64.ln()).abs() < 1e-12);
    }
}
