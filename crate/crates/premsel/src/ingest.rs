//! Parsing and validation of extracted module files.
//!
//! One JSON document describes one type-checked module: its scope entries
//! (imported, locally defined, and private) and the holes recorded while the
//! module was being written. Terms follow a single tagged grammar covering
//! the entire internal term language; only the type-level fragment is used
//! downstream, but every construct is decoded and validated here.
//!
//! Unknown JSON fields are ignored for forward compatibility; unknown term
//! tags, missing fields and type mismatches are reported as [`SchemaError`]s
//! carrying a JSON-path diagnostic.

pub mod stats;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("duplicate scope entry name `{0}`")]
    DuplicateName(String),
}

/// A structural violation of the extract schema, located by JSON path.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

fn schema_err<T>(path: &str, message: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError {
        path: path.to_string(),
        message: message.into(),
    })
}

/// Internal term grammar of the extracted dataset.
///
/// The `Literal`, `Sort` and `Level` variants are opaque: the dataset does
/// not decompose their structure, and premise selection has no use for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum Term {
    DeBruijn {
        index: u32,
    },
    ScopeReference {
        name: String,
    },
    Pi {
        name: String,
        domain: Box<Term>,
        codomain: Box<Term>,
    },
    Lambda {
        abstraction: String,
        body: Box<Term>,
    },
    Application {
        head: Box<Term>,
        arguments: Vec<Term>,
    },
    #[serde(rename = "ADT")]
    Adt {
        variants: Vec<Term>,
    },
    Constructor {
        reference: String,
        variant: i64,
    },
    Record {
        context: Vec<Term>,
        fields: Vec<Term>,
    },
    Function {
        clauses: Vec<Clause>,
    },
    Literal,
    Sort,
    Level,
}

/// One pattern-matching clause of a `Function` definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub ctx: Vec<Term>,
    pub patterns: Vec<Term>,
    pub body: Term,
}

/// A term paired with its human-readable rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintedTerm {
    pub pretty: String,
    pub term: Term,
}

/// A term captured at up to four points of its evaluation.
///
/// Only `original` is guaranteed; the other levels are present when the
/// extractor managed to compute them in reasonable time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermViews {
    pub original: PrintedTerm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplified: Option<PrintedTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced: Option<PrintedTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalised: Option<PrintedTerm>,
}

impl TermViews {
    pub fn original_only(pretty: impl Into<String>, term: Term) -> Self {
        TermViews {
            original: PrintedTerm {
                pretty: pretty.into(),
                term,
            },
            simplified: None,
            reduced: None,
            normalised: None,
        }
    }
}

/// Reduction level selector for [`select_reduction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionLevel {
    Original,
    Simplified,
    Reduced,
    Normalised,
}

/// Picks the first present evaluation level in preference order, falling
/// back to `original`, which is always present.
pub fn select_reduction<'a>(views: &'a TermViews, preference: &[ReductionLevel]) -> &'a Term {
    for level in preference {
        let printed = match level {
            ReductionLevel::Original => Some(&views.original),
            ReductionLevel::Simplified => views.simplified.as_ref(),
            ReductionLevel::Reduced => views.reduced.as_ref(),
            ReductionLevel::Normalised => views.normalised.as_ref(),
        };
        if let Some(p) = printed {
            return &p.term;
        }
    }
    &views.original.term
}

/// A named scope entry: its type and the definition inhabiting it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeEntry {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TermViews,
    pub definition: PrintedTerm,
}

/// A typed bound variable of a hole's local context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub name: String,
    pub pretty: String,
    #[serde(rename = "type")]
    pub ty: TermViews,
}

/// An unfinished sub-term: goal type, local context, the term that filled it,
/// and the names of the lemmas used by that term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hole {
    pub context: Vec<ContextItem>,
    pub goal: TermViews,
    pub term: TermViews,
    pub premises: Vec<String>,
}

/// A local or private scope entry together with the holes recorded inside
/// its definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoledEntry {
    #[serde(flatten)]
    pub entry: ScopeEntry,
    pub holes: Vec<Hole>,
}

/// One extracted module: global imports plus local and private definitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    #[serde(rename = "scope-global")]
    pub scope_global: Vec<ScopeEntry>,
    #[serde(rename = "scope-local")]
    pub scope_local: Vec<HoledEntry>,
    #[serde(rename = "scope-private")]
    pub scope_private: Vec<HoledEntry>,
}

/// Decodes one UTF-8 JSON document into a [`SourceFile`].
///
/// Scope order is preserved exactly as it appears in the document.
pub fn parse_file(bytes: &[u8]) -> Result<SourceFile, IngestError> {
    let value: Value = serde_json::from_slice(bytes)?;
    Ok(decode_file(&value)?)
}

fn get<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value, SchemaError> {
    match obj {
        Value::Object(map) => map.get(key).ok_or_else(|| SchemaError {
            path: path.to_string(),
            message: format!("missing field `{key}`"),
        }),
        other => schema_err(path, format!("expected object, got {}", kind_of(other))),
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, SchemaError> {
    v.as_str().ok_or_else(|| SchemaError {
        path: path.to_string(),
        message: format!("expected string, got {}", kind_of(v)),
    })
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a [Value], SchemaError> {
    v.as_array()
        .map(|a| a.as_slice())
        .ok_or_else(|| SchemaError {
            path: path.to_string(),
            message: format!("expected array, got {}", kind_of(v)),
        })
}

fn string_field(obj: &Value, key: &str, path: &str) -> Result<String, SchemaError> {
    let sub = format!("{path}.{key}");
    Ok(as_str(get(obj, key, path)?, &sub)?.to_string())
}

fn decode_term(v: &Value, path: &str) -> Result<Term, SchemaError> {
    let tag_path = format!("{path}.tag");
    let tag = as_str(get(v, "tag", path)?, &tag_path)?;
    match tag {
        "DeBruijn" => {
            let idx_path = format!("{path}.index");
            let idx = get(v, "index", path)?;
            let index = idx.as_u64().ok_or_else(|| SchemaError {
                path: idx_path.clone(),
                message: format!("expected non-negative integer, got {idx}"),
            })?;
            let index = u32::try_from(index).map_err(|_| SchemaError {
                path: idx_path,
                message: format!("de Bruijn index {index} out of range"),
            })?;
            Ok(Term::DeBruijn { index })
        }
        "ScopeReference" => Ok(Term::ScopeReference {
            name: string_field(v, "name", path)?,
        }),
        "Pi" => Ok(Term::Pi {
            name: string_field(v, "name", path)?,
            domain: Box::new(decode_term(
                get(v, "domain", path)?,
                &format!("{path}.domain"),
            )?),
            codomain: Box::new(decode_term(
                get(v, "codomain", path)?,
                &format!("{path}.codomain"),
            )?),
        }),
        "Lambda" => Ok(Term::Lambda {
            abstraction: string_field(v, "abstraction", path)?,
            body: Box::new(decode_term(get(v, "body", path)?, &format!("{path}.body"))?),
        }),
        "Application" => {
            let head = decode_term(get(v, "head", path)?, &format!("{path}.head"))?;
            let args_path = format!("{path}.arguments");
            let args = as_array(get(v, "arguments", path)?, &args_path)?;
            if args.is_empty() {
                return schema_err(&args_path, "application argument list must be non-empty");
            }
            let arguments = args
                .iter()
                .enumerate()
                .map(|(i, a)| decode_term(a, &format!("{args_path}[{i}]")))
                .collect::<Result<_, _>>()?;
            Ok(Term::Application {
                head: Box::new(head),
                arguments,
            })
        }
        "ADT" => Ok(Term::Adt {
            variants: decode_term_list(get(v, "variants", path)?, &format!("{path}.variants"))?,
        }),
        "Constructor" => {
            let var_path = format!("{path}.variant");
            let var = get(v, "variant", path)?;
            let variant = var.as_i64().ok_or_else(|| SchemaError {
                path: var_path,
                message: format!("expected integer, got {var}"),
            })?;
            Ok(Term::Constructor {
                reference: string_field(v, "reference", path)?,
                variant,
            })
        }
        "Record" => Ok(Term::Record {
            context: decode_term_list(get(v, "context", path)?, &format!("{path}.context"))?,
            fields: decode_term_list(get(v, "fields", path)?, &format!("{path}.fields"))?,
        }),
        "Function" => {
            let clauses_path = format!("{path}.clauses");
            let clauses = as_array(get(v, "clauses", path)?, &clauses_path)?
                .iter()
                .enumerate()
                .map(|(i, c)| decode_clause(c, &format!("{clauses_path}[{i}]")))
                .collect::<Result<_, _>>()?;
            Ok(Term::Function { clauses })
        }
        "Literal" => Ok(Term::Literal),
        "Sort" => Ok(Term::Sort),
        "Level" => Ok(Term::Level),
        other => schema_err(&tag_path, format!("unknown term tag `{other}`")),
    }
}

fn decode_term_list(v: &Value, path: &str) -> Result<Vec<Term>, SchemaError> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, t)| decode_term(t, &format!("{path}[{i}]")))
        .collect()
}

fn decode_clause(v: &Value, path: &str) -> Result<Clause, SchemaError> {
    Ok(Clause {
        ctx: decode_term_list(get(v, "ctx", path)?, &format!("{path}.ctx"))?,
        patterns: decode_term_list(get(v, "patterns", path)?, &format!("{path}.patterns"))?,
        body: decode_term(get(v, "body", path)?, &format!("{path}.body"))?,
    })
}

fn decode_printed(v: &Value, path: &str) -> Result<PrintedTerm, SchemaError> {
    Ok(PrintedTerm {
        pretty: string_field(v, "pretty", path)?,
        term: decode_term(get(v, "term", path)?, &format!("{path}.term"))?,
    })
}

fn decode_views(v: &Value, path: &str) -> Result<TermViews, SchemaError> {
    let optional = |key: &str| -> Result<Option<PrintedTerm>, SchemaError> {
        match v.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(p) => Ok(Some(decode_printed(p, &format!("{path}.{key}"))?)),
        }
    };
    Ok(TermViews {
        original: decode_printed(get(v, "original", path)?, &format!("{path}.original"))?,
        simplified: optional("simplified")?,
        reduced: optional("reduced")?,
        normalised: optional("normalised")?,
    })
}

fn decode_entry(v: &Value, path: &str) -> Result<ScopeEntry, SchemaError> {
    Ok(ScopeEntry {
        name: string_field(v, "name", path)?,
        ty: decode_views(get(v, "type", path)?, &format!("{path}.type"))?,
        definition: decode_printed(get(v, "definition", path)?, &format!("{path}.definition"))?,
    })
}

fn decode_hole(v: &Value, path: &str) -> Result<Hole, SchemaError> {
    let ctx_path = format!("{path}.context");
    let context = as_array(get(v, "context", path)?, &ctx_path)?
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let item_path = format!("{ctx_path}[{i}]");
            Ok(ContextItem {
                name: string_field(c, "name", &item_path)?,
                pretty: string_field(c, "pretty", &item_path)?,
                ty: decode_views(get(c, "type", &item_path)?, &format!("{item_path}.type"))?,
            })
        })
        .collect::<Result<_, SchemaError>>()?;
    let premises_path = format!("{path}.premises");
    let premises = as_array(get(v, "premises", path)?, &premises_path)?
        .iter()
        .enumerate()
        .map(|(i, p)| Ok(as_str(p, &format!("{premises_path}[{i}]"))?.to_string()))
        .collect::<Result<_, SchemaError>>()?;
    Ok(Hole {
        context,
        goal: decode_views(get(v, "goal", path)?, &format!("{path}.goal"))?,
        term: decode_views(get(v, "term", path)?, &format!("{path}.term"))?,
        premises,
    })
}

fn decode_file(v: &Value) -> Result<SourceFile, SchemaError> {
    let path = "$";
    let name = string_field(v, "name", path)?;
    let globals_path = "$.scope-global";
    let scope_global = as_array(get(v, "scope-global", path)?, globals_path)?
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let entry_path = format!("{globals_path}[{i}]");
            // Holes only ever attach to local and private entries; a global
            // entry carrying holes is a malformed document, not an extension.
            if e.get("holes").is_some() {
                return schema_err(&entry_path, "global scope entries cannot carry holes");
            }
            decode_entry(e, &entry_path)
        })
        .collect::<Result<_, _>>()?;
    let holed_section = |key: &str| -> Result<Vec<HoledEntry>, SchemaError> {
        let section_path = format!("$.{key}");
        as_array(get(v, key, path)?, &section_path)?
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let entry_path = format!("{section_path}[{i}]");
                let holes_path = format!("{entry_path}.holes");
                let holes = match e.get("holes") {
                    None | Some(Value::Null) => Vec::new(),
                    Some(h) => as_array(h, &holes_path)?
                        .iter()
                        .enumerate()
                        .map(|(j, hole)| decode_hole(hole, &format!("{holes_path}[{j}]")))
                        .collect::<Result<_, _>>()?,
                };
                Ok(HoledEntry {
                    entry: decode_entry(e, &entry_path)?,
                    holes,
                })
            })
            .collect()
    };
    Ok(SourceFile {
        name,
        scope_global,
        scope_local: holed_section("scope-local")?,
        scope_private: holed_section("scope-private")?,
    })
}

/// One entry of the flattened scope, in definition order.
#[derive(Debug, Clone)]
pub struct CollectedEntry<'a> {
    pub name: &'a str,
    pub ty: &'a TermViews,
    pub holes: &'a [Hole],
    /// Which scope section the entry came from.
    pub section: ScopeSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeSection {
    Global,
    Local,
    Private,
}

/// Flattens the three scope sections into one ordered list (global, then
/// local, then private), checking name uniqueness across the whole file.
pub fn collect_scope(file: &SourceFile) -> Result<Vec<CollectedEntry<'_>>, IngestError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in &file.scope_global {
        if !seen.insert(e.name.clone()) {
            return Err(IngestError::DuplicateName(e.name.clone()));
        }
        out.push(CollectedEntry {
            name: &e.name,
            ty: &e.ty,
            holes: &[],
            section: ScopeSection::Global,
        });
    }
    for (section, list) in [
        (ScopeSection::Local, &file.scope_local),
        (ScopeSection::Private, &file.scope_private),
    ] {
        for e in list {
            if !seen.insert(e.entry.name.clone()) {
                return Err(IngestError::DuplicateName(e.entry.name.clone()));
            }
            out.push(CollectedEntry {
                name: &e.entry.name,
                ty: &e.entry.ty,
                holes: &e.holes,
                section,
            });
        }
    }
    Ok(out)
}
