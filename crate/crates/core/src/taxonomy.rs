//! The CWE-699 category tree and per-comment context packs.
//!
//! Data file: tab-separated, `#` comments. Records are
//! `category <id> <child count> <title> <description>`,
//! `sub <id> <parent id> <title> <description>` and one final
//! `manifest <category count> <total node count>`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// The bundled snapshot.
pub const BUNDLED: &str = include_str!("../data/cwe699.tsv");
pub const EXPECTED_CATEGORIES: usize = 40;
pub const MAX_SELECTED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Category,
    Subcategory,
}

impl Level {
    fn as_str(self) -> &'static str {
        match self {
            Level::Category => "category",
            Level::Subcategory => "subcategory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweNode {
    pub cwe_id: u32,
    pub title: String,
    pub description: String,
    pub level: Level,
}

impl CweNode {
    /// `CWE-<id> (<level>): <title> — <first sentence>`
    pub fn render_line(&self) -> String {
        format!(
            "CWE-{} ({}): {} — {}",
            self.cwe_id,
            self.level.as_str(),
            self.title,
            first_sentence(&self.description)
        )
    }
}

fn first_sentence(s: &str) -> &str {
    let b = s.as_bytes();
    for i in 0..b.len() {
        if b[i] == b'.' && (i + 1 == b.len() || b[i + 1] == b' ') {
            return &s[..=i];
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CweTaxonomy {
    /// In data-file order.
    pub categories: Vec<CweNode>,
    pub children: BTreeMap<u32, Vec<CweNode>>,
    parent: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPack {
    pub selected_categories: Vec<u32>,
    pub entries: Vec<CweNode>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unknown category CWE-{0}")]
    UnknownCategory(u32),
    #[error("empty category selection")]
    EmptySelection,
    #[error("too many categories selected ({0}, at most {MAX_SELECTED})")]
    TooMany(usize),
}

pub fn load_taxonomy(path: &Path) -> Result<CweTaxonomy, TaxonomyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TaxonomyError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_taxonomy(&text)
}

pub fn bundled() -> CweTaxonomy {
    parse_taxonomy(BUNDLED).expect("bundled taxonomy is well formed")
}

pub fn parse_taxonomy(text: &str) -> Result<CweTaxonomy, TaxonomyError> {
    let mut categories: Vec<(CweNode, usize, usize)> = Vec::new();
    let mut subs: Vec<(CweNode, u32, usize)> = Vec::new();
    let mut manifest: Option<(usize, usize, usize)> = None;
    let mut ids: BTreeMap<u32, usize> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| TaxonomyError::Format { line, message };
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        if manifest.is_some() {
            return Err(err("record after the manifest line".into()));
        }
        let f: Vec<&str> = raw.split('\t').collect();
        let num = |s: &str, what: &str| s.trim().parse::<u32>().map_err(|_| err(format!("bad {what} `{s}`")));
        match f[0] {
            "category" | "sub" => {
                if f.len() != 5 {
                    return Err(err(format!("expected 5 tab-separated fields, found {}", f.len())));
                }
                let id = num(f[1], "cwe id")?;
                if id == 0 {
                    return Err(err("cwe id must be positive".into()));
                }
                if let Some(prev) = ids.insert(id, line) {
                    return Err(err(format!("duplicate CWE-{id} (first on line {prev})")));
                }
                let level = if f[0] == "category" { Level::Category } else { Level::Subcategory };
                let node = CweNode { cwe_id: id, title: f[3].into(), description: f[4].into(), level };
                if level == Level::Category {
                    categories.push((node, num(f[2], "child count")? as usize, line));
                } else {
                    subs.push((node, num(f[2], "parent id")?, line));
                }
            }
            "manifest" => {
                if f.len() != 3 {
                    return Err(err("manifest needs a category count and a node count".into()));
                }
                manifest = Some((num(f[1], "category count")? as usize, num(f[2], "node count")? as usize, line));
            }
            other => return Err(err(format!("unknown record type `{other}`"))),
        }
    }

    let eof = text.lines().count().max(1);
    let (n_cat, n_nodes, mline) =
        manifest.ok_or(TaxonomyError::Format { line: eof, message: "missing manifest line".into() })?;

    let cat_ids: BTreeSet<u32> = categories.iter().map(|c| c.0.cwe_id).collect();
    let mut children: BTreeMap<u32, Vec<CweNode>> = cat_ids.iter().map(|&id| (id, Vec::new())).collect();
    let mut parent = BTreeMap::new();
    for (node, p, line) in subs {
        let Some(list) = children.get_mut(&p) else {
            return Err(TaxonomyError::Format {
                line,
                message: format!("orphan subcategory CWE-{}: parent CWE-{p} is not a category", node.cwe_id),
            });
        };
        parent.insert(node.cwe_id, p);
        list.push(node);
    }
    for (c, declared, line) in &categories {
        let actual = children[&c.cwe_id].len();
        if actual != *declared {
            return Err(TaxonomyError::Format {
                line: *line,
                message: format!("CWE-{} declares {declared} children, file has {actual}", c.cwe_id),
            });
        }
    }
    let total = categories.len() + parent.len();
    if categories.len() != n_cat || total != n_nodes {
        return Err(TaxonomyError::Format {
            line: mline,
            message: format!(
                "manifest says {n_cat} categories / {n_nodes} nodes, file has {} / {total}",
                categories.len()
            ),
        });
    }
    Ok(CweTaxonomy { categories: categories.into_iter().map(|c| c.0).collect(), children, parent })
}

impl CweTaxonomy {
    pub fn category(&self, id: u32) -> Option<&CweNode> {
        self.categories.iter().find(|c| c.cwe_id == id)
    }

    pub fn node(&self, id: u32) -> Option<&CweNode> {
        self.category(id).or_else(|| {
            let p = self.parent.get(&id)?;
            self.children[p].iter().find(|n| n.cwe_id == id)
        })
    }

    /// Category a subcategory belongs to; a category is its own ancestor.
    pub fn category_of(&self, id: u32) -> Option<u32> {
        if self.category(id).is_some() {
            return Some(id);
        }
        self.parent.get(&id).copied()
    }

    pub fn node_count(&self) -> usize {
        self.categories.len() + self.parent.len()
    }

    /// Every node, category followed by its subcategories.
    pub fn render_full(&self) -> String {
        let mut out = String::new();
        for c in &self.categories {
            render_subtree(&mut out, c, &self.children[&c.cwe_id]);
        }
        out
    }

    /// `CWE-<id>: <title>` per category, for the relevance prompt.
    pub fn render_category_list(&self) -> String {
        let mut out = String::new();
        for c in &self.categories {
            let _ = writeln!(out, "CWE-{}: {}", c.cwe_id, c.title);
        }
        out
    }

    pub fn build_context_pack(&self, category_ids: &[u32]) -> Result<ContextPack, TaxonomyError> {
        if category_ids.is_empty() {
            return Err(TaxonomyError::EmptySelection);
        }
        let mut selected: Vec<u32> = Vec::new();
        for &id in category_ids {
            if self.category(id).is_none() {
                return Err(TaxonomyError::UnknownCategory(id));
            }
            if !selected.contains(&id) {
                selected.push(id);
            }
        }
        if selected.len() > MAX_SELECTED {
            return Err(TaxonomyError::TooMany(selected.len()));
        }
        // Data-file order keeps the rendering independent of selection order.
        selected.sort_by_key(|id| self.categories.iter().position(|c| c.cwe_id == *id));
        let mut entries = Vec::new();
        for &id in &selected {
            entries.push(self.category(id).expect("checked above").clone());
            entries.extend(self.children[&id].iter().cloned());
        }
        Ok(ContextPack { selected_categories: selected, entries })
    }
}

fn render_subtree(out: &mut String, cat: &CweNode, kids: &[CweNode]) {
    out.push_str(&cat.render_line());
    out.push('\n');
    for k in kids {
        out.push_str(&k.render_line());
        out.push('\n');
    }
}

impl ContextPack {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.render_line());
            out.push('\n');
        }
        out
    }

    pub fn contains(&self, cwe_id: u32) -> bool {
        self.entries.iter().any(|e| e.cwe_id == cwe_id)
    }

    pub fn subcategory(&self, cwe_id: u32) -> Option<&CweNode> {
        self.entries.iter().find(|e| e.cwe_id == cwe_id && e.level == Level::Subcategory)
    }
}
