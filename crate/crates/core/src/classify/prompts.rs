//! Prompt templates. `{name}` is a placeholder, `{{` and `}}` are literal
//! braces. Every template is checked for unknown placeholders at load time.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: unknown placeholder `{{{name}}}`")]
    Unknown { template: String, name: String },
    #[error("template {template}: unbalanced brace at byte {at}")]
    Unbalanced { template: String, at: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    FewShot { path: String, line: usize, message: String },
}

/// Replaces `{key}` with the matching value.
pub fn render(name: &str, template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|v| v.1.len()).sum::<usize>());
    let b = template.as_bytes();
    let mut i = 0;
    let mut lit = 0;
    while i < b.len() {
        match b[i] {
            b'{' if b.get(i + 1) == Some(&b'{') => {
                out.push_str(&template[lit..i]);
                out.push('{');
                i += 2;
                lit = i;
            }
            b'}' if b.get(i + 1) == Some(&b'}') => {
                out.push_str(&template[lit..i]);
                out.push('}');
                i += 2;
                lit = i;
            }
            b'{' => {
                out.push_str(&template[lit..i]);
                let end = template[i..]
                    .find('}')
                    .map(|e| i + e)
                    .ok_or(TemplateError::Unbalanced { template: name.into(), at: i })?;
                let key = &template[i + 1..end];
                let val = vars
                    .iter()
                    .find(|(k, _)| *k == key)
                    .ok_or_else(|| TemplateError::Unknown { template: name.into(), name: key.into() })?;
                out.push_str(val.1);
                i = end + 1;
                lit = i;
            }
            b'}' => return Err(TemplateError::Unbalanced { template: name.into(), at: i }),
            _ => i += 1,
        }
    }
    out.push_str(&template[lit..]);
    Ok(out)
}

/// One calibration example for the relevance prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub comment: String,
    pub security: String,
    pub categories: Vec<u32>,
    pub signals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub stage1_system: String,
    pub stage1_user: String,
    pub stage2_system: String,
    pub stage2_user: String,
    pub localize_step1_system: String,
    pub localize_step1_user: String,
    pub localize_step2_system: String,
    pub localize_step2_user: String,
    pub instrument_system: String,
    pub instrument_user: String,
    pub cwe_hint: String,
    pub repair: String,
    pub few_shot: Vec<FewShot>,
}

/// File name and the placeholders it may use.
const FILES: [(&str, &[&str]); 12] = [
    ("stage1_system.txt", &["few_shot"]),
    ("stage1_user.txt", &["comment", "categories"]),
    ("stage2_system.txt", &[]),
    ("stage2_user.txt", &["comment", "pack"]),
    ("localize_step1_system.txt", &[]),
    ("localize_step1_user.txt", &["comment", "candidates", "cwe_hint"]),
    ("localize_step2_system.txt", &[]),
    ("localize_step2_user.txt", &["comment", "diffs"]),
    ("instrument_system.txt", &[]),
    ("instrument_user.txt", &["comment", "cwe_hint", "function", "function_name", "file_path"]),
    ("cwe_hint.txt", &["category_title", "category_id", "subcategory_title", "subcategory_id", "rationale"]),
    ("repair.txt", &["error", "previous"]),
];
pub const FEW_SHOT_FILE: &str = "few_shot.jsonl";

macro_rules! bundled_file {
    ($name:literal) => {
        ($name, include_str!(concat!("../../prompts/", $name)))
    };
}

const BUNDLED: [(&str, &str); 13] = [
    bundled_file!("stage1_system.txt"),
    bundled_file!("stage1_user.txt"),
    bundled_file!("stage2_system.txt"),
    bundled_file!("stage2_user.txt"),
    bundled_file!("localize_step1_system.txt"),
    bundled_file!("localize_step1_user.txt"),
    bundled_file!("localize_step2_system.txt"),
    bundled_file!("localize_step2_user.txt"),
    bundled_file!("instrument_system.txt"),
    bundled_file!("instrument_user.txt"),
    bundled_file!("cwe_hint.txt"),
    bundled_file!("repair.txt"),
    bundled_file!("few_shot.jsonl"),
];

impl PromptSet {
    pub fn bundled() -> PromptSet {
        Self::from_lookup(|name| Ok(BUNDLED.iter().find(|b| b.0 == name).expect("bundled file").1.to_string()))
            .expect("bundled prompts are valid")
    }

    pub fn from_dir(dir: &Path) -> Result<PromptSet, TemplateError> {
        Self::from_lookup(|name| {
            let p = dir.join(name);
            std::fs::read_to_string(&p)
                .map_err(|e| TemplateError::Io { path: p.display().to_string(), message: e.to_string() })
        })
    }

    fn from_lookup(read: impl Fn(&str) -> Result<String, TemplateError>) -> Result<PromptSet, TemplateError> {
        let mut texts = Vec::new();
        for (name, keys) in FILES {
            let t = read(name)?;
            let dummy: Vec<(&str, &str)> = keys.iter().map(|k| (*k, "")).collect();
            render(name, &t, &dummy)?;
            texts.push(t);
        }
        let few_text = read(FEW_SHOT_FILE)?;
        let mut few_shot = Vec::new();
        for (i, l) in few_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            few_shot.push(serde_json::from_str(l).map_err(|e| TemplateError::FewShot {
                path: FEW_SHOT_FILE.into(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        let mut it = texts.into_iter();
        let mut next = || it.next().expect("one text per file");
        Ok(PromptSet {
            stage1_system: next(),
            stage1_user: next(),
            stage2_system: next(),
            stage2_user: next(),
            localize_step1_system: next(),
            localize_step1_user: next(),
            localize_step2_system: next(),
            localize_step2_user: next(),
            instrument_system: next(),
            instrument_user: next(),
            cwe_hint: next(),
            repair: next(),
            few_shot,
        })
    }

    pub fn render_few_shot(&self) -> String {
        let mut out = String::new();
        for f in &self.few_shot {
            let _ = writeln!(
                out,
                "Comment: {}\nAnswer: {}",
                f.comment,
                serde_json::json!({"security": f.security, "categories": f.categories, "signals": f.signals})
            );
        }
        out
    }

    pub fn repair_suffix(&self, error: &str, previous: &str) -> String {
        render("repair.txt", &self.repair, &[("error", error), ("previous", previous)]).expect("validated at load")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_and_escapes() {
        let r = render("t", "a {x} {{lit}} b", &[("x", "1")]).unwrap();
        assert_eq!(r, "a 1 {lit} b");
    }

    #[test]
    fn unknown_placeholder() {
        let e = render("t", "{nope}", &[]).unwrap_err();
        assert_eq!(e, TemplateError::Unknown { template: "t".into(), name: "nope".into() });
        assert!(matches!(render("t", "a } b", &[]), Err(TemplateError::Unbalanced { at: 2, .. })));
    }

    #[test]
    fn values_are_not_re_expanded() {
        assert_eq!(render("t", "{a}", &[("a", "{b}")]).unwrap(), "{b}");
    }

    #[test]
    fn bundled_set_has_three_plus_three_examples() {
        let p = PromptSet::bundled();
        let yes = p.few_shot.iter().filter(|f| f.security != "no").count();
        assert_eq!((yes, p.few_shot.len() - yes), (3, 3));
    }
}
