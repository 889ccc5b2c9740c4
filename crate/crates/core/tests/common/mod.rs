//! Generators shared by the acceptance and invariant suites.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Mutex;

use eyeq_core::classify::{ClientError, ModelClient, PromptSet};
use eyeq_core::instrument::{AnnotationPlan, AnnotationSite};
use eyeq_core::localize::{self, diff, extract_functions, ChangedFunction, FunctionRef};
use eyeq_core::runtime::Macro;

/// A C file of `n` functions whose statement lines are all distinct.
pub fn c_file(rng: &mut impl Rng, n: usize) -> String {
    let mut s = String::from("#include <stdint.h>\n\n");
    for f in 0..n {
        let indent = if rng.gen_bool(0.3) { "\t" } else { "    " };
        s.push_str(&format!("static int f{f}(int x)\n{{\n"));
        let k = rng.gen_range(2..7);
        s.push_str(&format!("{indent}int v{f}_0 = x + {};\n", rng.gen_range(0..100)));
        for i in 1..k {
            match rng.gen_range(0..3) {
                0 => s.push_str(&format!("{indent}int v{f}_{i} = v{f}_{} * {};\n", i - 1, rng.gen_range(1..9))),
                1 => s.push_str(&format!(
                    "{indent}int v{f}_{i} = v{f}_{};\n{indent}if (v{f}_{i} > {}) {{\n{indent}{indent}v{f}_{i} -= {};\n{indent}}}\n",
                    i - 1,
                    rng.gen_range(10..99),
                    rng.gen_range(1..9)
                )),
                _ => s.push_str(&format!("{indent}int v{f}_{i} = v{f}_{} ^ {}; /* mix */\n", i - 1, rng.gen_range(1..255))),
            }
        }
        s.push_str(&format!("{indent}return v{f}_{};\n}}\n\n", k - 1));
    }
    s
}

/// Sites anchored after random declaration lines, each reporting the
/// variable declared there.
pub fn random_sites(rng: &mut impl Rng, path: &str, src: &str, max: usize) -> Vec<AnnotationSite> {
    let funcs = extract_functions(src).expect("generated source is balanced");
    let mut options = Vec::new();
    for f in &funcs {
        let body = &src[f.body_start..f.end];
        let lines: Vec<&str> = body.lines().map(str::trim).filter(|l| l.starts_with("int v")).collect();
        for l in lines {
            let var = l.trim_start_matches("int ").split(' ').next().unwrap().to_string();
            options.push((f.clone(), l.to_string(), var));
        }
    }
    options.shuffle(rng);
    let kinds = [Macro::Set, Macro::Max, Macro::Bits, Macro::Inc];
    let mut out = Vec::new();
    for (f, line, var) in options.into_iter().take(max) {
        let kind = *kinds.choose(rng).unwrap();
        let plan = AnnotationPlan {
            macro_kind: kind,
            snippet: format!("{}({var});", kind.c_macro()),
            insertion_description: String::new(),
            pre_anchor: line,
            post_anchor: "return".into(),
            rationale: String::new(),
        };
        if let Ok(site) = eyeq_core::instrument::resolve_anchor(src, path, &f, &plan) {
            out.push(site);
        }
    }
    out
}

/// A generated pull request: post-image, its changed functions and the
/// full candidate list.
pub struct LocalizationFixture {
    pub changed: Vec<ChangedFunction>,
    pub candidates: Vec<FunctionRef>,
}

pub fn localization_fixture(rng: &mut impl Rng) -> LocalizationFixture {
    let path = "src/gen.c";
    let n = rng.gen_range(2..7);
    let pre = c_file(rng, n);
    let mut lines: Vec<String> = pre.lines().map(String::from).collect();
    let edits = rng.gen_range(1..4);
    for _ in 0..edits {
        let decls: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].trim_start().starts_with("int v")).collect();
        let i = *decls.choose(rng).unwrap();
        if rng.gen_bool(0.5) {
            lines[i] = lines[i].replacen(';', &format!(" + {};", rng.gen_range(1..50)), 1);
        } else {
            let indent: String = lines[i].chars().take_while(|c| c.is_whitespace()).collect();
            lines.insert(i + 1, format!("{indent}(void)x; /* edit {} */", rng.gen_range(0..1000)));
        }
    }
    let post = lines.join("\n") + "\n";
    let text = similar::TextDiff::from_lines(&pre, &post).unified_diff().header(&format!("a/{path}"), &format!("b/{path}")).to_string();
    let patches = diff::parse(&text).expect("generated diff parses");
    let changed = localize::extract_changed_functions(path, &pre, &post, &patches[0]).unwrap().unwrap();
    let candidates = changed.iter().map(|c| c.reference()).collect();
    LocalizationFixture { changed, candidates }
}

/// A model that answers localization prompts at random: real and invented
/// function names, grounded and invented citations, and some malformed
/// replies.
pub struct ScriptedModel {
    rng: Mutex<ChaCha8Rng>,
    step1_system: String,
    names: Vec<String>,
    lines: Vec<String>,
}

impl ScriptedModel {
    pub fn new(seed: u64, prompts: &PromptSet, fx: &LocalizationFixture) -> Self {
        let mut names: Vec<String> = fx.candidates.iter().map(|c| c.function.clone()).collect();
        names.extend(["f99".to_string(), "main".into(), "helper_not_changed".into()]);
        let lines = fx
            .changed
            .iter()
            .flat_map(|c| c.hunks.iter())
            .flat_map(|h| h.lines().filter(|l| !l.starts_with("@@")).map(|l| l.get(1..).unwrap_or("").trim().to_string()))
            .filter(|l| !l.is_empty())
            .collect();
        Self { rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)), step1_system: prompts.localize_step1_system.clone(), names, lines }
    }
}

impl ModelClient for ScriptedModel {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, system: &str, _user: &str, _max_tokens: u32) -> Result<String, ClientError> {
        let mut rng = self.rng.lock().unwrap();
        if rng.gen_bool(0.1) {
            return Ok("I think the second one, probably.".into());
        }
        let k = rng.gen_range(0..4);
        let mut picks = Vec::new();
        for _ in 0..k {
            let name = self.names.choose(&mut *rng).unwrap().clone();
            let mut cited = Vec::new();
            for _ in 0..rng.gen_range(0..3) {
                if rng.gen_bool(0.7) && !self.lines.is_empty() {
                    cited.push(self.lines.choose(&mut *rng).unwrap().clone());
                } else {
                    cited.push(format!("int invented_{} = 0;", rng.gen_range(0..100)));
                }
            }
            picks.push(serde_json::json!({
                "file_path": if rng.gen_bool(0.8) { "src/gen.c" } else { "" },
                "function": name,
                "justification": "scripted",
                "cited_lines": cited,
            }));
        }
        let confidence = ["HIGH", "MEDIUM", "LOW"][rng.gen_range(0..3)];
        let key = if system == self.step1_system { "ranked" } else { "selected" };
        Ok(serde_json::json!({ "concern": "scripted concern", key: picks, "confidence": confidence }).to_string())
    }
}

/// Candidate closure and evidence grounding for one localization.
pub fn check_localization(fx: &LocalizationFixture, rec: &localize::LocalizationRecord) -> Result<(), String> {
    rec.result.check(&fx.candidates)?;
    if let Some(s1) = &rec.step1 {
        s1.check(&fx.candidates)?;
    }
    for r in &rec.result.ranked {
        let c = fx.changed.iter().find(|c| c.reference() == r.reference()).ok_or("ranked function is not a candidate")?;
        if r.cited_lines.is_empty() {
            return Err(format!("{} is ranked without evidence", r.function));
        }
        for l in &r.cited_lines {
            if !c.hunks.iter().any(|h| h.contains(l.as_str())) {
                return Err(format!("{}: cited `{l}` is not in its hunks", r.function));
            }
        }
    }
    Ok(())
}

/// Runs both localization steps on fixture `i` with the scripted model.
pub fn localize_fixture(i: u64, prompts: &PromptSet) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10ca1 + i);
    let fx = localization_fixture(&mut rng);
    let model = ScriptedModel::new(i, prompts, &fx);
    let rec = localize::localize_comment("c", "1", "scripted comment", None, None, &fx.changed, vec![], &model, prompts, 500)
        .map_err(|e| e.to_string())?;
    check_localization(&fx, &rec)
}
