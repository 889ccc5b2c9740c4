//! Built-in benchmark targets with planted bugs.

pub mod magic;
pub mod maze;
pub mod stack_size;
pub mod state_machine;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::fuzzer::{CrashKind, Exec, Harness, Outcome};
use crate::runtime::Macro;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    StackSize,
    Maze,
    Magic,
    StateMachine,
}

/// Which mode is expected to find the planted bug first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    AnnotationWins,
    BothFind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub site_id: String,
    pub kind: Macro,
    pub file_path: String,
    pub function: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub description: String,
    pub bug_condition: String,
    pub crash_kind: CrashKind,
    pub sites: Vec<SiteSpec>,
    pub expectation: Expectation,
    /// Source file and function this target stands in for, if any.
    pub analog_of: Option<(String, String)>,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::StackSize, Target::Maze, Target::Magic, Target::StateMachine];

    pub fn name(self) -> &'static str {
        match self {
            Target::StackSize => "stack_size",
            Target::Maze => "maze",
            Target::Magic => "magic",
            Target::StateMachine => "state_machine",
        }
    }

    pub fn spec(self) -> TargetSpec {
        let site = |kind: Macro, file: &str, function: &str, snippet: &str, id: u64| SiteSpec {
            site_id: format!("{id:016x}"),
            kind,
            file_path: file.into(),
            function: function.into(),
            snippet: snippet.into(),
        };
        match self {
            Target::StackSize => TargetSpec {
                name: self.name().into(),
                description: "script interpreter with a fiber stack-size INI setting".into(),
                bug_condition: format!(
                    "a fiber is started while the committed stack size is in 1..{}",
                    stack_size::CRASH_BELOW
                ),
                crash_kind: CrashKind::StackOverflow,
                sites: vec![site(
                    Macro::Set,
                    stack_size::ANALOG_FILE,
                    stack_size::ANALOG_FUNCTION,
                    stack_size::SET_SNIPPET,
                    stack_size::set_site(),
                )],
                expectation: Expectation::AnnotationWins,
                analog_of: Some((stack_size::ANALOG_FILE.into(), stack_size::ANALOG_FUNCTION.into())),
            },
            Target::Maze => TargetSpec {
                name: self.name().into(),
                description: format!("{}x{} maze driven by U/D/L/R bytes", maze::WIDTH, maze::HEIGHT),
                bug_condition: "the walker reaches the exit cell".into(),
                crash_kind: CrashKind::Assert,
                sites: vec![site(
                    Macro::Max,
                    maze::SITE_FILE,
                    maze::SITE_FUNCTION,
                    maze::MAX_SNIPPET,
                    maze::progress_site(),
                )],
                expectation: Expectation::AnnotationWins,
                analog_of: None,
            },
            Target::Magic => TargetSpec {
                name: self.name().into(),
                description: "four-byte magic header check".into(),
                bug_condition: "input starts with 7f 45 4c 46".into(),
                crash_kind: CrashKind::Abort,
                sites: vec![],
                expectation: Expectation::BothFind,
                analog_of: None,
            },
            Target::StateMachine => TargetSpec {
                name: self.name().into(),
                description: "table-driven six-step command protocol".into(),
                bug_condition: format!(
                    "the command sequence {} is received in order",
                    String::from_utf8_lossy(&state_machine::SEQUENCE)
                ),
                crash_kind: CrashKind::Segv,
                sites: vec![site(
                    Macro::State,
                    state_machine::SITE_FILE,
                    state_machine::SITE_FUNCTION,
                    state_machine::STATE_SNIPPET,
                    state_machine::proto_site(),
                )],
                expectation: Expectation::AnnotationWins,
                analog_of: Some((state_machine::ANALOG_FILE.into(), state_machine::ANALOG_FUNCTION.into())),
            },
        }
    }

    /// Built-in seed inputs, named.
    pub fn default_seeds(self) -> Vec<(&'static str, Vec<u8>)> {
        match self {
            Target::StackSize => stack_size::SEEDS
                .iter()
                .map(|(n, s)| (*n, s.as_bytes().to_vec()))
                .collect(),
            Target::Maze => vec![("empty_walk", b"R".to_vec())],
            Target::Magic => vec![("header", b"\0\0\0\0\0\0\0\0".to_vec())],
            Target::StateMachine => vec![("noop", b"xxxx".to_vec())],
        }
    }

    pub fn from_analog(file_path: &str, function: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| {
            t.spec()
                .analog_of
                .is_some_and(|(f, func)| f == file_path && func == function)
        })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown target `{s}` (expected stack_size, maze, magic or state_machine)"))
    }
}

impl Harness for Target {
    fn name(&self) -> &'static str {
        Target::name(*self)
    }

    fn execute(&self, input: &[u8], x: &mut Exec<'_>) -> Outcome {
        match self {
            Target::StackSize => stack_size::run(input, x),
            Target::Maze => maze::run(input, x),
            Target::Magic => magic::run(input, x),
            Target::StateMachine => state_machine::run(input, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::FeedbackState;

    #[test]
    fn names_round_trip() {
        for t in Target::ALL {
            assert_eq!(t.name().parse::<Target>().unwrap(), t);
        }
    }

    #[test]
    fn seeds_do_not_crash() {
        for t in Target::ALL {
            for (name, s) in t.default_seeds() {
                let mut fb = FeedbackState::new();
                let mut x = Exec::new(&mut fb, true);
                assert!(!t.execute(&s, &mut x).is_crash(), "{t}/{name}");
            }
        }
    }

    #[test]
    fn targets_are_pure() {
        for t in Target::ALL {
            for (_, s) in t.default_seeds() {
                let run = || {
                    let mut fb = FeedbackState::new();
                    let out = {
                        let mut x = Exec::new(&mut fb, true);
                        t.execute(&s, &mut x)
                    };
                    (out, fb)
                };
                let (o1, f1) = run();
                let (o2, f2) = run();
                assert_eq!(o1, o2);
                assert_eq!(f1, f2);
            }
        }
    }

    #[test]
    fn analog_lookup() {
        assert_eq!(Target::from_analog("Zend/zend.c", "OnUpdateFiberStackSize"), Some(Target::StackSize));
        assert_eq!(Target::from_analog("Zend/zend.c", "other"), None);
    }
}
