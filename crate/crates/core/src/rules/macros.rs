use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn macro_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"__[A-Z_]+").expect("static regex"))
}

/// Named word lists (`__CITY`, `__AIRLINE`, ...) that rule patterns refer to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MacroTable(BTreeMap<String, Vec<String>>);

impl MacroTable {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let table = MacroTable(entries);
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let entries: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
        Self::new(entries)
    }

    fn validate(&self) -> Result<()> {
        for (name, words) in &self.0 {
            let full = macro_token()
                .find(name)
                .is_some_and(|m| m.start() == 0 && m.end() == name.len());
            if !full {
                return Err(Error::Macro(format!(
                    "macro name `{name}` must match __[A-Z_]+"
                )));
            }
            if words.is_empty() {
                return Err(Error::Macro(format!("macro `{name}` has an empty word list")));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[String]> {
        self.0.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.0.iter()
    }
}

/// Replaces every `__NAME` in `pattern` by a non-capturing alternation of the
/// macro's words, each escaped so it matches literally.
pub fn expand_macros(pattern: &str, macros: &MacroTable) -> Result<String> {
    let mut out = String::with_capacity(pattern.len());
    let mut last = 0;
    for m in macro_token().find_iter(pattern) {
        // `\__X` would be an escaped underscore, not a macro reference.
        if is_escaped(pattern, m.start()) {
            continue;
        }
        let words = macros
            .get(m.as_str())
            .ok_or_else(|| Error::UndefinedMacro(m.as_str().to_string()))?;
        out.push_str(&pattern[last..m.start()]);
        out.push_str("(?:");
        for (i, word) in words.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            out.push_str(&regex::escape(word));
        }
        out.push(')');
        last = m.end();
    }
    out.push_str(&pattern[last..]);
    Ok(out)
}

fn is_escaped(pattern: &str, at: usize) -> bool {
    pattern[..at]
        .bytes()
        .rev()
        .take_while(|&b| b == b'\\')
        .count()
        % 2
        == 1
}
