use std::path::Path;

use crate::error::{Error, Result};
use crate::model::CvssVersion;

/// The text templates prompts are rendered from.
///
/// Lines at the top of a template file starting with `#:` are header
/// comments and are dropped on load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub system_cwe: String,
    pub system_severity: String,
    pub input_description: String,
    pub input_files: String,
    pub input_methods: String,
    pub input_hunks: String,
    pub user_description: String,
    pub user_code: String,
    pub cvss_v2_0: String,
    pub cvss_v3_0: String,
    pub cvss_v3_1: String,
}

macro_rules! builtin {
    ($name:literal) => {
        strip_header(include_str!(concat!("../../templates/", $name, ".txt")))
    };
}

fn strip_header(text: &str) -> String {
    let mut rest = text;
    while rest.starts_with("#:") {
        rest = rest.split_once('\n').map_or("", |(_, r)| r);
    }
    rest.to_string()
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Templates {
            system_cwe: builtin!("system_cwe"),
            system_severity: builtin!("system_severity"),
            input_description: builtin!("input_description"),
            input_files: builtin!("input_files"),
            input_methods: builtin!("input_methods"),
            input_hunks: builtin!("input_hunks"),
            user_description: builtin!("user_description"),
            user_code: builtin!("user_code"),
            cvss_v2_0: builtin!("cvss_v2_0"),
            cvss_v3_0: builtin!("cvss_v3_0"),
            cvss_v3_1: builtin!("cvss_v3_1"),
        }
    }

    fn slots(&mut self) -> [(&'static str, &mut String); 11] {
        [
            ("system_cwe", &mut self.system_cwe),
            ("system_severity", &mut self.system_severity),
            ("input_description", &mut self.input_description),
            ("input_files", &mut self.input_files),
            ("input_methods", &mut self.input_methods),
            ("input_hunks", &mut self.input_hunks),
            ("user_description", &mut self.user_description),
            ("user_code", &mut self.user_code),
            ("cvss_v2_0", &mut self.cvss_v2_0),
            ("cvss_v3_0", &mut self.cvss_v3_0),
            ("cvss_v3_1", &mut self.cvss_v3_1),
        ]
    }

    /// Built-in templates with any `<name>.txt` found in `dir` replacing the
    /// template of that name.
    pub fn with_overrides(mut self, dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        for (name, slot) in self.slots() {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                *slot = strip_header(&text);
            }
        }
        Ok(self)
    }

    pub fn guide(&self, version: CvssVersion) -> &str {
        match version {
            CvssVersion::V2_0 => &self.cvss_v2_0,
            CvssVersion::V3_0 => &self.cvss_v3_0,
            CvssVersion::V3_1 => &self.cvss_v3_1,
        }
    }
}
