use serde::{Deserialize, Serialize};

use super::CodeSystem;

/// Uppercases and strips dots and whitespace: `"c78.1"` becomes `"C781"`.
pub fn normalize_code(code: &str) -> String {
    code.chars()
        .filter(|c| *c != '.' && !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

/// Code-family prefixes that mark secondary (metastatic) malignancy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdPrefixes {
    pub icd9: Vec<String>,
    pub icd10: Vec<String>,
}

impl Default for IcdPrefixes {
    fn default() -> Self {
        Self {
            icd9: vec!["197".into(), "198".into(), "199".into()],
            icd10: vec!["C78".into(), "C79".into(), "C80".into()],
        }
    }
}

impl IcdPrefixes {
    /// `code` must already be normalized.
    pub fn matches(&self, system: CodeSystem, code: &str) -> bool {
        let prefixes = match system {
            CodeSystem::Icd9 => &self.icd9,
            CodeSystem::Icd10 => &self.icd10,
        };
        prefixes
            .iter()
            .any(|p| code.starts_with(&normalize_code(p)))
    }
}

/// Checks a normalized code against the default metastasis prefixes.
pub fn is_metastasis_code(system: CodeSystem, normalized_code: &str) -> bool {
    IcdPrefixes::default().matches(system, normalized_code)
}
