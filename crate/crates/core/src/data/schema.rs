use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NormKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Sensitive,
    Target,
    QueryId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_norm")]
    pub normalization: NormKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

fn default_norm() -> NormKind {
    NormKind::None
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind, normalization: NormKind) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            normalization,
            categories: None,
        }
    }

    pub fn with_categories(mut self, cats: &[&str]) -> Self {
        self.categories = Some(cats.iter().map(|c| c.to_string()).collect());
        self
    }
}

/// Column layout of a tabular dataset, read from a JSON document of the
/// form `{"columns": [{"name", "kind", "normalization", "categories"?}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
}

impl DatasetSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = DatasetSchema { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |k: ColumnKind| self.columns.iter().filter(|c| c.kind == k).count();
        if count(ColumnKind::Sensitive) != 1 {
            return Err(Error::Config(format!(
                "schema needs exactly one sensitive column, found {}",
                count(ColumnKind::Sensitive)
            )));
        }
        if count(ColumnKind::Target) != 1 {
            return Err(Error::Config(format!(
                "schema needs exactly one target column, found {}",
                count(ColumnKind::Target)
            )));
        }
        if count(ColumnKind::QueryId) > 1 {
            return Err(Error::Config("schema has more than one query-id column".into()));
        }
        for c in &self.columns {
            if c.kind == ColumnKind::Categorical {
                match &c.categories {
                    Some(cats) if !cats.is_empty() => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "categorical column `{}` needs an explicit category list",
                            c.name
                        )))
                    }
                }
            }
        }
        let mut names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate column `{}`", w[0])));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn of_kind(&self, kind: ColumnKind) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(move |c| c.kind == kind)
    }

    pub fn sensitive(&self) -> &ColumnSpec {
        self.of_kind(ColumnKind::Sensitive).next().expect("validated")
    }

    pub fn target(&self) -> &ColumnSpec {
        self.of_kind(ColumnKind::Target).next().expect("validated")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_json_document() {
        let text = r#"{"columns": [
            {"name": "age", "kind": "continuous", "normalization": "standard"},
            {"name": "race", "kind": "sensitive", "categories": ["white", "black"]},
            {"name": "qid", "kind": "query-id"},
            {"name": "hired", "kind": "target"}
        ]}"#;
        let s: DatasetSchema = serde_json::from_str(text).unwrap();
        s.validate().unwrap();
        assert_eq!(s.sensitive().name, "race");
        assert_eq!(s.column("qid").unwrap().kind, ColumnKind::QueryId);
        assert_eq!(s.column("hired").unwrap().normalization, NormKind::None);
    }

    #[test]
    fn rejects_two_targets_and_bare_categoricals() {
        let two_targets = DatasetSchema::new(vec![
            ColumnSpec::new("a", ColumnKind::Target, NormKind::None),
            ColumnSpec::new("b", ColumnKind::Target, NormKind::None),
            ColumnSpec::new("s", ColumnKind::Sensitive, NormKind::None),
        ]);
        assert!(two_targets.is_err());
        let bare = DatasetSchema::new(vec![
            ColumnSpec::new("c", ColumnKind::Categorical, NormKind::None),
            ColumnSpec::new("y", ColumnKind::Target, NormKind::None),
            ColumnSpec::new("s", ColumnKind::Sensitive, NormKind::None),
        ]);
        assert!(bare.is_err());
    }
}
