use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSpec, DatasetSchema};
use super::{NormKind, NormalizationSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One column of the feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    /// `column` for continuous features, `column=category` for one-hot ones.
    pub name: String,
    /// Schema column the feature came from.
    pub source: String,
    pub one_hot: bool,
    pub normalization: NormKind,
}

impl Feature {
    /// Flows only ever see continuous features.
    pub fn flow_eligible(&self) -> bool {
        !self.one_hot
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    /// Group index per row, `0..n_groups`.
    pub s: Vec<usize>,
    pub y: Vec<f64>,
    pub query_ids: Option<Vec<usize>>,
    pub features: Vec<Feature>,
    pub group_names: Vec<String>,
    pub schema: DatasetSchema,
    /// Set once `x` holds normalized values.
    pub normalization: Option<NormalizationSpec>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names
            .len()
            .max(self.s.iter().max().map_or(0, |m| m + 1))
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups()];
        for &g in &self.s {
            counts[g] += 1;
        }
        counts
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn norm_kinds(&self) -> Vec<NormKind> {
        self.features.iter().map(|f| f.normalization).collect()
    }

    /// Indices of flow-eligible (continuous) feature columns.
    pub fn flow_columns(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&j| self.features[j].flow_eligible())
            .collect()
    }

    /// The continuous-only view handed to flow models.
    pub fn flow_view(&self) -> Result<Dataset> {
        let cols = self.flow_columns();
        if cols.is_empty() {
            return Err(Error::Config("dataset has no continuous features".into()));
        }
        Ok(self.select_features(&cols))
    }

    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_cols(cols),
            features: cols.iter().map(|&c| self.features[c].clone()).collect(),
            normalization: self.normalization.as_ref().map(|n| n.select(cols)),
            ..self.clone()
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            s: idx.iter().map(|&i| self.s[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            query_ids: self
                .query_ids
                .as_ref()
                .map(|q| idx.iter().map(|&i| q[i]).collect()),
            ..self.clone()
        }
    }

    /// Fits the schema-declared normalization on this dataset's rows.
    pub fn fit_normalizer(&self) -> Result<NormalizationSpec> {
        fit_normalizer(self, &self.norm_kinds())
    }

    /// Copy with `spec` applied to `x`.
    pub fn normalized(&self, spec: &NormalizationSpec) -> Result<Dataset> {
        if self.normalization.is_some() {
            return Err(Error::Contract("dataset is already normalized".into()));
        }
        Ok(Dataset {
            x: spec.apply(&self.x)?,
            normalization: Some(spec.clone()),
            ..self.clone()
        })
    }

    /// Row indices per group.
    pub fn group_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.n_groups()];
        for (i, &g) in self.s.iter().enumerate() {
            rows[g].push(i);
        }
        rows
    }
}

/// Fits one normalization per feature column with the given kinds.
/// One-hot columns always use the fixed `[0, 1]` range.
pub fn fit_normalizer(dataset: &Dataset, kinds: &[NormKind]) -> Result<NormalizationSpec> {
    let mut spec = NormalizationSpec::fit(&dataset.x, kinds)?;
    for (f, norm) in dataset.features.iter().zip(spec.features.iter_mut()) {
        if f.one_hot && *norm != super::FeatureNorm::None {
            *norm = super::FeatureNorm::MinMax { min: 0.0, max: 1.0 };
        }
    }
    Ok(spec)
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Ingestion {
        row,
        column: column.to_string(),
        detail: format!("cannot parse `{raw}` as a number"),
    })
}

fn category_index(spec: &ColumnSpec, raw: &str, row: usize) -> Result<usize> {
    let cats = spec.categories.as_ref().expect("validated");
    cats.iter()
        .position(|c| c == raw.trim())
        .ok_or_else(|| Error::Ingestion {
            row,
            column: spec.name.clone(),
            detail: format!("value `{raw}` is not one of {cats:?}"),
        })
}

/// Reads a comma-separated file with a header row laid out per `schema`.
/// Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &DatasetSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut position = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if schema.column(h).is_none() {
            return Err(Error::Ingestion {
                row: 0,
                column: h.to_string(),
                detail: "column not declared in schema".into(),
            });
        }
        position.insert(h.to_string(), i);
    }
    for c in &schema.columns {
        if !position.contains_key(&c.name) {
            return Err(Error::Ingestion {
                row: 0,
                column: c.name.clone(),
                detail: "schema column missing from header".into(),
            });
        }
    }

    let mut features = Vec::new();
    for c in &schema.columns {
        match c.kind {
            ColumnKind::Continuous => features.push(Feature {
                name: c.name.clone(),
                source: c.name.clone(),
                one_hot: false,
                normalization: c.normalization,
            }),
            ColumnKind::Categorical => {
                for cat in c.categories.as_ref().expect("validated") {
                    features.push(Feature {
                        name: format!("{}={cat}", c.name),
                        source: c.name.clone(),
                        one_hot: true,
                        normalization: c.normalization,
                    });
                }
            }
            _ => {}
        }
    }

    let sensitive = schema.sensitive();
    let target = schema.target();
    let query = schema.of_kind(ColumnKind::QueryId).next();
    let mut query_map: HashMap<String, usize> = HashMap::new();

    let mut data = Vec::new();
    let mut s = Vec::new();
    let mut y = Vec::new();
    let mut qids = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let field = |name: &str| record.get(position[name]).unwrap_or("");
        for c in &schema.columns {
            match c.kind {
                ColumnKind::Continuous => data.push(parse_number(field(&c.name), row, &c.name)?),
                ColumnKind::Categorical => {
                    let k = category_index(c, field(&c.name), row)?;
                    let width = c.categories.as_ref().expect("validated").len();
                    data.extend((0..width).map(|j| if j == k { 1.0 } else { 0.0 }));
                }
                _ => {}
            }
        }
        let raw_s = field(&sensitive.name);
        let group = if sensitive.categories.is_some() {
            category_index(sensitive, raw_s, row)?
        } else {
            let v = parse_number(raw_s, row, &sensitive.name)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Ingestion {
                    row,
                    column: sensitive.name.clone(),
                    detail: format!("group label `{raw_s}` is not a non-negative integer"),
                });
            }
            v as usize
        };
        s.push(group);
        let raw_y = field(&target.name);
        y.push(if target.categories.is_some() {
            category_index(target, raw_y, row)? as f64
        } else {
            parse_number(raw_y, row, &target.name)?
        });
        if let Some(q) = query {
            let key = field(&q.name).trim().to_string();
            let next = query_map.len();
            qids.push(*query_map.entry(key).or_insert(next));
        }
    }

    let n = s.len();
    let group_names = match &sensitive.categories {
        Some(c) => c.clone(),
        None => {
            let k = s.iter().max().map_or(0, |m| m + 1);
            (0..k).map(|g| g.to_string()).collect()
        }
    };
    Ok(Dataset {
        x: Tensor::new(n, features.len(), data)?,
        s,
        y,
        query_ids: query.map(|_| qids),
        features,
        group_names,
        schema: schema.clone(),
        normalization: None,
    })
}

/// Writes raw (un-normalized) rows back out in schema column order.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(dataset, file)
}

pub fn write_csv_to<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let raw = match &dataset.normalization {
        Some(spec) => spec.invert(&dataset.x)?,
        None => dataset.x.clone(),
    };
    let schema = &dataset.schema;
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema.columns.iter().map(|c| c.name.as_str()))?;
    let mut qnames: Vec<usize> = Vec::new();
    if let Some(q) = &dataset.query_ids {
        qnames = q.clone();
    }
    for i in 0..dataset.n_rows() {
        let mut out: Vec<String> = Vec::with_capacity(schema.columns.len());
        for c in &schema.columns {
            let cell = match c.kind {
                ColumnKind::Continuous => {
                    let j = dataset.feature_index(&c.name).expect("feature");
                    format!("{}", raw.get(i, j))
                }
                ColumnKind::Categorical => {
                    let cats = c.categories.as_ref().expect("validated");
                    let j0 = dataset
                        .feature_index(&format!("{}={}", c.name, cats[0]))
                        .expect("one-hot block");
                    let k = (0..cats.len())
                        .max_by(|&a, &b| raw.get(i, j0 + a).total_cmp(&raw.get(i, j0 + b)))
                        .unwrap_or(0);
                    cats[k].clone()
                }
                ColumnKind::Sensitive => match &c.categories {
                    Some(cats) => cats[dataset.s[i]].clone(),
                    None => dataset.s[i].to_string(),
                },
                ColumnKind::Target => match &c.categories {
                    Some(cats) => cats[dataset.y[i] as usize].clone(),
                    None => format!("{}", dataset.y[i]),
                },
                ColumnKind::QueryId => qnames.get(i).map(|q| q.to_string()).unwrap_or_default(),
            };
            out.push(cell);
        }
        wtr.write_record(&out)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hiring_schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            ColumnSpec::new("age", ColumnKind::Continuous, NormKind::Standard),
            ColumnSpec::new("sex", ColumnKind::Sensitive, NormKind::None),
            ColumnSpec::new("hired", ColumnKind::Target, NormKind::None),
        ])
        .unwrap()
    }

    #[test]
    fn minimal_schema_loads() {
        let text = "age,sex,hired\n30,0,1\n41,1,0\n25,1,1\n";
        let d = read_csv(text.as_bytes(), &hiring_schema()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.s, vec![0, 1, 1]);
        assert_eq!(d.y, vec![1.0, 0.0, 1.0]);
        assert!(d.query_ids.is_none());
    }

    #[test]
    fn unseen_category_names_the_row() {
        let schema = DatasetSchema::new(vec![
            ColumnSpec::new("grade", ColumnKind::Categorical, NormKind::MinMax)
                .with_categories(&["A", "B"]),
            ColumnSpec::new("s", ColumnKind::Sensitive, NormKind::None),
            ColumnSpec::new("y", ColumnKind::Target, NormKind::None),
        ])
        .unwrap();
        let text = "grade,s,y\nA,0,1\nC,1,0\n";
        match read_csv(text.as_bytes(), &schema) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "grade");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_hot_block_is_not_flow_eligible() {
        let schema = DatasetSchema::new(vec![
            ColumnSpec::new("age", ColumnKind::Continuous, NormKind::Standard),
            ColumnSpec::new("grade", ColumnKind::Categorical, NormKind::MinMax)
                .with_categories(&["A", "B", "C"]),
            ColumnSpec::new("s", ColumnKind::Sensitive, NormKind::None),
            ColumnSpec::new("y", ColumnKind::Target, NormKind::None),
        ])
        .unwrap();
        let text = "age,grade,s,y\n30,B,0,1\n40,C,1,0\n";
        let d = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.x.row(0), &[30.0, 0.0, 1.0, 0.0]);
        let view = d.flow_view().unwrap();
        assert_eq!(view.n_features(), 1);
        assert!(view.features.iter().all(Feature::flow_eligible));
    }

    #[test]
    fn unknown_column_and_bad_number_are_rejected() {
        let text = "age,sex,hired,extra\n1,0,1,2\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &hiring_schema()),
            Err(Error::Ingestion { row: 0, .. })
        ));
        let text = "age,sex,hired\nold,0,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &hiring_schema()),
            Err(Error::Ingestion { row: 1, .. })
        ));
    }

    #[test]
    fn query_ids_are_indexed_by_first_appearance() {
        let schema = DatasetSchema::new(vec![
            ColumnSpec::new("q", ColumnKind::QueryId, NormKind::None),
            ColumnSpec::new("f", ColumnKind::Continuous, NormKind::None),
            ColumnSpec::new("s", ColumnKind::Sensitive, NormKind::None),
            ColumnSpec::new("y", ColumnKind::Target, NormKind::None),
        ])
        .unwrap();
        let text = "q,f,s,y\nb,1,0,2\na,2,1,1\nb,3,0,0\n";
        let d = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.query_ids, Some(vec![0, 1, 0]));
    }
}
