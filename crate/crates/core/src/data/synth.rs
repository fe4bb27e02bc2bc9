use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Feature};
use super::schema::{ColumnKind, ColumnSpec, DatasetSchema};
use super::NormKind;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// How the target column of a synthetic dataset is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// `y = s`: recover the group.
    #[default]
    Group,
    /// `y = 1[v . (x - mu0) > 0]` with `v` orthogonal to `mu1 - mu0`, so the
    /// label is independent of the group.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_per_group: usize,
    pub mu0: [f64; 2],
    pub mu1: [f64; 2],
    pub sigma: f64,
    pub target: TargetRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_group: 500,
            mu0: [0.0, 0.0],
            mu1: [1.0, 1.0],
            sigma: 1.0,
            target: TargetRule::Group,
        }
    }
}

pub fn two_gaussians_schema() -> DatasetSchema {
    DatasetSchema::new(vec![
        ColumnSpec::new("x0", ColumnKind::Continuous, NormKind::None),
        ColumnSpec::new("x1", ColumnKind::Continuous, NormKind::None),
        ColumnSpec::new("s", ColumnKind::Sensitive, NormKind::None),
        ColumnSpec::new("y", ColumnKind::Target, NormKind::None),
    ])
    .expect("static schema")
}

/// Two isotropic Gaussian clouds, group 0 rows first.
pub fn synth_two_gaussians(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    if cfg.n_per_group == 0 {
        return Err(Error::Config("n_per_group must be at least 1".into()));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be >= 0, got {}", cfg.sigma)));
    }
    let mut rng = seeded(seed);
    let n = 2 * cfg.n_per_group;
    let mut data = Vec::with_capacity(2 * n);
    let mut s = Vec::with_capacity(n);
    for (g, mu) in [cfg.mu0, cfg.mu1].iter().enumerate() {
        for _ in 0..cfg.n_per_group {
            for m in mu {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + cfg.sigma * z);
            }
            s.push(g);
        }
    }
    let x = Tensor::new(n, 2, data)?;
    let y = match cfg.target {
        TargetRule::Group => s.iter().map(|&g| g as f64).collect(),
        TargetRule::Orthogonal => {
            let delta = [cfg.mu1[0] - cfg.mu0[0], cfg.mu1[1] - cfg.mu0[1]];
            let v = if delta == [0.0, 0.0] {
                [1.0, 0.0]
            } else {
                [-delta[1], delta[0]]
            };
            x.iter_rows()
                .map(|r| {
                    let d = v[0] * (r[0] - cfg.mu0[0]) + v[1] * (r[1] - cfg.mu0[1]);
                    if d > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let schema = two_gaussians_schema();
    let features = ["x0", "x1"]
        .iter()
        .map(|name| Feature {
            name: name.to_string(),
            source: name.to_string(),
            one_hot: false,
            normalization: NormKind::None,
        })
        .collect();
    Ok(Dataset {
        x,
        s,
        y,
        query_ids: None,
        features,
        group_names: vec!["0".into(), "1".into()],
        schema,
        normalization: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_csv, write_csv_to};

    #[test]
    fn defaults_match_the_two_gaussians_study() {
        let c = SynthConfig::default();
        assert_eq!(c.mu0, [0.0, 0.0]);
        assert_eq!(c.mu1, [1.0, 1.0]);
        assert_eq!(c.sigma, 1.0);
    }

    #[test]
    fn large_sample_means_are_close_to_mu() {
        let cfg = SynthConfig {
            n_per_group: 10_000,
            ..Default::default()
        };
        let d = synth_two_gaussians(&cfg, 17).unwrap();
        for (g, rows) in d.group_rows().iter().enumerate() {
            let means = d.x.select_rows(rows).col_means();
            let mu = if g == 0 { cfg.mu0 } else { cfg.mu1 };
            for (m, t) in means.iter().zip(mu) {
                assert!((m - t).abs() < 0.05, "group {g}: {m} vs {t}");
            }
        }
        assert_eq!(d.y, d.s.iter().map(|&g| g as f64).collect::<Vec<_>>());
    }

    #[test]
    fn zero_sigma_collapses_onto_the_means() {
        let cfg = SynthConfig {
            n_per_group: 5,
            sigma: 0.0,
            ..Default::default()
        };
        let d = synth_two_gaussians(&cfg, 3).unwrap();
        for i in 0..5 {
            assert_eq!(d.x.row(i), &[0.0, 0.0]);
            assert_eq!(d.x.row(5 + i), &[1.0, 1.0]);
        }
    }

    #[test]
    fn orthogonal_target_is_balanced_in_both_groups() {
        let cfg = SynthConfig {
            n_per_group: 4000,
            target: TargetRule::Orthogonal,
            ..Default::default()
        };
        let d = synth_two_gaussians(&cfg, 5).unwrap();
        for rows in d.group_rows() {
            let rate = rows.iter().map(|&i| d.y[i]).sum::<f64>() / rows.len() as f64;
            assert!((rate - 0.5).abs() < 0.03, "{rate}");
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let d = synth_two_gaussians(&SynthConfig::default(), 11).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &d.schema).unwrap();
        assert_eq!(back, d);
    }
}
