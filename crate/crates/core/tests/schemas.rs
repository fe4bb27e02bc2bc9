use std::path::PathBuf;

use fairvec::data::{read_csv, ColumnKind};
use fairvec::harness::fit_normalization;
use fairvec::{DatasetSchema, NormKind};

fn schema(name: &str) -> DatasetSchema {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    DatasetSchema::from_path(path).unwrap()
}

#[test]
fn bundled_schemas_are_valid() {
    for (name, sensitive) in [
        ("compas.json", "race"),
        ("compas_rank.json", "race"),
        ("adult.json", "sex"),
        ("banks.json", "age_group"),
        ("law.json", "race"),
    ] {
        let s = schema(name);
        assert_eq!(s.sensitive().name, sensitive, "{name}");
        assert!(s.of_kind(ColumnKind::Continuous).count() >= 2, "{name}");
    }
}

#[test]
fn compas_shaped_rows_load_with_a_continuous_flow_view() {
    let csv = "\
age,juv_fel_count,juv_misd_count,juv_other_count,priors_count,sex,c_charge_degree,race,two_year_recid
34,0,0,0,0,Male,F,African-American,1
24,0,0,1,4,Male,F,African-American,1
41,0,0,0,14,Male,F,Caucasian,1
39,0,0,0,0,Female,M,Caucasian,0
27,0,0,0,0,Male,F,Caucasian,0
";
    let ds = read_csv(csv.as_bytes(), &schema("compas.json")).unwrap();
    assert_eq!(ds.n_rows(), 5);
    assert_eq!(ds.n_features(), 5 + 2 + 2);
    assert_eq!(ds.s, vec![1, 1, 0, 0, 0]);
    assert_eq!(ds.group_names, ["Caucasian", "African-American"]);
    let view = ds.flow_view().unwrap();
    assert_eq!(view.n_features(), 5);
    assert!(view.feature_index("priors_count").is_some());
    let spec = fit_normalization(&view, NormKind::Standard).unwrap();
    let back = spec.invert(&spec.apply(&view.x).unwrap()).unwrap();
    assert!(back.max_abs_diff(&view.x) < 1e-12);
}
