use magmaclust::{HypothesisRegime, PredictMethod};
use magmaclust_py::{individuals_from_columns, parse_method, parse_regime};

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

#[test]
fn columns_group_by_id_in_first_appearance_order() {
    let inds = individuals_from_columns(&s(&["b", "a", "b", "a"]), &[2.0, 1.0, 0.5, 0.0], &[20.0, 10.0, 5.0, 0.0]).unwrap();
    assert_eq!(inds.len(), 2);
    assert_eq!(inds[0].id, "b");
    assert_eq!(inds[0].t, vec![0.5, 2.0]);
    assert_eq!(inds[0].y, vec![5.0, 20.0]);
    assert_eq!(inds[1].t, vec![0.0, 1.0]);
}

#[test]
fn ragged_columns_and_duplicates_are_rejected() {
    assert!(individuals_from_columns(&s(&["a"]), &[0.0, 1.0], &[0.0]).is_err());
    assert!(individuals_from_columns(&s(&["a", "a"]), &[1.0, 1.0], &[0.0, 2.0]).is_err());
}

#[test]
fn option_strings() {
    assert_eq!(parse_regime("hki").unwrap(), HypothesisRegime::Hki);
    assert!(parse_regime("H11").is_err());
    assert_eq!(parse_method("3ter").unwrap(), PredictMethod::Shortcut3ter);
    assert!(parse_method("fast").is_err());
}
