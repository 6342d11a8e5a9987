use stratmatch_core::att::Method;
use stratmatch_core::dgp::OUTCOME_FEATURES;
use stratmatch_core::{
    estimate_m5c_m, estimate_m5c_mf, estimate_naive, estimate_strategy, generate_hyb20var, post_match_balance,
    pre_match_balance, build_tree, Dataset, PipelineConfig,
};

fn desk(seed: u64) -> Dataset {
    generate_hyb20var(seed, Some((60, 2_940))).unwrap().normalize_min_max()
}

#[test]
fn matched_estimate_is_close_to_truth() {
    let d = desk(101);
    let r = estimate_m5c_mf(&d, &PipelineConfig::default()).unwrap();
    assert_eq!(r.units.len() + r.skipped.len(), 60);
    assert!((r.att - 2.0).abs() < 0.35, "att {}", r.att);
    for u in &r.units {
        assert!(!u.matched.is_empty());
        assert!(u.matched.iter().all(|&c| !d.is_treated(c)));
        let info = u.match_info.as_ref().unwrap();
        assert!(info.optimal);
        assert!(u.matched.iter().all(|c| info.candidates.contains(c)));
    }
}

#[test]
fn matching_improves_outcome_feature_balance() {
    let d = desk(102);
    let r = estimate_m5c_mf(&d, &PipelineConfig::default()).unwrap();
    let post = post_match_balance(&d, &r.matches(), 20).unwrap();
    assert!(post.mean_smd(&OUTCOME_FEATURES) < 0.1);
    let pre = pre_match_balance(&d, 20).unwrap();
    assert_eq!(pre.records.len(), 20);
}

#[test]
fn every_estimator_agrees_on_constant_effect_data() {
    // y = x1 + 3 t exactly, so every stratum-based estimator recovers 3
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut t = Vec::new();
    for i in 0..400 {
        let x = (i % 97) as f64 / 97.0;
        let treated = i % 10 == 0;
        rows.push(vec![x, ((i * 7) % 13) as f64]);
        y.push(x + if treated { 3.0 } else { 0.0 });
        t.push(treated);
    }
    let d = Dataset::new(t, rows, y, vec!["a".into(), "b".into()]).unwrap().normalize_min_max();
    let m = estimate_m5c_m(&d, &PipelineConfig::default()).unwrap();
    assert!((m.att - 3.0).abs() < 1e-9, "{}", m.att);
    let (control, _) = d.split_by_treatment();
    let tree = build_tree(&control, &PipelineConfig::default().tree_params()).unwrap();
    let k = estimate_strategy(&d, &tree, Method::StrategyKtok).unwrap();
    let one = estimate_strategy(&d, &tree, Method::Strategy1tok).unwrap();
    assert_eq!(k.att, one.att);
    let naive = estimate_naive(&d).unwrap();
    assert!(naive.att.is_finite());
}

#[test]
fn reports_serialize_round_trip() {
    let d = desk(103);
    let r = estimate_m5c_mf(&d, &PipelineConfig::default()).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: stratmatch_core::AttReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.method, Method::M5cMf);
    assert_eq!(back.units.len(), r.units.len());
}
