use tiltlab_core::corpstats::{welch_t_test, RunAggregate};

#[test]
fn welch_hand_computation() {
    // a=[1,2,3]: mean 2, var 1; b=[1..5]: mean 3, var 2.5
    let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let se2 = 1.0 / 3.0 + 2.5 / 5.0;
    let t = (2.0 - 3.0) / f64::sqrt(se2);
    let df = se2 * se2 / ((1.0f64 / 3.0).powi(2) / 2.0 + 0.5f64.powi(2) / 4.0);
    assert!((r.t - t).abs() < 1e-12);
    assert!((r.df - df).abs() < 1e-12);
    // scipy.stats.ttest_ind([1,2,3],[1,2,3,4,5],equal_var=False).pvalue
    assert!((r.p_two_sided - 0.3161334219263932).abs() < 1e-9, "{}", r.p_two_sided);
}

#[test]
fn separated_means_are_significant() {
    let a: Vec<f64> = (0..9).map(|i| (i as f64 - 4.0) * 0.25).collect();
    let sd = RunAggregate::new(a.clone()).unwrap().std.unwrap();
    let b: Vec<f64> = a.iter().map(|x| x + 10.0 * sd).collect();
    assert!(welch_t_test(&a, &b).unwrap().p_two_sided < 1e-6);
}

#[test]
fn identical_samples() {
    let r = welch_t_test(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
    assert_eq!(r.t, 0.0);
    assert!((r.p_two_sided - 1.0).abs() < 1e-12);
}

#[test]
fn aggregate_of_constant_runs() {
    let agg = RunAggregate::new(vec![7.5; 9]).unwrap();
    assert_eq!(agg.mean, 7.5);
    assert_eq!(agg.std, Some(0.0));
}
