use popchain_demo::{annualize_impl, demo_projection_impl, salary_cost_impl, AnnualizeRequest, CostRequest};

#[test]
fn annualizing_the_identity_keeps_it() {
    let req = AnnualizeRequest { monthly: vec![vec![1.0, 0.0], vec![0.0, 1.0]], stopping_time: None };
    assert_eq!(annualize_impl(&req).unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn annualizing_an_absorbing_chain() {
    // row 0 leaks 0.1 a month into the absorbing state; with the stopping
    // time fixed at month 2 the annual leak is 1 - 0.9^2
    let mut pmf = [0.0; 12];
    pmf[1] = 1.0;
    let req = AnnualizeRequest { monthly: vec![vec![0.9, 0.1], vec![0.0, 1.0]], stopping_time: Some(pmf) };
    let a = annualize_impl(&req).unwrap();
    assert!((a[0][1] - 0.19).abs() < 1e-15);
}

#[test]
fn bad_matrices_are_rejected() {
    let ragged = AnnualizeRequest { monthly: vec![vec![1.0], vec![0.5, 0.5]], stopping_time: None };
    assert!(annualize_impl(&ragged).is_err());
    let leaky = AnnualizeRequest { monthly: vec![vec![0.5, 0.4], vec![0.0, 1.0]], stopping_time: None };
    assert!(annualize_impl(&leaky).unwrap_err().contains("row 1"));
}

#[test]
fn demo_projection_bands_contain_expectations() {
    let p = demo_projection_impl(8, 5, 500, 3).unwrap();
    assert_eq!(p.years, vec![1, 2, 3, 4, 5]);
    assert_eq!(p.categories.len(), 3);
    assert_eq!(p.population, 8 * 52);
    for y in 0..5 {
        let sum: f64 = p.categories.iter().map(|(_, b)| b.expected[y]).sum();
        assert!((sum - p.total.expected[y]).abs() < 1e-9);
        assert!(p.total.p05[y] <= p.total.mean[y] && p.total.mean[y] <= p.total.p95[y]);
    }
    let again = demo_projection_impl(8, 5, 500, 3).unwrap();
    assert_eq!(again.total, p.total);
}

#[test]
fn salary_costs_follow_the_formulas() {
    let req: CostRequest = serde_json::from_str(r#"{"year": 2016, "base_salary": 100000}"#).unwrap();
    let c = salary_cost_impl(&req).unwrap();
    assert!((c.g - 1_372_010.256_332_848).abs() / c.g < 1e-13);
    let factor = (1.0 + 0.0823) * ((1.0 + 0.0508 + 0.1425 + 0.0425) + 0.0833) * 1.0025;
    assert!((c.gt / c.g - factor).abs() < 1e-12);
    let early: CostRequest = serde_json::from_str(r#"{"year": 2010, "base_salary": 1}"#).unwrap();
    assert!(salary_cost_impl(&early).is_err());
}
