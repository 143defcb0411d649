use camsim_core::calibrate::{calibrate, residual_report, SearchBounds};
use camsim_core::experiment::{calibrated_profiles, sweep, Experiment};
use camsim_core::reference::published_table;
use camsim_core::{Configuration, CostPoly, DelayProfile, Method, ResultTable};

#[test]
fn outer_basic_column_fits_exactly() {
    let target = published_table(Method::Outer).restrict(&[Configuration::Basic, Configuration::Pipelined]);
    let r = calibrate(&target, Method::Outer, &SearchBounds::for_family(Method::Outer)).unwrap();
    assert!(r.exact);
    assert_eq!(r.profile, DelayProfile::paper_calibrated(Method::Outer));
    let chain = r.profile.poly("conv").unwrap().add(r.profile.poly("vmul").unwrap());
    assert_eq!(chain, CostPoly::from_numerators(&[0, 30], 1).unwrap());
    for t in [8, 16, 32, 64] {
        assert_eq!(r.residual(t, Configuration::Basic), Some(0));
    }
    assert_eq!(r.residual(8, Configuration::Pipelined), Some(0));
    assert_eq!(r.residual(16, Configuration::Pipelined), Some(0));
    assert_eq!(r.residual(32, Configuration::Pipelined), Some(-1));
    assert_eq!(r.residual(64, Configuration::Pipelined), Some(-2));
    assert_eq!(r.residuals.len(), 8);
}

#[test]
fn inner_basic_column_fits_exactly() {
    let target = published_table(Method::Inner);
    let r = calibrate(&target, Method::Inner, &SearchBounds::for_family(Method::Inner)).unwrap();
    assert!(r.exact);
    assert_eq!(r.profile, DelayProfile::paper_calibrated(Method::Inner));
    let chain = r.profile.poly("conv").unwrap().add(r.profile.poly("dot").unwrap());
    assert_eq!(chain, CostPoly::from_numerators(&[0, 0, 1, 25], 64).unwrap());
    assert_eq!((r.profile.start, r.profile.end), (3, 0));
    assert_eq!(r.residuals.len(), 16);
    for t in [8, 16, 32] {
        assert_eq!(r.residual(t, Configuration::Pipelined), Some(0));
    }
    let report = residual_report(&r);
    assert_eq!(report.lines().count(), 17);
    assert!(report.contains("  64 pipelined target   61572 predicted  102467 residual +40895"));
}

#[test]
fn basic_only_target_takes_smallest_end() {
    let target = published_table(Method::Outer).restrict(&[Configuration::Basic]);
    let r = calibrate(&target, Method::Outer, &SearchBounds::for_family(Method::Outer)).unwrap();
    assert_eq!((r.profile.start, r.profile.end), (5, 0));
    assert!(r.residuals.iter().all(|c| c.residual == Some(0)));
}

#[test]
fn single_cell_is_underdetermined_but_exact() {
    let mut target = ResultTable::new();
    target.insert(8, Configuration::Basic, 1208);
    let bounds = SearchBounds {
        max_degree: 0,
        max_numerator: 2000,
        ..SearchBounds::for_family(Method::Outer)
    };
    let r = calibrate(&target, Method::Outer, &bounds).unwrap();
    assert!(r.exact);
    assert_eq!(r.residuals.len(), 1);
    assert_eq!(r.residual(8, Configuration::Basic), Some(0));
    // Smallest vector: no sum cost, the whole makespan in the chain and constant.
    assert_eq!(r.profile.poly("sum").unwrap(), &CostPoly::new());
}

#[test]
fn calibration_is_idempotent_on_its_own_predictions() {
    let predicted = sweep(&Experiment::default_sweep(), &calibrated_profiles()).unwrap();
    for method in Method::ALL {
        let bounds = SearchBounds::for_family(method);
        let first = calibrate(&predicted[&method], method, &bounds).unwrap();
        assert_eq!(first.profile, DelayProfile::paper_calibrated(method));
        assert_eq!(first.max_abs_residual(), Some(0), "{method}");
        let again = sweep(
            &Experiment {
                methods: vec![method],
                ..Experiment::default_sweep()
            },
            &[(method, first.profile.clone())].into_iter().collect(),
        )
        .unwrap();
        let second = calibrate(&again[&method], method, &bounds).unwrap();
        assert_eq!(second.profile, first.profile);
        assert_eq!(second.max_abs_residual(), Some(0));
    }
}

#[test]
fn inconsistent_target_falls_back_to_least_squares() {
    // A Basic column no bounded polynomial can hit exactly: the constant
    // part would have to differ between rows.
    let mut target = ResultTable::new();
    for (t, y) in [(8, 100), (16, 101), (32, 99), (64, 100)] {
        target.insert(t, Configuration::Basic, y);
    }
    let bounds = SearchBounds {
        max_degree: 0,
        ..SearchBounds::for_family(Method::Outer)
    };
    let r = calibrate(&target, Method::Outer, &bounds).unwrap();
    assert!(!r.exact);
    assert_eq!(r.residuals.len(), 4);
    // The chain constant clamps at 64 and start + end at 32.
    assert!(r.max_abs_residual().unwrap() <= 5, "{}", residual_report(&r));
}

#[test]
fn exhausted_budget_still_returns_a_fit() {
    let target = published_table(Method::Outer).restrict(&[Configuration::Basic]);
    let bounds = SearchBounds {
        node_budget: 10,
        ..SearchBounds::for_family(Method::Outer)
    };
    let r = calibrate(&target, Method::Outer, &bounds).unwrap();
    assert!(!r.exact);
    assert_eq!(r.residuals.len(), 4);
}
