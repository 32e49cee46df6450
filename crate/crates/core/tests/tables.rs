use std::time::Instant;

use ltv_es_core::tables::{
    reproduce_table, reproduce_table_with, scalar_sigma0_max, DelayedReading, TableId, TABLE_TOLERANCE,
};

#[test]
fn required_tables_match_reference_values() {
    let start = Instant::now();
    for id in TableId::ALL.into_iter().filter(|id| !id.is_optional()) {
        let table = reproduce_table(id).unwrap();
        for row in &table.rows {
            assert!(
                row.passes(TABLE_TOLERANCE),
                "{} eps={} tau={:?}: expected {} got {:?}",
                id.name(),
                row.epsilon,
                row.tau,
                row.expected,
                row.computed
            );
            assert!(row.report.is_some());
        }
    }
    assert!(start.elapsed().as_secs_f64() < 20.0);
}

#[test]
fn feasibility_flags() {
    for id in [TableId::T1, TableId::T2, TableId::T3, TableId::T4, TableId::T5, TableId::T6, TableId::T7] {
        assert!(reproduce_table(id).unwrap().rows.iter().all(|r| r.feasible), "{}", id.name());
    }
    // The τ = 1 row reproduces the published number but its predictor condition fails.
    let long = reproduce_table(TableId::LongDelay).unwrap();
    assert!(!long.rows[0].feasible);
    assert!(long.rows[0].note.as_deref().unwrap().contains("predictor"));
}

#[test]
fn fully_transformed_reading_misses_the_delayed_table() {
    let t = reproduce_table_with(TableId::T3, DelayedReading::Transformed).unwrap();
    assert!(!t.passes(TABLE_TOLERANCE));
    // Bounds shrink under this reading; the gap is large, not a rounding issue.
    assert!(t.rows.iter().all(|r| r.rel_error.unwrap() < -0.05));
}

#[test]
fn nonscalar_gain_table_is_optional_and_reported() {
    let t = reproduce_table(TableId::Nonscalar).unwrap();
    assert!(t.optional);
    assert_eq!(t.rows.len(), 4);
    assert!(t.rows.iter().filter(|r| r.computed.is_some()).all(|r| r.report.is_some()));
}

#[test]
fn sigma0_bisection_for_scalar_example() {
    let s = scalar_sigma0_max(1e-8, 1e-6).unwrap();
    assert!((s / 10.87 - 1.0).abs() < 0.005, "{s}");
}
