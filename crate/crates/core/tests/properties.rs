//! Random circuits through both pipelines on small models.

use proptest::prelude::*;

use qdcc::expand::to_sim_ops;
use qdcc::fixtures;
use qdcc::pipeline::{compile, Options, Pipeline};
use qdcc::verify::check_equivalence;
use qdcc::{Circuit, Gate, HardwareModel};

fn gate(n: u32) -> impl Strategy<Value = Gate> {
    let q = 0..n;
    let pair = (0..n, 0..n).prop_filter("distinct", |(a, b)| a != b);
    prop_oneof![
        q.clone().prop_map(Gate::h),
        q.clone().prop_map(Gate::x),
        (q.clone(), -3.0..3.0f64).prop_map(|(a, t)| Gate::rz(a, t)),
        pair.clone().prop_map(|(a, b)| Gate::cx(a, b)),
        pair.clone().prop_map(|(a, b)| Gate::cz(a, b)),
        (pair, -3.0..3.0f64).prop_map(|((a, b), t)| Gate::cp(a, b, t)),
        (Just((0..n).collect::<Vec<u32>>()).prop_shuffle(), 2..n.min(5) as usize)
            .prop_map(|(qs, k)| Gate::mcx(&qs[..k], qs[k])),
    ]
}

fn circuit() -> impl Strategy<Value = Circuit> {
    (3u32..=6).prop_flat_map(|n| {
        prop::collection::vec(gate(n), 1..14).prop_map(move |gs| {
            let mut c = Circuit::new(n);
            for g in gs {
                c.push(g);
            }
            c
        })
    })
}

fn equivalent(c: &Circuit, model: &HardwareModel, o: &Options) -> Result<(), TestCaseError> {
    let r = compile(c, model, o).map_err(|e| TestCaseError::fail(format!("{e}\n{c}")))?;
    r.mapping.validate(model).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let eq = check_equivalence(c, &to_sim_ops(&r.expanded), &r.expanded.outputs, 4, 1)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(eq.holds(1e-9), "error {} on\n{}", eq.max_error, c);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn collcomm_preserves_semantics(c in circuit()) {
        equivalent(&c, &fixtures::toy_model(), &Options::default())?;
    }

    #[test]
    fn baseline_preserves_semantics(c in circuit()) {
        equivalent(&c, &fixtures::toy_model(), &Options { pipeline: Pipeline::Baseline, ..Options::default() })?;
    }

    #[test]
    fn ablations_preserve_semantics(c in circuit(), flags in 0u8..8) {
        let o = Options { fusion: flags & 1 == 0, split: flags & 2 == 0, lazy: flags & 4 == 0, ..Options::default() };
        equivalent(&c, &HardwareModel::single_cluster(3, 3, 2), &o)?;
    }

    #[test]
    fn text_round_trip(c in circuit()) {
        let back = Circuit::parse(&c.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), c.to_text());
    }
}
