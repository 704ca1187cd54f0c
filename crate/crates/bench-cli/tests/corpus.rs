use homeo::batch::{self, differential};
use homeo::gen::{characteristics, generate, GenParams};
use homeo::interp::{self, Config, Schedule};
use homeo::pipeline::{self, RunConfig};
use homeostasis::ir::Program;
use homeostasis::Mode;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = GenParams> {
    (any::<u64>(), 60usize..220, 1usize..4, 0usize..6).prop_map(|(seed, nodes, pc, barriers)| GenParams {
        seed,
        nodes,
        pc,
        barriers,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_programs_parse_with_requested_shape(p in params()) {
        let prog = Program::parse(&generate(&p)).unwrap();
        let c = characteristics(&prog);
        prop_assert_eq!(c.pc, p.pc);
        prop_assert_eq!(c.barriers, p.barriers);
    }

    #[test]
    fn generated_programs_are_race_free(p in params(), seed in any::<u64>()) {
        let prog = Program::parse(&generate(&p)).unwrap();
        let serial = interp::run(&prog, &Config { threads: 1, schedule: Schedule::InOrder, step_cap: 5_000_000 }).unwrap();
        for threads in 2..=3 {
            prop_assert_eq!(&interp::run(&prog, &Config::seeded(threads, seed)).unwrap(), &serial);
        }
    }

    #[test]
    fn optimized_output_preserves_behaviour(p in params()) {
        let src = generate(&p);
        let out = pipeline::run(&src, &RunConfig::new(Mode::LzUpd)).unwrap();
        let orig = Program::parse(&src).unwrap();
        let opt = Program::parse(&out.optimized).unwrap();
        prop_assert!(differential(&orig, &opt, &batch::schedules(2, 2..=3)).is_empty());
    }
}

#[test]
fn modes_agree_on_a_generated_program() {
    let src = generate(&GenParams { seed: 41, nodes: 250, pc: 3, barriers: 5 });
    let c = batch::compare_modes(&src, &Mode::ALL, &RunConfig::new(Mode::LzUpd)).unwrap();
    assert!(c.digests_agree());
    assert!(c.sources_agree());
    let lz = c.run(Mode::LzUpd).unwrap().report.total_transfer_applications;
    let eg = c.run(Mode::EgInv).unwrap().report.total_transfer_applications;
    assert!(lz < eg, "{lz} vs {eg}");
}

#[test]
fn parallel_and_sequential_maps_agree() {
    let items: Vec<u64> = (0..50).collect();
    assert_eq!(batch::map(&items, |x| x * x), batch::map_sequential(&items, |x| x * x));
}
