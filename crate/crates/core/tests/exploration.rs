use divrr::explore::{next_action, Action, Backbone, ExplorationState, PolicyInput};
use divrr::rng::stream;
use divrr::world::{
    bfs_distances, generate_scenario, observe, read_suite, scan, write_suite, Cell, GenConfig, Occupancy, Pose,
    Sensor, Split, Suite, World,
};
use proptest::prelude::*;

fn small_gen() -> GenConfig {
    GenConfig {
        width: 17,
        height: 17,
        room_columns: 2,
        room_rows: 2,
        objects_per_world: 10,
        wanderers: 1,
        horizon: 60,
        sequence_len: 60,
        questions_per_world: 7,
        question_count: 7,
        extra_door_probability: 0.5,
    }
}

/// Drives FBE with no time limit until it stops; returns the map.
fn explore_fully(world: &World, start: Cell) -> (ExplorationState, usize) {
    let sensor = Sensor::default();
    let mut state = ExplorationState::new(world.width, world.height);
    let mut rng = stream(0, "policy");
    let (mut cell, mut heading) = (start, 0.0);
    for step in 0..10_000 {
        let pose = Pose::new(cell, heading, 0);
        let obs = observe(world, &pose, &sensor).unwrap();
        state.visit(cell);
        state.integrate(&scan(world, &pose, &sensor).unwrap());
        let input = PolicyInput {
            world,
            pose: &pose,
            observation: &obs,
            score: 0.0,
        };
        match next_action(Backbone::Fbe, &input, &mut state, &mut rng) {
            Action::Stop => return (state, step),
            Action::MoveTo { cell: next } => {
                assert_eq!(next.manhattan(cell), 1, "moves are single steps");
                assert!(world.is_free(next), "never walks into a wall");
                heading = cell.heading_to(next);
                cell = next;
            }
            Action::RotateInPlace { heading: h } => heading = h,
        }
    }
    panic!("frontier exploration did not terminate");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frontier_exploration_maps_every_reachable_cell(seed in 0u64..1000) {
        let scenario = generate_scenario(&small_gen(), seed).unwrap();
        let world = scenario.world(Split::Static).without_humans();
        let start = world.free_cells().next().unwrap();
        let (state, _) = explore_fully(&world, start);
        let reachable = bfs_distances(start, |c| world.is_free(c));
        for c in reachable.keys() {
            prop_assert_eq!(state.occupancy(*c), Occupancy::Free, "{} not mapped", c);
        }
        prop_assert!(state.frontier().is_empty());
    }

    #[test]
    fn generated_suites_validate_and_round_trip(seed in 0u64..500) {
        let suite: Suite = divrr::world::generate_suite(&small_gen(), seed).unwrap();
        for s in &suite.scenarios {
            s.validate().unwrap();
            for q in &s.questions {
                let (d, st) = (q.get(Split::Dynamic), q.get(Split::Static));
                prop_assert_eq!(&d.target_region, &st.target_region);
                prop_assert_eq!(d.start, st.start);
                q.get(Split::Dynamic).check_multi_view(s.world(Split::Dynamic)).unwrap();
            }
            prop_assert!(s.world(Split::Static).humans.iter().all(|h| h.positions.windows(2).all(|p| p[0] == p[1])));
        }
        let dir = tempfile::tempdir().unwrap();
        write_suite(dir.path(), &suite).unwrap();
        let back = read_suite(dir.path()).unwrap();
        prop_assert_eq!(back, suite);
    }
}

#[test]
fn same_seed_same_suite() {
    let a = divrr::world::generate_suite(&small_gen(), 42).unwrap();
    let b = divrr::world::generate_suite(&small_gen(), 42).unwrap();
    let c = divrr::world::generate_suite(&small_gen(), 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
