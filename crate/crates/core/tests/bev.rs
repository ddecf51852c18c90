use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sti_core::bev::{
    build_sample, build_samples, label_index, label_vector, pixel_transform, read_dataset, write_dataset, BevConfig,
};
use sti_core::fixtures::{constant_velocity_scene, cruising_ego, random_scene, straight_road, worked_example};
use sti_core::geometry::{FrameTransform, OrientedBox, Vec2};
use sti_core::reach::{ActorMask, PreparedQuery, ReachConfig, Snapshot};
use sti_core::scene::{ActorState, ActorTrack, Scene};
use sti_core::Error;

/// The transform written out from scratch with the scale factors inlined.
fn oracle(x: f64, y: f64, cfg: &BevConfig) -> (usize, usize) {
    let sx = 2.0 * cfg.r_x / cfg.h as f64;
    let sy = 2.0 * cfg.r_y / cfg.w as f64;
    (((x + cfg.r_x) / sx).floor() as usize, ((y + cfg.r_y) / sy).floor() as usize)
}

#[test]
fn transform_matches_formula_on_random_points() {
    let cfg = BevConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        let x = rng.gen_range(-cfg.r_x..cfg.r_x);
        let y = rng.gen_range(-cfg.r_y..cfg.r_y);
        let got = pixel_transform(x, y, &cfg).unwrap();
        assert_eq!(got, oracle(x, y, &cfg), "({x}, {y})");
        assert!(got.0 < cfg.h && got.1 < cfg.w);
    }
}

#[test]
fn out_of_view_is_signalled() {
    let cfg = BevConfig::default();
    for (x, y) in [(-17.51, 0.0), (17.5, 0.0), (0.0, 70.0), (0.0, -80.0), (f64::NAN, 0.0)] {
        assert!(matches!(pixel_transform(x, y, &cfg), Err(Error::OutOfView { .. })));
    }
}

#[test]
fn config_validation() {
    assert!(BevConfig::default().validate().is_ok());
    assert!(BevConfig { a: 129, ..BevConfig::default() }.validate().is_err());
    assert!(BevConfig { b: 257, ..BevConfig::default() }.validate().is_err());
    assert!(BevConfig { r_x: 0.0, ..BevConfig::default() }.validate().is_err());
}

#[test]
fn sample_shape_and_static_frames() {
    let scene = worked_example();
    let mut frozen = scene.clone();
    for track in &mut frozen.actors {
        let first = track.states[0];
        track.states = vec![first];
    }
    let cfg = BevConfig::default();
    let s = build_sample(&frozen, 0, 30, &cfg, &ReachConfig::default()).unwrap();
    assert_eq!(s.frames.len(), 31);
    assert!(s.frames.iter().all(|f| f.h == 128 && f.w == 512));
    assert!(s.frames.windows(2).all(|w| w[0].count_ones() == w[1].count_ones()));
    let reference = &s.frames[0];
    for f in &s.frames[1..] {
        for x in 0..cfg.h {
            for y in 0..cfg.w {
                assert_eq!(f.get(x, y), reference.get(x, y));
            }
        }
    }
    assert_eq!(s.label.len(), 132);
    let e = &frozen.ego[0];
    assert_eq!(s.ego_feature, [e.v_long, e.a_long, e.v_lat, e.a_lat]);
}

#[test]
fn moving_actor_translates_across_frames() {
    let dt = 0.1;
    let track = ActorTrack {
        actor_id: "a".into(),
        states: (0..=40)
            .map(|t| ActorState {
                t,
                x: 5.0 + 12.0 * dt * t as f64,
                y: 3.7,
                yaw: 0.0,
                length: 4.5,
                width: 2.0,
            })
            .collect(),
    };
    let ego = cruising_ego(0, 0.0, 0.0, 8.0);
    let scene = Scene {
        dt,
        actors: vec![track.clone()],
        ego: vec![ego],
        lane_map: straight_road(2, 3.7, -80.0, 80.0),
    };
    let cfg = BevConfig { boundary_margin: 0.0, ..BevConfig::default() };
    let s = build_sample(&scene, 0, 30, &cfg, &ReachConfig::default()).unwrap();
    let tf = FrameTransform::at(ego.position(), ego.yaw);
    let sx = 2.0 * cfg.r_x / cfg.h as f64;
    let sy = 2.0 * cfg.r_y / cfg.w as f64;
    for (j, frame) in s.frames.iter().enumerate() {
        let pose = track.state_at(j as f64).unwrap();
        let b = OrientedBox::new(tf.point(pose.position()), tf.heading(pose.yaw), pose.length, pose.width);
        let mut occupied = 0;
        for x in 0..cfg.h {
            for y in 0..cfg.w {
                let (xm, ym) = (-cfg.r_x + (x as f64 + 0.5) * sx, -cfg.r_y + (y as f64 + 0.5) * sy);
                let p = Vec2::new(ym, -xm);
                let on_road = p.y >= -1.85 && p.y <= 3.7 + 1.85;
                if b.contains(p) {
                    occupied += 1;
                    assert!(!frame.get(x, y), "frame {j} pixel ({x}, {y}) inside actor");
                } else {
                    assert_eq!(frame.get(x, y), on_road, "frame {j} pixel ({x}, {y})");
                }
            }
        }
        assert!(occupied > 100, "frame {j}: actor covers {occupied} pixels");
    }
}

#[test]
fn reachable_goal_straight_ahead_sets_one_bit() {
    let cfg = BevConfig::default();
    let bit = label_index(Vec2::new(10.0, 0.0), &cfg).unwrap();
    let (x, y) = oracle(0.0, 10.0, &cfg);
    assert_eq!((x, y), (64, 292));
    assert_eq!(bit, (x / 11) * 12 + (y - 256) / 20);
}

#[test]
fn dataset_round_trip() {
    let cfg = BevConfig::default();
    let reach = ReachConfig::default();
    let mut samples = Vec::new();
    let mut seed = 0;
    while samples.len() < 100 {
        samples.extend(build_samples(&random_scene(seed, 10), 30, &cfg, &reach).unwrap());
        seed += 1;
    }
    samples.truncate(100);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(write_dataset(&samples, &cfg, dir.path()).unwrap(), 100);
    let (read_cfg, back) = read_dataset(dir.path()).unwrap();
    assert_eq!(read_cfg, cfg);
    assert_eq!(back, samples);
}

#[test]
fn empty_dataset_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BevConfig::default();
    assert_eq!(write_dataset(&[], &cfg, dir.path()).unwrap(), 0);
    let (_, back) = read_dataset(dir.path()).unwrap();
    assert!(back.is_empty());
}

#[test]
fn mixed_configs_rejected() {
    let scene = constant_velocity_scene(3, 5);
    let reach = ReachConfig::default();
    let a = BevConfig::default();
    let b = BevConfig { r_y: 60.0, ..a };
    let samples = vec![
        build_sample(&scene, 0, 5, &a, &reach).unwrap(),
        build_sample(&scene, 1, 5, &b, &reach).unwrap(),
    ];
    let dir = tempfile::tempdir().unwrap();
    let err = write_dataset(&samples, &a, dir.path()).unwrap_err();
    assert!(err.to_string().contains("config mismatch"));
}

#[test]
fn corrupted_blob_detected() {
    let scene = constant_velocity_scene(1, 3);
    let cfg = BevConfig::default();
    let samples = build_samples(&scene, 5, &cfg, &ReachConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&samples, &cfg, dir.path()).unwrap();
    let blob = dir.path().join("sample_000001.bin");
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[20] ^= 1;
    std::fs::write(&blob, bytes).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(Error::Dataset { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn label_bits_match_occupied_grids(seed in 0u64..10_000, t in 0i64..4) {
        let scene = random_scene(seed, 4);
        let cfg = BevConfig::default();
        let reach_cfg = ReachConfig::default();
        let snap = Snapshot::from_scene(&scene, t, 30).unwrap();
        let reach = PreparedQuery::new(&snap, &reach_cfg).reachable(&ActorMask::AllPresent).unwrap();
        let label = label_vector(&reach, &cfg);
        prop_assert_eq!(label.len(), 132);
        let mut occupied = vec![false; 132];
        for (goal, _) in reach.goals.cells.iter().zip(&reach.reachable).filter(|(_, r)| **r) {
            let (xm, ym) = (-goal.center.y, goal.center.x);
            if xm < -cfg.r_x || xm >= cfg.r_x || ym < -cfg.r_y || ym >= cfg.r_y {
                continue;
            }
            let (x, y) = oracle(xm, ym, &cfg);
            if y < 256 || x / 11 >= 11 || (y - 256) / 20 >= 12 {
                continue;
            }
            occupied[(x / 11) * 12 + (y - 256) / 20] = true;
        }
        prop_assert_eq!(label, occupied);
    }
}
