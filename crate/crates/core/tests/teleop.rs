use foresight::controller::ControllerMode;
use foresight::geometry::{HomTransform, Vec3};
use foresight::simlab::{bundled_scenario, Scenario};
use foresight::teleop::{replay, ClientMessage, SceneMessage, Session, SessionEvent, Snapshot, TeleopError, COMMAND_TIMEOUT};
use nalgebra::{Matrix3, Matrix4};
use proptest::prelude::*;

fn table() -> Scenario {
    bundled_scenario("carm_table").unwrap().unwrap()
}

fn session() -> Session {
    Session::start(&table(), ControllerMode::Future).unwrap()
}

#[test]
fn starts_at_rest() {
    let mut s = session();
    assert_eq!(s.tick_count(), 0);
    assert!(s.command().is_none());
    let q0 = s.state().q;
    let mut snaps = Vec::new();
    for k in 0..5 {
        snaps.push(s.tick(k as f64 * 0.1).unwrap());
    }
    assert_eq!(snaps[0].tick, 0);
    assert_eq!(snaps[0].q, [q0.x, q0.y, q0.z]);
    for snap in &snaps {
        assert_eq!((snap.seq, snap.command, snap.watchdog), (0, [0.0; 3], false));
        assert!(Vec3::from(snap.u).norm() < 1e-12);
    }
    assert!((s.state().q - q0).norm() < 1e-12);
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut bad = table();
    bad.controller.horizon = 0;
    assert!(matches!(Session::start(&bad, ControllerMode::Future), Err(TeleopError::Scenario(_))));
    // Switching mode resolves a fresh preset.
    assert_eq!(Session::start(&bad, ControllerMode::Baseline).unwrap().scenario().controller.horizon, 16);
}

#[test]
fn sessions_are_independent() {
    let (mut a, mut b) = (session(), session());
    a.submit_command(Vec3::new(0.2, 0.0, 0.0), 1, 0.0).unwrap();
    for k in 0..4 {
        a.tick(k as f64 * 0.1).unwrap();
        b.tick(k as f64 * 0.1).unwrap();
    }
    assert!(a.state().q != b.state().q);
    assert!(b.command().is_none());
}

#[test]
fn commands_are_clamped_and_latest_wins() {
    let mut s = session();
    let ack = s.submit_command(Vec3::new(0.1, 0.0, 0.0), 3, 0.0).unwrap();
    assert!(ack.accepted && !ack.clamped && !ack.stale);
    assert_eq!(s.command().unwrap().x_dot, Vec3::new(0.1, 0.0, 0.0));

    let ack = s.submit_command(Vec3::new(2.0, -2.0, 0.3), 4, 0.01).unwrap();
    assert!(ack.accepted && ack.clamped);
    assert_eq!(s.command().unwrap().x_dot, Vec3::new(0.5, -0.5, 0.3));

    for seq in [4, 2] {
        let ack = s.submit_command(Vec3::new(0.0, 0.0, 0.1), seq, 0.02).unwrap();
        assert!(ack.stale && !ack.accepted);
        assert_eq!(ack.latest, 4);
    }
    assert_eq!(s.command().unwrap().seq, 4);
    assert!(matches!(s.submit_command(Vec3::new(f64::NAN, 0.0, 0.0), 5, 0.0), Err(TeleopError::InvalidCommand(_))));
}

#[test]
fn closed_sessions_refuse_work() {
    let mut s = session();
    s.close();
    assert_eq!(s.submit_command(Vec3::zeros(), 1, 0.0).unwrap_err(), TeleopError::SessionClosed);
    assert_eq!(s.tick(0.0).unwrap_err(), TeleopError::SessionClosed);
}

#[test]
fn watchdog_zeroes_a_silent_command() {
    let mut s = session();
    s.submit_command(Vec3::new(0.2, 0.0, 0.0), 1, 0.0).unwrap();
    let held = s.tick(COMMAND_TIMEOUT).unwrap();
    assert_eq!((held.command, held.watchdog), ([0.2, 0.0, 0.0], false));
    let expired = s.tick(COMMAND_TIMEOUT + 0.1).unwrap();
    assert_eq!((expired.command, expired.watchdog), ([0.0; 3], true));
    assert_eq!(expired.seq, 1);
    s.submit_command(Vec3::new(0.2, 0.0, 0.0), 2, 0.7).unwrap();
    assert!(!s.tick(0.7).unwrap().watchdog);
}

#[test]
fn commands_take_effect_on_the_next_tick() {
    let mut s = session();
    let first = s.tick(0.0).unwrap();
    s.submit_command(Vec3::new(0.0, 0.0, 0.2), 1, 0.05).unwrap();
    let second = s.tick(0.1).unwrap();
    assert_eq!(first.command, [0.0; 3]);
    assert_eq!(second.command, [0.0, 0.0, 0.2]);
    assert!(Vec3::from(second.u).norm() > 0.0);
    assert_eq!(second.t, 0.1);
}

fn h(t: &HomTransform) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.translation);
    m
}

/// World hull poses by composing joint transforms from the Rodrigues formula.
fn independent_hull_poses(s: &Scenario, q: &Vec3) -> Vec<Matrix4<f64>> {
    let rot = |axis: &Vec3, angle: f64| {
        let k = axis.cross_matrix();
        let r: Matrix3<f64> = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m
    };
    let mut frames: Vec<Matrix4<f64>> = Vec::new();
    let mut t = Matrix4::<f64>::identity();
    for (i, j) in s.robot.joints().iter().enumerate() {
        t = t * h(&j.origin) * rot(&j.axis, q[i]);
        frames.push(t);
    }
    s.robot.links().iter().flat_map(|l| l.hulls.iter().map(|lh| frames[l.joint] * h(&lh.mount)).collect::<Vec<_>>()).collect()
}

#[test]
fn snapshot_poses_match_forward_kinematics() {
    let mut s = session();
    s.submit_command(Vec3::new(0.2, -0.3, 0.4), 1, 0.0).unwrap();
    for k in 0..8 {
        let snap = s.tick(k as f64 * 0.05).unwrap();
        let expected = independent_hull_poses(s.scenario(), &Vec3::from(snap.q));
        assert_eq!(snap.poses.len(), s.scenario().robot.hull_count());
        for (p, e) in snap.poses.iter().zip(&expected) {
            assert!((h(&p.transform()) - e).amax() < 1e-9);
        }
        let robot_vertex = |p: &[f64; 3]| Vec3::from(*p);
        for t in &snap.tracks {
            assert!((t.d - (robot_vertex(&t.p_robot) - robot_vertex(&t.p_obst)).norm()).abs() < 1e-9);
        }
    }
}

#[test]
fn messages_serialize_to_the_wire_format() {
    let mut s = session();
    let snap = s.tick(0.0).unwrap();
    let v: serde_json::Value = serde_json::to_value(&snap).unwrap();
    assert_eq!(v["type"], "snapshot");
    for key in ["tick", "t", "q", "xe", "u", "tracks", "slack", "status", "collision", "poses"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let track = &v["tracks"][0];
    for key in ["link", "p_robot", "p_obst", "d", "p_robot_future", "d_future"] {
        assert!(track.get(key).is_some(), "{key}");
    }
    let text = serde_json::to_string(&snap).unwrap();
    assert_eq!(serde_json::from_str::<Snapshot>(&text).unwrap(), snap);

    let scene: serde_json::Value = serde_json::to_value(s.scene()).unwrap();
    assert_eq!(scene["type"], "scene");
    assert_eq!(scene["robot"]["links"].as_array().unwrap().len(), 3);
    assert!(scene["robot"]["links"][0]["hulls"][0]["vertices"][0].as_array().unwrap().len() == 3);
    assert_eq!(scene["obstacles"][0]["id"], "table");
    let round: SceneMessage = serde_json::from_value(scene).unwrap();
    assert_eq!(round, s.scene());

    let cmd: ClientMessage = serde_json::from_str(r#"{"type":"command","seq":7,"vx":0.1,"vy":0,"vz":-0.2}"#).unwrap();
    assert_eq!(cmd, ClientMessage::Command { seq: 7, vx: 0.1, vy: 0.0, vz: -0.2 });
}

#[test]
fn scripted_teleop_keeps_the_distance_bound() {
    let scenario = table();
    let mut s = Session::start(&scenario, ControllerMode::Future).unwrap();
    let ts = s.ts();
    let bound = scenario.controller.d_lb - scenario.controller.eps_ub;
    let mut seq = 0;
    for k in 0..scenario.steps() {
        let now = k as f64 * ts;
        seq += 1;
        s.submit_command(scenario.script.at(now), seq, now).unwrap();
        let snap = s.tick(now).unwrap();
        assert!(!snap.collision);
        assert!(snap.min_distance.unwrap() >= bound - 1e-9, "tick {k}: {:?}", snap.min_distance);
    }
}

fn event() -> impl Strategy<Value = (bool, u64, [f64; 3], f64)> {
    (any::<bool>(), 0u64..40, prop::array::uniform3(-0.7..0.7f64), 0.0..0.4f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn replayed_logs_reproduce_snapshots(events in prop::collection::vec(event(), 1..30)) {
        let scenario = table();
        let mut live = Session::start(&scenario, ControllerMode::Future).unwrap();
        let mut snaps = Vec::new();
        let mut now = 0.0;
        let mut last_seq = 0;
        for (is_command, seq, v, dt) in events {
            now += dt;
            if is_command {
                live.submit_command(Vec3::from(v), seq, now).unwrap();
            } else {
                let snap = live.tick(now).unwrap();
                prop_assert!(snap.seq >= last_seq);
                last_seq = snap.seq;
                snaps.push(snap);
            }
        }
        let log: Vec<SessionEvent> = live.log().to_vec();
        let text = serde_json::to_string(&log).unwrap();
        let parsed: Vec<SessionEvent> = serde_json::from_str(&text).unwrap();
        let replayed = replay(&scenario, ControllerMode::Future, &parsed).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&replayed).unwrap(),
            serde_json::to_string(&snaps).unwrap()
        );
    }
}
