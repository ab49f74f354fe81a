//! Stirring rotation rate check (scratch).
use playplan_core::dynamics::{PushTModel, WorldModel};
use playplan_core::geom::{Pose2, Vec2};
use playplan_core::rng::SeededRng;
use playplan_core::state::{clamp_action, Action, EnvState};

fn main() {
    let model = PushTModel::default();
    let mut rng = SeededRng::new(0);
    let dt = 0.2;
    for radius in [0.045f64, 0.06, 0.075, 0.09] {
        for dir in [1.0f64, -1.0] {
            let tee0 = Pose2::new(Vec2::new(0.5, 0.5), 0.0);
            let mut s = EnvState::push_t(Vec2::new(0.5 + radius, 0.5), tee0);
            let mut total_rot = 0.0;
            let mut prev = tee0.theta();
            let n = 60;
            for _ in 0..n {
                let c = s.tee().unwrap().position;
                let rel = s.pusher - c;
                // Tangential orbit with a gentle inward press.
                let tangent = Vec2::new(-rel.y, rel.x).normalized() * dir;
                let inward = -rel.normalized() * ((rel.norm() - radius) * 2.0 + 0.02);
                let v = (tangent * 0.18 + inward).normalized() * 0.2;
                s = model.step(&s, clamp_action(Action { v }, 0.25), &mut rng);
                let th = s.tee().unwrap().theta();
                total_rot += playplan_core::wrap_angle(th - prev);
                prev = th;
            }
            let drift = s.tee().unwrap().position.dist(Vec2::new(0.5, 0.5));
            println!(
                "stir r={radius} dir={dir:+}: {:.4} rad/step, drift {:.3} over {n} steps",
                total_rot / n as f64,
                drift
            );
        }
    }
}
