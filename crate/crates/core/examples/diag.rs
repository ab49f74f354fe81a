//! Scratch diagnostics for planner calibration (not part of the artifact).

use playplan_core::dynamics::{PushTModel, StochasticWrapper, StochasticWrapperParams};
use playplan_core::geom::{Pose2, Vec2};
use playplan_core::mcts::{plan, MctsParams, PlanOutcome};
use playplan_core::play::{fit_prior, gen_play, ExplorationParams, PriorParams};
use playplan_core::rewards::{GeometricGoal, GeometricReward, ProgressReward};
use playplan_core::rng::SeededRng;
use playplan_core::state::{EnvKind, EnvState};
use playplan_core::angdist;

fn main() {
    let model = PushTModel::default();
    let goal = Pose2::new(Vec2::new(0.5, 0.5), 0.0);
    let s0 = EnvState::push_t(Vec2::new(0.25, 0.25), goal);
    let dataset = gen_play(&model, &s0, &ExplorationParams::default(), 60_000, 1234);
    let prior = fit_prior(&dataset, PriorParams::default()).unwrap();
    let states: Vec<&EnvState> = dataset.states().collect();
    let plan_model = PushTModel::default();

    let n_trials = 24u64;
    for (max_iters, h_sim, peak_w, peak_s) in [
        (4000usize, 32usize, 10.0f64, 0.2f64),
        (4000, 48, 10.0, 0.2),
    ] {
        let w_theta = 1.0;
        let params = MctsParams { max_iters, h_sim, ..MctsParams::default() };
        let mut rng = SeededRng::new(777);
        let mut starts = Vec::new();
        for _ in 0..n_trials {
            starts.push(states[rng.index(states.len())].clone());
        }
        let t0 = std::time::Instant::now();
        let mut hits = [0usize; 4];
        let mut costs = Vec::new();
        for (trial, start) in starts.iter().enumerate() {
            let mut g = GeometricGoal::pose(goal);
            g.w_theta = w_theta;
            let reward = ProgressReward::anchored_peaked(
                GeometricReward::new(g, EnvKind::PushT).unwrap(),
                start,
                peak_w,
                peak_s,
            );
            let mut trial_rng = SeededRng::new(9000 + trial as u64);
            if let PlanOutcome::Found(p) = plan(&start, &prior, &plan_model, &reward, &params, &mut trial_rng) {
                let best = p.states.iter().filter_map(|s| {
                    let tee = s.tee().unwrap();
                    let y = angdist(tee.theta(), 0.0);
                    (y < 0.3).then(|| tee.position.dist(goal.position))
                }).fold(f64::MAX, f64::min);
                let joint = p.states.iter().map(|s| {
                    let tee = s.tee().unwrap();
                    tee.position.dist(goal.position) + 0.3 * angdist(tee.theta(), 0.0)
                }).fold(f64::MAX, f64::min);
                costs.push(joint);
                for (i, th) in [0.025, 0.05, 0.075, 0.1].iter().enumerate() {
                    if best < *th { hits[i] += 1; }
                }
            } else {
                costs.push(f64::NAN);
            }
        }
        let shown: Vec<String> = costs.iter().map(|c| format!("{c:.2}")).collect();
        println!(
            "iters={max_iters} h_sim={h_sim} peak=({peak_w},{peak_s}): success {:?}/{} in {:.1}s\n  costs: {}",
            hits, n_trials, t0.elapsed().as_secs_f64(), shown.join(" ")
        );
    }
}
