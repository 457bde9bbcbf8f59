#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use guardrail_core::mediator;
use guardrail_core::policy::{load_policy, print_policy, DecisionKind};
use guardrail_core::trajectory::{StepOutcome, TrajectoryStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Decides `requests` random requests against the pack generated from `seed`
/// and returns a description of every disagreement with the reference.
pub fn check_pack(seed: u64, requests: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ps = gen::policy(&mut rng);
    let text = print_policy(&ps);
    let policy = match load_policy(&text) {
        Ok(p) => p,
        Err(e) => {
            return vec![format!(
                "seed {seed}: generated pack rejected: {e:?}\n{text}"
            )]
        }
    };
    if policy.set() != &ps {
        return vec![format!("seed {seed}: pack does not survive print/parse")];
    }
    let mut failures = Vec::new();
    for n in 0..requests {
        let traj = format!("t{n}");
        let history: Vec<_> = (0..rng.random_range(0..4))
            .map(|i| gen::request(&mut rng, format!("h{n}-{i}"), &traj, i))
            .collect();
        let req = gen::request(&mut rng, format!("r{n}"), &traj, history.len() as u64);
        let now = gen::now(&mut rng);

        let mut store = TrajectoryStore::new(ps.accumulators.clone());
        store
            .begin_trajectory(&traj, req.principal.clone())
            .unwrap();
        for h in &history {
            store
                .record_step(&traj, h.clone(), DecisionKind::Allow, StepOutcome::Executed)
                .unwrap();
        }
        let got = mediator::evaluate(&policy, &req, store.get(&traj).unwrap(), now);
        let want = oracle::decide(&ps, &req, &history, now);
        let same = got.decision.kind == want.kind
            && got.decision.reason == want.reason
            && got.decision.tuple_id == want.tuple_id
            && got.decision.effective_request.args == want.args
            && got.context_incomplete() == want.context_incomplete;
        if !same {
            failures.push(format!(
                "seed {seed} request {n}: engine {:?} vs reference {:?}",
                got.decision, want
            ));
        }
    }
    failures
}
