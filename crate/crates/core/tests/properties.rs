mod common;

use chrono::{TimeZone, Utc};
use common::gen;
use guardrail_core::ledger::{verify_bytes, Ledger, OutcomeEvidence, RecordBody};
use guardrail_core::mediator::{self, combine};
use guardrail_core::policy::{load_policy, print_policy, DecisionKind, ValidatedPolicy};
use guardrail_core::rubric::{score_rubric, RubricAnswers};
use guardrail_core::trajectory::StepOutcome;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind() -> impl Strategy<Value = DecisionKind> {
    prop::sample::select(DecisionKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn combine_is_order_independent_and_dominant(mut kinds in prop::collection::vec(kind(), 1..8), extra in kind()) {
        let a = combine(kinds.clone()).unwrap();
        kinds.reverse();
        prop_assert_eq!(combine(kinds.clone()), Some(a));
        kinds.push(extra);
        prop_assert!(combine(kinds).unwrap() >= a);
        prop_assert_eq!(combine([a, DecisionKind::Deny]), Some(DecisionKind::Deny));
    }

    #[test]
    fn removing_a_field_on_a_guarded_action_never_relaxes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ps = gen::policy(&mut rng);
        let policy = ValidatedPolicy::new(ps.clone()).unwrap();
        let mut req = gen::request(&mut rng, "r".into(), "t", 0);
        // clamping a wrong-typed value is itself a deny, so keep values well-typed
        req.args.retain(|k, v| ps.fields.get(k).is_some_and(|t| v.conforms_to(*t)));
        let now = gen::now(&mut rng);
        let base = mediator::evaluate_fresh(&policy, &req, now).decision.kind;
        if ps.guard_for(&req.action).is_some() {
            for field in req.args.keys() {
                let mut cut = req.clone();
                cut.args.remove(field);
                let k = mediator::evaluate_fresh(&policy, &cut, now).decision.kind;
                prop_assert!(k == base || k == DecisionKind::Deny, "{field}: {base:?} -> {k:?}");
            }
        }
    }

    #[test]
    fn generated_packs_survive_print_and_parse(seed in any::<u64>()) {
        let ps = gen::policy(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = print_policy(&ps);
        let reparsed = load_policy(&text).map_err(|e| TestCaseError::fail(format!("{e:?}")))?;
        prop_assert_eq!(reparsed.set(), &ps);
        prop_assert_eq!(print_policy(reparsed.set()), text);
    }

    #[test]
    fn any_single_byte_edit_breaks_verification(pos in any::<prop::sample::Index>(), byte in any::<u8>(), signed in any::<bool>()) {
        let key = signed.then(|| b"k".to_vec());
        let mut ledger = Ledger::in_memory(key.clone());
        for i in 0..12 {
            let body = RecordBody::Outcome(OutcomeEvidence {
                request_id: format!("r{i}"),
                trajectory_id: "t".into(),
                outcome: StepOutcome::Executed,
                detail: String::new(),
            });
            ledger.append(Utc.timestamp_opt(1_767_600_000 + i, 0).unwrap(), body).unwrap();
        }
        let mut data = ledger.to_jsonl().into_bytes();
        let i = pos.index(data.len());
        prop_assume!(data[i] != byte);
        data[i] = byte;
        prop_assert!(!verify_bytes(&data, key.as_deref()).0.is_clean());
    }

    #[test]
    fn rubric_class_is_monotone(a in prop::array::uniform6(0u8..3), b in prop::array::uniform6(0u8..3)) {
        let hi: [u8; 6] = std::array::from_fn(|i| a[i].max(b[i]));
        let lo = score_rubric(&RubricAnswers::from_array(a).unwrap());
        prop_assert!(score_rubric(&RubricAnswers::from_array(hi).unwrap()) >= lo);
    }
}
