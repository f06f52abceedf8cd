mod common;

use std::collections::BTreeMap;

use autobus_core::orchestrator::{replay, run_initiative, ApprovalPolicy, Decision, EventKind, RunConfig, Schedule};
use common::study::{load, study_dir};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// High-impact sends happen only after an approving decision for the
    /// same task, whatever the data, schedule or decision.
    #[test]
    fn no_high_impact_send_before_approval(
        seed in 0u64..1000,
        n in 0usize..120,
        approve in any::<bool>(),
        schedule in prop_oneof![Just(Schedule::Parallel), Just(Schedule::Serial), Just(Schedule::SerialReversed)],
    ) {
        let dir = study_dir(seed, n);
        let decision = if approve { Decision::Approved } else { Decision::Rejected };
        let policy = ApprovalPolicy::Scripted(BTreeMap::from([("task3".to_string(), decision)]));
        let config = RunConfig::new("r1").with_approval(policy).with_schedule(schedule);
        let (result, handle) = run_initiative(load(dir.path()), config).unwrap();
        let events = handle.events();
        let mut approved = false;
        let mut sends = 0;
        for e in &events {
            if e.kind == EventKind::ApprovalDecided && e.payload["decision"] == "approved" {
                approved = true;
            }
            if e.kind == EventKind::ActionInvoked && e.payload["tool"] == "marketing_campaign" {
                prop_assert!(approved, "send at seq {} precedes approval", e.seq);
                sends += 1;
            }
        }
        prop_assert_eq!(sends, usize::from(approve));
        prop_assert_eq!(handle.records("marketing_campaign").len(), usize::from(approve));
        prop_assert_eq!(replay(&events).unwrap(), result.summary);
    }
}
