mod support;

use proptest::prelude::*;
use serde_json::{json, Value};
use support::*;

#[derive(Clone, Debug)]
enum Op {
    Message,
    SelectIndices(Vec<usize>),
    SelectLiteral,
    ClearSelection,
    Discover(u8),
    ReadModel,
    ReadRules,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Message),
        prop::collection::vec(0usize..6, 0..3).prop_map(Op::SelectIndices),
        Just(Op::SelectLiteral),
        Just(Op::ClearSelection),
        (0u8..=4).prop_map(Op::Discover),
        Just(Op::ReadModel),
        Just(Op::ReadRules),
    ]
}

const RESPONSES: [&str; 3] = [
    "Which check happens first?",
    FIVE_RULES,
    "{\"constraints\": [bad",
];

async fn apply(api: &Api, s: &str, op: &Op) {
    match op {
        Op::Message => {
            api.message(s, "the documents are checked").await;
        }
        Op::SelectIndices(i) => {
            api.select(s, json!({ "indices": i })).await;
        }
        Op::SelectLiteral => {
            api.select(s, json!({ "rules": ["AtMost1(A-created)"] }))
                .await;
        }
        Op::ClearSelection => {
            api.select(s, json!({})).await;
        }
        Op::Discover(k) => {
            api.discover(s, json!({ "sup": f64::from(*k) / 4.0 })).await;
        }
        Op::ReadModel => {
            api.get(&format!("/sessions/{s}/model?format=json")).await;
        }
        Op::ReadRules => {
            api.get(&format!("/sessions/{s}/rules")).await;
        }
    }
}

/// Session state without the identifiers that differ between servers.
async fn state(api: &Api, s: &str) -> Value {
    let mut v = api.get(&format!("/sessions/{s}")).await.json();
    v.as_object_mut().unwrap().remove("id");
    v.as_object_mut().unwrap().remove("log_id");
    let model = api.get(&format!("/sessions/{s}/model?format=text")).await;
    v["model"] = Value::String(model.text());
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sessions_do_not_affect_each_other(
        ops_a in prop::collection::vec(op(), 0..8),
        ops_b in prop::collection::vec(op(), 0..8),
        order in prop::collection::vec(any::<bool>(), 16),
    ) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        let (together, alone) = rt.block_on(async {
            let shared = Api::new();
            let a = shared.session(&RESPONSES, true).await;
            let b = shared.session(&RESPONSES, true).await;
            let (mut ia, mut ib) = (0, 0);
            for take_a in order.iter().copied().chain(std::iter::repeat_n(true, 8)).chain(std::iter::repeat_n(false, 8)) {
                if take_a && ia < ops_a.len() {
                    apply(&shared, &a, &ops_a[ia]).await;
                    ia += 1;
                } else if !take_a && ib < ops_b.len() {
                    apply(&shared, &b, &ops_b[ib]).await;
                    ib += 1;
                }
            }
            let together = state(&shared, &b).await;

            let solo = Api::new();
            let b_alone = solo.session(&RESPONSES, true).await;
            for op in &ops_b {
                apply(&solo, &b_alone, op).await;
            }
            (together, state(&solo, &b_alone).await)
        });
        prop_assert_eq!(together, alone);
    }
}
